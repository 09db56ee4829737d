"""Contract-level intra-shard and inter-shard agreement primitives.

These are not message-level protocol implementations.  Each primitive
checks whether the corruption among its participants is within the bound
its contract assumes.  Within the bound, the contract's guarantees are
produced directly (and the adversary only gets the freedom the contract
leaves it: nulling slots, withholding, delaying).  Above the bound the
contract is void and an adversary hook dictates the outcome.  Message
complexity is accounted abstractly: an instance over n participants
charges n^3 unit messages to the meter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

from .crypto import tagged_hash


@dataclass
class MessageMeter:
    """Abstract message accounting; one unit is one protocol message."""

    unit: int = 1
    total: int = 0

    def charge_instance(self, n_participants: int):
        self.total += (n_participants ** 3) * self.unit

    def charge(self, count: int):
        self.total += count * self.unit


@dataclass(frozen=True)
class ParticipantSet:
    """An ordered protocol membership with its corrupted subset."""

    members: tuple
    byzantine: frozenset

    def __post_init__(self):
        if not frozenset(self.members) >= self.byzantine:
            raise ValueError("byzantine members must belong to the participant set")

    @property
    def n(self) -> int:
        return len(self.members)

    def within(self, bound: Fraction) -> bool:
        """True while the corrupted count stays within bound * n."""
        return len(self.byzantine) <= bound * self.n


@dataclass(frozen=True)
class VectorDecision:
    """Adversary choices for one vector agreement instance.

    ``byzantine_values`` maps a corrupted slot to its proposed value (absent
    means null); ``null_honest`` asks the scheduler to null honest slots.
    When the instance is outside its contract, ``dictated`` replaces the
    whole vector.
    """

    byzantine_values: Mapping = field(default_factory=dict)
    null_honest: frozenset = field(default_factory=frozenset)
    dictated: Sequence | None = None


def vector_consensus(
    parts: ParticipantSet,
    honest_inputs: Mapping,
    decision: VectorDecision | None = None,
    meter: MessageMeter | None = None,
) -> list:
    """Agree on one value per participant (None for nulled slots).

    The contract binds while the corrupted count stays at or below
    floor((n-1)/3).  Within it, the decided vector holds the true input of
    every non-nulled honest member and at least f+1 slots stay non-null
    (f the corrupted count), so at least one honest input always survives.
    Above it the adversary dictates the vector.
    """
    if meter is not None:
        meter.charge_instance(parts.n)
    decision = decision or VectorDecision()

    if len(parts.byzantine) > (parts.n - 1) // 3:
        if decision.dictated is None:
            return [None] * parts.n
        if len(decision.dictated) != parts.n:
            raise ValueError("dictated vector has wrong arity")
        return list(decision.dictated)

    f = len(parts.byzantine)
    vector: list = []
    for member in parts.members:
        if member in parts.byzantine:
            vector.append(decision.byzantine_values.get(member))
        elif member in decision.null_honest:
            vector.append(None)
        else:
            vector.append(honest_inputs.get(member))

    # Validity floor: the adversary cannot null below f + 1 live slots.
    non_null = sum(1 for v in vector if v is not None)
    if non_null < f + 1:
        for i, member in enumerate(parts.members):
            if vector[i] is None and member not in parts.byzantine:
                vector[i] = honest_inputs.get(member)
                non_null += 1 if vector[i] is not None else 0
                if non_null >= f + 1:
                    break
    return vector


def beacon_proof(seed: bytes) -> bytes:
    return tagged_hash(b"beacon-proof", seed)


def verify_beacon(seed: bytes, proof: bytes) -> bool:
    return proof == beacon_proof(seed)


def random_beacon(
    parts: ParticipantSet,
    entropy: bytes,
    mu_core: Fraction,
    chosen: bytes | None = None,
    meter: MessageMeter | None = None,
) -> tuple[bytes, bytes]:
    """Produce the shard's shared randomness for this height.

    ``entropy`` must come from a stream consumed strictly after all earlier
    adversary decisions, which is what makes the honest output unpredictable
    and bias-free.  A corrupted quorum may substitute any digest of its
    choice (``chosen``); the proof still verifies, which is exactly the
    modeled threat.
    """
    if meter is not None:
        meter.charge_instance(parts.n)
    if not parts.within(mu_core) and chosen is not None:
        seed = chosen
    else:
        seed = tagged_hash(b"beacon", entropy)
    return seed, beacon_proof(seed)


@dataclass(frozen=True)
class BaDecision:
    """Adversary choices for one inter-shard agreement instance.

    ``silent_leaders`` forces view changes; ``substitute`` lets a corrupted
    leader propose an arbitrary block (still subject to validity when the
    contract binds); ``dictated`` (label of winning proposal or None) takes
    over when the committee is corrupted beyond its bound."""

    silent_leaders: frozenset = field(default_factory=frozenset)
    substitute: Mapping = field(default_factory=dict)
    dictated: object | None = None


@dataclass(frozen=True)
class BaOutcome:
    value: object | None
    leader: object | None
    rounds: int
    contract_held: bool


def verifiable_ba(
    parts: ParticipantSet,
    proposals: Mapping,
    validity: Callable[[object], bool],
    mu_corrupted: Fraction,
    decision: BaDecision | None = None,
    meter: MessageMeter | None = None,
    instance_weight: int = 1,
) -> BaOutcome:
    """Leader-based agreement on one externally-valid proposal.

    Leaders are tried in membership order; a silent or invalid leader burns
    a round and the next leader takes over.  Within the corruption bound
    the decided value is always one that passes ``validity``.  Above the
    bound the adversary dictates (or withholds) the outcome.
    """
    if meter is not None:
        meter.charge_instance(parts.n * instance_weight)
    decision = decision or BaDecision()

    if not parts.within(mu_corrupted):
        dictated = decision.dictated
        return BaOutcome(value=dictated, leader=None, rounds=1, contract_held=False)

    rounds = 0
    for leader in parts.members:
        rounds += 1
        if leader in parts.byzantine:
            if leader in decision.silent_leaders:
                continue
            candidate = decision.substitute.get(leader, proposals.get(leader))
        else:
            candidate = proposals.get(leader)
        if candidate is None:
            continue
        if validity(candidate):
            return BaOutcome(value=candidate, leader=leader, rounds=rounds, contract_held=True)
    return BaOutcome(value=None, leader=None, rounds=rounds, contract_held=True)


def shard_entropy(master_seed: bytes, label: str, height: int, purpose: bytes) -> bytes:
    """Per-shard, per-height entropy substream.

    Derived only from static identifiers, so replaying a scenario with
    different adversary decisions leaves every honest entropy draw intact.
    """
    return tagged_hash(
        b"entropy", master_seed, purpose, label.encode("utf-8"), height.to_bytes(8, "big", signed=True)
    )
