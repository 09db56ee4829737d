"""Per-height block pipeline pieces: committee election, proposal
construction and certification.

The committee for height h is drawn from the previous block's seed, so it
cannot be computed before that block is decided.  Each committee shard
builds its proposal from a vector agreement over its core members'
(pending transactions, VRF contribution) pairs; the decided VRF values
define the next seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .crypto import Prg, Signature, VrfOutput, sign
from .ledger import (
    Block,
    BlockHeader,
    ShardSignature,
    Transaction,
    apply_transaction,
    block_core_digest,
    block_seed,
    body_digest,
    header_hash,
    shard_signature_digest,
    validate_transaction,
)
from .membership import ShardView, install_threshold
from .protocols import MessageMeter, ParticipantSet, VectorDecision, vector_consensus
from .sampling import sample_without_replacement


def committee_size(f_shard: int, mu_corrupted: Fraction) -> int:
    """Shards needed so that tolerating f_shard corrupted ones keeps the
    corrupted committee fraction within mu_corrupted."""
    if f_shard < 0:
        raise ValueError("f_shard must be non-negative")
    if mu_corrupted <= 0:
        raise ValueError("mu_corrupted must be positive")
    return math.ceil(Fraction(f_shard) / Fraction(mu_corrupted)) + 1


@dataclass(frozen=True)
class Committee:
    labels: tuple[str, ...]
    size: int
    shortfall: bool = False


def elect_committee(eligible: Iterable[str], prev_seed: bytes, s_c: int) -> Committee:
    """Deterministic committee from the previous block seed.

    Labels are ordered lexicographically, then repeatedly sampled without
    replacement by PRG draws; the resulting order is also the leader order.
    If fewer than ``s_c`` shards are eligible the committee is every
    eligible shard and the shortfall is flagged (parameterization fault).
    """
    pool = sorted(eligible)
    if len(pool) < s_c:
        return Committee(labels=tuple(pool), size=s_c, shortfall=True)
    prg = Prg(prev_seed)
    picked = sample_without_replacement(prg, pool, s_c)
    return Committee(labels=tuple(picked), size=s_c, shortfall=False)


@dataclass(frozen=True)
class Proposal:
    block: Block
    shard: str
    decided_vector: tuple


def build_proposal(
    label: str,
    view: ShardView,
    prev_header: BlockHeader,
    state: Mapping,
    member_inputs: Mapping[bytes, tuple[tuple[Transaction, ...], VrfOutput]],
    stake_cap: int,
    byzantine: frozenset = frozenset(),
    decision: VectorDecision | None = None,
    meter: MessageMeter | None = None,
) -> Proposal | None:
    """Run a shard's internal proposal agreement and assemble the block.

    ``member_inputs`` holds, per core member, what that member would
    honestly propose.  The body is the union of the decided transaction
    lists: duplicates collapse by id and the union is validated
    sequentially in id order, so of two conflicting spends exactly the one
    with the lexicographically smallest id survives.  Returns None when the
    decided vector carries no VRF value at all (no seed can be formed).
    """
    parts = ParticipantSet(
        members=tuple(c.pk for c in view.core),
        byzantine=frozenset(pk for pk in byzantine if pk in {c.pk for c in view.core}),
    )
    vector = vector_consensus(parts, dict(member_inputs), decision, meter)

    vrf_proofs = []
    union: dict[bytes, Transaction] = {}
    for pk, slot in zip(parts.members, vector):
        if slot is None:
            continue
        txs, vrf_out = slot
        vrf_proofs.append((pk, vrf_out))
        for tx in txs:
            union.setdefault(tx.tx_id, tx)
    if not vrf_proofs:
        return None

    body = []
    running = dict(state)
    for tx_id in sorted(union):
        tx = union[tx_id]
        if validate_transaction(running, tx, stake_cap):
            running = apply_transaction(running, tx, prev_header.height + 1)
            body.append(tx)

    body_tuple = tuple(body)
    header = BlockHeader(
        prev_hash=header_hash(prev_header),
        height=prev_header.height + 1,
        seed=block_seed([out.value for _, out in vrf_proofs]),
        body_hash=body_digest(body_tuple),
        vrf_proofs=tuple(vrf_proofs),
        proposer_label=label,
        certificate=(),
    )
    return Proposal(
        block=Block(header=header, body=body_tuple),
        shard=label,
        decided_vector=tuple(vector),
    )


def shard_sign_block(
    label: str,
    view: ShardView,
    block: Block,
    keyring: Mapping[bytes, bytes],
    mu_core: Fraction,
    s_min: int,
    signer_pks: Sequence[bytes] | None = None,
) -> ShardSignature | None:
    """Endorse a decided block with enough core-member signatures.

    ``keyring`` maps pk to sk for the members willing to sign; signers
    default to core order.  Returns None if the willing signers cannot
    reach the quorum.
    """
    quorum = install_threshold(mu_core, s_min if len(view.core) >= s_min else len(view.core))
    msg = shard_signature_digest(label, block_core_digest(block.header))
    pks = signer_pks if signer_pks is not None else [c.pk for c in view.core]
    sigs: list[tuple[bytes, Signature]] = []
    for pk in pks:
        sk = keyring.get(pk)
        if sk is None:
            continue
        sigs.append((pk, sign(sk, msg)))
        if len(sigs) == quorum:
            return ShardSignature(label=label, view_height=view.height, member_sigs=tuple(sigs))
    return None


def attach_certificate(block: Block, shard_sigs: Sequence[ShardSignature]) -> Block:
    header = BlockHeader(
        prev_hash=block.header.prev_hash,
        height=block.header.height,
        seed=block.header.seed,
        body_hash=block.header.body_hash,
        vrf_proofs=block.header.vrf_proofs,
        proposer_label=block.header.proposer_label,
        certificate=tuple(sorted(shard_sigs, key=lambda s: s.label)),
    )
    return Block(header=header, body=block.body)
