"""Prefix-routed shard overlay: labels, routing, splits and merges.

Shard labels are binary prefixes; together they must stay prefix-free and
cover the whole credential space, so every credential routes to exactly one
shard.  Size bounds drive topology: a shard splits on the next bit of its
label when it outgrows s_max and merges into its sibling prefix when it
falls under s_min.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

from .credentials import Credential
from .ledger import Validity, VALID
from .membership import ShardView, install_threshold, view_digest
from .crypto import DIGEST_LEN, verify_sig

ROOT_LABEL = ""


@dataclass(frozen=True)
class SizeBounds:
    """Shard size window; s_max must leave room for a clean two-way split."""

    s_min: int
    s_max: int

    def __post_init__(self):
        if self.s_min < 1:
            raise ValueError("s_min must be positive")
        if self.s_max < 2 * self.s_min:
            raise ValueError("s_max must be at least 2 * s_min")


def digest_bit(value: bytes, index: int) -> int:
    """MSB-first bit of a digest."""
    if index < 0 or index >= 8 * len(value):
        raise IndexError("bit index outside digest")
    return (value[index // 8] >> (7 - (index % 8))) & 1


def label_matches(label: str, value: bytes) -> bool:
    return all(digest_bit(value, i) == int(bit) for i, bit in enumerate(label))


def check_prefix_free_cover(labels: Iterable[str]) -> Validity:
    """A label set is a valid overlay iff it is prefix-free and covers the
    whole bit space (every infinite bit string has exactly one prefix)."""
    labels = sorted(labels)
    if not labels:
        return Validity(False, "empty")
    if len(set(labels)) != len(labels):
        return Validity(False, "duplicate")
    for i, a in enumerate(labels):
        for b in labels[i + 1 :]:
            if b.startswith(a) or a.startswith(b):
                return Validity(False, "prefix-collision")
    # Coverage: the max depth is bounded, so walk the binary trie.
    depth = max(len(l) for l in labels)
    if depth > 8 * DIGEST_LEN:
        return Validity(False, "depth")
    frontier = [ROOT_LABEL]
    label_set = set(labels)
    while frontier:
        node = frontier.pop()
        if node in label_set:
            continue
        if len(node) >= depth:
            return Validity(False, "coverage-gap")
        frontier.append(node + "0")
        frontier.append(node + "1")
    return VALID


def route(directory: Mapping[str, ShardView], value: bytes) -> str:
    """Label of the unique shard whose prefix matches the credential value."""
    for label in directory:
        if label_matches(label, value):
            return label
    raise LookupError("no shard label matches the value: broken cover")


@dataclass(frozen=True)
class SplitPlan:
    parent: str
    children: tuple[tuple[str, tuple[Credential, ...]], ...]


def maybe_split(label: str, view: ShardView, bounds: SizeBounds) -> SplitPlan | None:
    """Split decision for an oversized shard.

    Members are partitioned by the credential bit right after the current
    prefix.  A split that would leave either child under s_min is deferred
    (the shard simply stays oversized until churn rebalances it).
    """
    members = view.members()
    if len(members) <= bounds.s_max:
        return None
    bit_index = len(label)
    zeros = tuple(c for c in members if digest_bit(c.value, bit_index) == 0)
    ones = tuple(c for c in members if digest_bit(c.value, bit_index) == 1)
    if len(zeros) < bounds.s_min or len(ones) < bounds.s_min:
        return None  # degenerate split deferred
    return SplitPlan(
        parent=label, children=((label + "0", zeros), (label + "1", ones))
    )


@dataclass(frozen=True)
class MergePlan:
    new_label: str
    absorbed: tuple[str, ...]
    members: tuple[Credential, ...]


def maybe_merge(
    label: str, view: ShardView, directory: Mapping[str, ShardView], bounds: SizeBounds
) -> MergePlan | None:
    """Merge decision for an undersized shard.

    The shard folds into its sibling subtree: every shard sharing the
    parent prefix is absorbed into one shard under that prefix.  The root
    shard has no sibling and cannot merge; callers flag it degraded.
    """
    if len(view.members()) >= bounds.s_min:
        return None
    if label == ROOT_LABEL:
        return None
    parent = label[:-1]
    absorbed = tuple(sorted(l for l in directory if l.startswith(parent)))
    members: list[Credential] = []
    for l in absorbed:
        members.extend(directory[l].members())
    members.sort(key=lambda c: c.value)
    return MergePlan(new_label=parent, absorbed=absorbed, members=tuple(members))


def shard_count_bounds(n_members: int, bounds: SizeBounds) -> tuple[int, int]:
    """Admissible shard-count window for n routed members."""
    low = max(1, -(-n_members // bounds.s_max))  # ceil
    high = n_members // max(1, bounds.s_min - 1) + 1
    return low, high


def verify_view_transition(
    old_view: ShardView,
    new_view: ShardView,
    height: int,
    expected_expiries: set[Credential],
    mu_core: Fraction,
    s_min: int,
    signatures: Iterable[tuple[bytes, object]] = (),
) -> Validity:
    """Network-side check of a diffused view against the registered one.

    A lying shard can misreport its core or omit newcomers, but it cannot
    keep expired members, shrink or grow the core, claim members routed
    elsewhere, or skip the signature quorum of the previous core.
    """
    if new_view.label != old_view.label:
        return Validity(False, "label")
    if new_view.height != height:
        return Validity(False, "height")
    # Core is full-size whenever the shard has enough members; an honest
    # degraded shard promotes everyone it has.
    if len(new_view.core) != min(s_min, len(new_view.members())):
        return Validity(False, "core-size")
    # Expiry is judged against the last accepted block (height - 1): a
    # credential expiring exactly now still produces this height's block
    # and hands over afterwards.
    for cred in new_view.members():
        if cred in expected_expiries or cred.expiry_height < height:
            return Validity(False, "expired-member")
        if cred.anchor_height > height or cred.anchor_height >= cred.expiry_height:
            return Validity(False, "window")
        if not label_matches(new_view.label, cred.value):
            return Validity(False, "routing")

    reference = s_min if len(old_view.core) >= s_min else len(old_view.core)
    threshold = install_threshold(mu_core, reference)
    digest = view_digest(new_view)
    old_core_pks = {c.pk for c in old_view.core}
    signers = set()
    for pk, sig in signatures:
        if pk in old_core_pks and pk not in signers and verify_sig(pk, digest, sig):
            signers.add(pk)
    if len(signers) < threshold:
        return Validity(False, "quorum")
    return VALID
