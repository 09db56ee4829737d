"""Epoch-anchored participation credentials.

A UTXO created at height h0 earns its first credential one full epoch
later, derived from the seed of the anchor block; the credential perishes
one epoch after its anchor.  Spending the UTXO does not revoke an already
anchored credential: eligibility is evaluated against the UTXO set snapshot
at the anchor height, so a credential stays usable until its expiry.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .crypto import encode_bytes, encode_int, tagged_hash
from .ledger import Utxo


@dataclass(frozen=True)
class Credential:
    value: bytes
    pk: bytes
    anchor_height: int
    expiry_height: int


def credential_blob(cred: Credential) -> bytes:
    return b"".join(
        (
            encode_bytes(cred.value),
            encode_bytes(cred.pk),
            encode_int(cred.anchor_height),
            encode_int(cred.expiry_height),
        )
    )


def epoch_anchor(h0: int, h: int, epoch_length: int) -> int:
    """Anchor height of the credential a UTXO from h0 holds at height h.

    The first epoch only completes at h0 + epoch_length; before that there
    is no credential to anchor.
    """
    if epoch_length < 1:
        raise ValueError("epoch length must be positive")
    if h < h0 + epoch_length:
        raise ValueError("no credential yet: first epoch not complete")
    return h0 + ((h - h0) // epoch_length) * epoch_length


def derive_credential(
    pk: bytes, h0: int, h: int, chain: Sequence, epoch_length: int
) -> Credential:
    """Credential value for ``pk`` at height ``h``: a digest of the public
    key and the anchor block's seed.  ``chain`` holds accepted headers
    indexed by height."""
    anchor = epoch_anchor(h0, h, epoch_length)
    if anchor >= len(chain):
        raise ValueError(f"anchor block {anchor} not accepted yet")
    seed = chain[anchor].seed
    value = tagged_hash(b"cred", pk, seed)
    return Credential(
        value=value, pk=pk, anchor_height=anchor, expiry_height=anchor + epoch_length
    )


def verify_credential(
    cred: Credential,
    h: int,
    chain: Sequence,
    utxo_history: Mapping[int, Mapping[bytes, Utxo]],
) -> bool:
    """Recompute and check a credential at height ``h``.

    ``utxo_history`` maps heights to UTXO set snapshots; eligibility is
    judged at the anchor snapshot, which is what keeps an already derived
    credential alive after its UTXO is spent.
    """
    if h >= cred.expiry_height:
        return False
    epoch_length = cred.expiry_height - cred.anchor_height
    if epoch_length < 1:
        return False
    snapshot = utxo_history.get(cred.anchor_height)
    if snapshot is None:
        return False
    utxo = snapshot.get(cred.pk)
    if utxo is None:
        return False
    try:
        expected = derive_credential(cred.pk, utxo.created_height, h, chain, epoch_length)
    except (ValueError, IndexError):
        return False
    return expected == cred


def active_credentials(
    h: int,
    participation: Mapping[bytes, bool],
    chain: Sequence,
    utxos: Mapping[bytes, Utxo],
    epoch_length: int,
) -> list[Credential]:
    """Credentials of users opting in at height ``h``.

    UTXOs younger than one epoch have nothing to derive yet and are
    skipped.  Output order follows the credential value so the list is
    deterministic regardless of map ordering.
    """
    creds = []
    for pk, joined in participation.items():
        if not joined or pk not in utxos:
            continue
        h0 = utxos[pk].created_height
        if h < h0 + epoch_length:
            continue
        creds.append(derive_credential(pk, h0, h, chain, epoch_length))
    creds.sort(key=lambda c: c.value)
    return creds
