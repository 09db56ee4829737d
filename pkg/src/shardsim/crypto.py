"""Hash-based stand-ins for the cryptographic primitives the simulator relies on.

Everything here is deterministic: digests come from SHA-256, key pairs are
derived from seed material, and signatures / VRF outputs are recomputable
from public data.  Unforgeability is therefore a structural property of the
simulation, not of the math: adversary strategy code only ever receives the
key pairs of corrupted users and never fabricates digests for keys it does
not hold.

Every hash use site goes through :func:`tagged_hash` with a distinct context
tag, so independently seeded streams (credentials, seeds, signatures, VRF,
PRG words) can never collide.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

DIGEST_LEN = 32
ZERO_DIGEST = b"\x00" * DIGEST_LEN

_WORD_BYTES = 8
_WORD_SPACE = 2 ** (8 * _WORD_BYTES)


def encode_bytes(data: bytes) -> bytes:
    """Length-prefixed byte string (4-byte big-endian prefix)."""
    return len(data).to_bytes(4, "big") + data


def encode_int(value: int) -> bytes:
    """8-byte big-endian signed integer."""
    return value.to_bytes(8, "big", signed=True)


def encode_str(text: str) -> bytes:
    return encode_bytes(text.encode("utf-8"))


def hash_digest(data: bytes) -> bytes:
    """Plain 32-byte digest of ``data``."""
    return hashlib.sha256(data).digest()


def tagged_hash(tag: bytes, *parts: bytes) -> bytes:
    """Digest of ``parts`` under a domain-separation ``tag``.

    The tag and every part are length-prefixed, so distinct argument lists
    can never produce the same preimage.
    """
    h = hashlib.sha256()
    h.update(len(tag).to_bytes(1, "big"))
    h.update(tag)
    for part in parts:
        h.update(len(part).to_bytes(4, "big"))
        h.update(part)
    return h.digest()


@dataclass(frozen=True)
class KeyPair:
    pk: bytes
    sk: bytes


@dataclass(frozen=True)
class Signature:
    value: bytes
    signer_pk: bytes


@dataclass(frozen=True)
class VrfOutput:
    value: bytes
    proof: bytes


def keygen(seed_material: bytes) -> KeyPair:
    """Deterministic key pair from seed material.

    The public key is itself a digest of the secret key, so signature and
    VRF checks reduce to pure recomputation.
    """
    sk = tagged_hash(b"sk", seed_material)
    return KeyPair(pk=pk_from_sk(sk), sk=sk)


def pk_from_sk(sk: bytes) -> bytes:
    return tagged_hash(b"pk", sk)


def sign(sk: bytes, msg: bytes) -> Signature:
    pk = pk_from_sk(sk)
    return Signature(value=tagged_hash(b"sig", pk, msg), signer_pk=pk)


def verify_sig(pk: bytes, msg: bytes, sig: object) -> bool:
    """True iff ``sig`` was produced by the holder of ``pk`` over ``msg``.

    Malformed input of any shape yields False rather than an exception.
    """
    if not isinstance(sig, Signature):
        return False
    if not isinstance(sig.value, bytes) or sig.signer_pk != pk:
        return False
    return sig.value == tagged_hash(b"sig", pk, msg)


def vrf_eval(sk: bytes, vrf_input: bytes) -> VrfOutput:
    """Deterministic pseudorandom value plus a proof binding pk and input."""
    pk = pk_from_sk(sk)
    value = tagged_hash(b"vrf", pk, vrf_input)
    proof = tagged_hash(b"vrf-proof", pk, vrf_input, value)
    return VrfOutput(value=value, proof=proof)


def vrf_verify(pk: bytes, vrf_input: bytes, output: object) -> bool:
    if not isinstance(output, VrfOutput):
        return False
    if output.value != tagged_hash(b"vrf", pk, vrf_input):
        return False
    return output.proof == tagged_hash(b"vrf-proof", pk, vrf_input, output.value)


class Prg:
    """Deterministic pseudorandom generator over a hash-counter stream.

    Draws are unbiased: 64-bit words are rejection-sampled so that
    ``draw(n)`` is uniform over [1, n] for any n that fits the word space.
    Instances are cheap; parallel consumers must each own their own.
    """

    __slots__ = ("state", "counter", "_words")

    def __init__(self, seed: bytes):
        if not isinstance(seed, bytes) or len(seed) == 0:
            raise ValueError("Prg seed must be non-empty bytes")
        self.state = seed if len(seed) == DIGEST_LEN else hash_digest(seed)
        self.counter = 0
        self._words: list[int] = []

    def _next_word(self) -> int:
        if not self._words:
            block = tagged_hash(b"prg", self.state, encode_int(self.counter))
            self.counter += 1
            self._words = [
                int.from_bytes(block[i : i + _WORD_BYTES], "big")
                for i in range(0, DIGEST_LEN, _WORD_BYTES)
            ]
            self._words.reverse()
        return self._words.pop()

    def draw(self, n: int) -> int:
        """Uniform draw from [1, n]."""
        if n < 1:
            raise ValueError("draw range must be at least 1")
        if n == 1:
            return 1
        # Rejection bound keeps the modulo unbiased.
        limit = _WORD_SPACE - (_WORD_SPACE % n)
        while True:
            word = self._next_word()
            if word < limit:
                return 1 + (word % n)


def prg_new(seed: bytes) -> Prg:
    return Prg(seed)


def prg_draw(prg: Prg, n: int) -> int:
    return prg.draw(n)
