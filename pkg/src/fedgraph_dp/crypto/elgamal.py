"""Threshold (all-of-m) ElGamal over single bits.

A bit ``b`` is encrypted in the exponent, ``(g^r, pk^r * g^b)``, so
decryption only has to tell the identity (0) from the generator (1).
The joint key is ``pk = prod pk_i = g^(sum sk_i)``; decryption needs a
partial ``c1^sk_i`` from every one of the ``m`` key holders.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .groups import GroupBackend

__all__ = [
    "BitCiphertext",
    "CorruptCiphertextError",
    "DecryptionError",
    "JointPublicKey",
    "KeyShare",
    "MissingShareError",
    "combine",
    "combine_many",
    "decode_ciphertexts",
    "encode_ciphertexts",
    "encrypt_bit",
    "encrypt_bits",
    "keygen",
    "partial_decrypt",
    "partial_decrypt_many",
    "rerandomize",
    "rerandomize_many",
]


class DecryptionError(ValueError):
    pass


class MissingShareError(DecryptionError):
    pass


class CorruptCiphertextError(DecryptionError):
    pass


@dataclass(frozen=True)
class KeyShare:
    index: int
    sk: int
    pk: object


@dataclass(frozen=True)
class JointPublicKey:
    pk: object
    parties: int


class BitCiphertext(NamedTuple):
    c1: object
    c2: object


def keygen(m: int, group: GroupBackend, rng: np.random.Generator | None = None):
    """Each of ``m`` parties draws ``sk_i``; returns the shares and the joint key."""
    if m < 1:
        raise ValueError("need at least one key holder")
    sks = group.random_scalars(rng, m)
    shares = [KeyShare(i, sk, group.exp_g(sk)) for i, sk in enumerate(sks)]
    pk = shares[0].pk
    for s in shares[1:]:
        pk = group.mul(pk, s.pk)
    return shares, JointPublicKey(pk, m)


def encrypt_bit(b: int, pk: JointPublicKey, group: GroupBackend, rng=None, r: int | None = None) -> BitCiphertext:
    if b not in (0, 1):
        raise ValueError(f"can only encrypt a bit, got {b!r}")
    if r is None:
        r = group.random_scalar(rng)
    c2 = group.exp(pk.pk, r)
    if b:
        c2 = group.mul(c2, group.generator)
    return BitCiphertext(group.exp_g(r), c2)


def rerandomize(ct: BitCiphertext, pk: JointPublicKey, group: GroupBackend, rng=None, s: int | None = None) -> BitCiphertext:
    """Fresh-looking ciphertext of the same plaintext: multiply in an encryption of 0."""
    if s is None:
        s = group.random_scalar(rng)
    return BitCiphertext(group.mul(ct.c1, group.exp_g(s)), group.mul(ct.c2, group.exp(pk.pk, s)))


def partial_decrypt(ct: BitCiphertext, share: KeyShare, group: GroupBackend):
    return group.exp(ct.c1, share.sk)


def _check_partials(partials: Mapping[int, object], parties: int) -> None:
    missing = set(range(parties)) - set(partials)
    if missing:
        raise MissingShareError(f"missing partial decryptions from parties {sorted(missing)}")
    extra = set(partials) - set(range(parties))
    if extra:
        raise MissingShareError(f"unexpected partial decryptions from parties {sorted(extra)}")


def combine(ct: BitCiphertext, partials: Mapping[int, object], group: GroupBackend, parties: int) -> int:
    """Recover the bit from one partial per key share (keyed by share index)."""
    _check_partials(partials, parties)
    acc = None
    for i in range(parties):
        acc = partials[i] if acc is None else group.mul(acc, partials[i])
    if ct.c2 == acc:
        return 0
    if ct.c2 == group.mul(acc, group.generator):
        return 1
    raise CorruptCiphertextError("plaintext is neither g^0 nor g^1")


# --------------------------------------------------------------------------
# batched forms used by the collection protocol


def encrypt_bits(bits: Sequence[int], pk: JointPublicKey, group: GroupBackend, rng=None) -> list[BitCiphertext]:
    rs = group.random_scalars(rng, len(bits))
    exp, exp_g, mul, g, h = group.exp, group.exp_g, group.mul, group.generator, pk.pk
    out = []
    for b, r in zip(bits, rs):
        c2 = exp(h, r)
        out.append(BitCiphertext(exp_g(r), mul(c2, g) if b else c2))
    return out


def rerandomize_many(cts: Sequence[BitCiphertext], pk: JointPublicKey, group: GroupBackend, rng=None) -> list[BitCiphertext]:
    ss = group.random_scalars(rng, len(cts))
    exp, exp_g, mul, h = group.exp, group.exp_g, group.mul, pk.pk
    return [BitCiphertext(mul(c1, exp_g(s)), mul(c2, exp(h, s))) for (c1, c2), s in zip(cts, ss)]


def partial_decrypt_many(cts: Sequence[BitCiphertext], share: KeyShare, group: GroupBackend) -> list:
    exp, sk = group.exp, share.sk
    return [exp(c1, sk) for c1, _ in cts]


def combine_many(cts: Sequence[BitCiphertext], partials: Mapping[int, Sequence], group: GroupBackend, parties: int) -> np.ndarray:
    _check_partials(partials, parties)
    for i in range(parties):
        if len(partials[i]) != len(cts):
            raise DecryptionError(f"party {i} sent {len(partials[i])} partials for {len(cts)} ciphertexts")
    mul, g = group.mul, group.generator
    cols = [partials[i] for i in range(parties)]
    out = np.empty(len(cts), dtype=bool)
    for j, ct in enumerate(cts):
        acc = cols[0][j]
        for col in cols[1:]:
            acc = mul(acc, col[j])
        if ct.c2 == acc:
            out[j] = False
        elif ct.c2 == mul(acc, g):
            out[j] = True
        else:
            raise CorruptCiphertextError(f"slot {j}: plaintext is neither g^0 nor g^1")
    return out


# --------------------------------------------------------------------------
# wire format
#
#   magic "FGCT" | version u8 | element width u16 | count u32 | count x (c1 || c2)
#
# integers big-endian; each element is encoded by the group at fixed width.

_MAGIC = b"FGCT"
_HEADER = struct.Struct(">4sBHI")


def encode_ciphertexts(cts: Sequence[BitCiphertext], group: GroupBackend) -> bytes:
    enc = group.encode
    w = group.element_size
    body = b"".join(enc(c1) + enc(c2) for c1, c2 in cts)
    assert len(body) == 2 * w * len(cts)
    return _HEADER.pack(_MAGIC, 1, w, len(cts)) + body


def decode_ciphertexts(data: bytes, group: GroupBackend, validate: bool = True) -> list[BitCiphertext]:
    if len(data) < _HEADER.size:
        raise ValueError("truncated ciphertext vector header")
    magic, version, w, count = _HEADER.unpack_from(data)
    if magic != _MAGIC or version != 1:
        raise ValueError("not a ciphertext vector")
    if w != group.element_size:
        raise ValueError(f"element width {w} does not match group {group.name}")
    body = memoryview(data)[_HEADER.size:]
    if len(body) != 2 * w * count:
        raise ValueError(f"expected {2 * w * count} payload bytes, got {len(body)}")
    dec = group.decode
    out = []
    for k in range(count):
        off = 2 * w * k
        out.append(BitCiphertext(dec(bytes(body[off:off + w]), validate), dec(bytes(body[off + w:off + 2 * w]), validate)))
    return out
