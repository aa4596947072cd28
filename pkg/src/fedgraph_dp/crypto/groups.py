"""Prime-order groups behind a common multiplicative interface.

Two families are provided:

* ``SchnorrGroup``: the quadratic-residue subgroup of a safe prime
  ``p = 2q + 1``. Elements are integers, easy to print and check by hand.
  The 64- and 128-bit presets are for simulation and debugging only and
  give no real security.
* ``Ed25519Group``: the prime-order subgroup of edwards25519 via
  libsodium (PyNaCl), about 128-bit security. Elements are 32-byte
  compressed points.

Both use multiplicative notation: ``mul`` is the group operation and
``exp(a, k)`` is ``a`` applied ``k`` times.
"""

from __future__ import annotations

import secrets
from abc import ABC, abstractmethod
from functools import lru_cache

import gmpy2
import numpy as np

__all__ = [
    "Ed25519Group",
    "GroupBackend",
    "REFERENCE_GROUP",
    "SchnorrGroup",
    "available_groups",
    "get_group",
]


class GroupBackend(ABC):
    name: str
    order: int
    generator: object
    identity: object
    element_size: int

    @abstractmethod
    def mul(self, a, b): ...

    @abstractmethod
    def exp(self, a, k: int): ...

    @abstractmethod
    def inv(self, a): ...

    @abstractmethod
    def encode(self, a) -> bytes: ...

    @abstractmethod
    def decode(self, data: bytes, validate: bool = True): ...

    @abstractmethod
    def is_element(self, a) -> bool: ...

    def exp_g(self, k: int):
        return self.exp(self.generator, k)

    def random_scalar(self, rng: np.random.Generator | None = None) -> int:
        return self.random_scalars(rng, 1)[0]

    def random_scalars(self, rng: np.random.Generator | None, count: int) -> list[int]:
        """Uniform nonzero scalars mod ``order``.

        ``rng=None`` draws from the OS CSPRNG; a numpy generator gives
        reproducible (and therefore not secret) scalars for simulations.
        """
        q = self.order
        if rng is None:
            return [secrets.randbelow(q - 1) + 1 for _ in range(count)]
        if q < 2**62:
            return rng.integers(1, q, size=count, dtype=np.int64).tolist()
        # 64 spare bits keep the modular bias below 2^-64
        width = (q.bit_length() + 7) // 8 + 8
        buf = rng.bytes(width * count)
        fb = int.from_bytes
        return [fb(buf[i:i + width], "little") % (q - 1) + 1 for i in range(0, width * count, width)]

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name}>"


class SchnorrGroup(GroupBackend):
    def __init__(self, p: int, g: int = 4, name: str | None = None):
        p = gmpy2.mpz(p)
        q = (p - 1) // 2
        if not (gmpy2.is_prime(p, 40) and gmpy2.is_prime(q, 40)):
            raise ValueError("p must be a safe prime")
        g = gmpy2.mpz(g) % p
        if g in (0, 1, p - 1) or gmpy2.legendre(g, p) != 1:
            raise ValueError("g must generate the quadratic-residue subgroup")
        self.p = p
        self.order = int(q)
        self.generator = g
        self.identity = gmpy2.mpz(1)
        self.element_size = (int(p).bit_length() + 7) // 8
        self.name = name or f"schnorr-{int(p).bit_length()}"

    def mul(self, a, b):
        return a * b % self.p

    def exp(self, a, k: int):
        return gmpy2.powmod(a, k, self.p)

    def inv(self, a):
        return gmpy2.invert(a, self.p)

    def encode(self, a) -> bytes:
        return int(a).to_bytes(self.element_size, "big")

    def decode(self, data: bytes, validate: bool = True):
        if len(data) != self.element_size:
            raise ValueError(f"expected {self.element_size} bytes, got {len(data)}")
        a = gmpy2.mpz(int.from_bytes(data, "big"))
        if validate and not self.is_element(a):
            raise ValueError("decoded value is not a subgroup element")
        return a

    def is_element(self, a) -> bool:
        a = gmpy2.mpz(a)
        return 0 < a < self.p and gmpy2.legendre(a, self.p) == 1


class Ed25519Group(GroupBackend):
    L = 2**252 + 27742317777372353535851937790883648493

    def __init__(self):
        from nacl import bindings as nb

        self._nb = nb
        self.name = "ed25519"
        self.order = self.L
        self.element_size = 32
        self.identity = bytes([1]) + bytes(31)
        self.generator = nb.crypto_scalarmult_ed25519_base_noclamp((1).to_bytes(32, "little"))

    def mul(self, a, b):
        return self._nb.crypto_core_ed25519_add(a, b)

    def exp(self, a, k: int):
        k %= self.L
        if k == 0 or a == self.identity:
            return self.identity
        return self._nb.crypto_scalarmult_ed25519_noclamp(k.to_bytes(32, "little"), a)

    def exp_g(self, k: int):
        k %= self.L
        if k == 0:
            return self.identity
        return self._nb.crypto_scalarmult_ed25519_base_noclamp(k.to_bytes(32, "little"))

    def inv(self, a):
        return self._nb.crypto_core_ed25519_sub(self.identity, a)

    def encode(self, a) -> bytes:
        return bytes(a)

    def decode(self, data: bytes, validate: bool = True):
        data = bytes(data)
        if len(data) != 32:
            raise ValueError(f"expected 32 bytes, got {len(data)}")
        if validate and not self.is_element(data):
            raise ValueError("decoded value is not a prime-order subgroup point")
        return data

    def is_element(self, a) -> bool:
        a = bytes(a)
        return len(a) == 32 and (a == self.identity or self._nb.crypto_core_ed25519_is_valid_point(a))


# largest safe primes below 2^64, 2^128, 2^256
_SAFE_PRIMES = {
    "schnorr-64": 0xFFFFFFFFFFFFFA43,
    "schnorr-128": 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFC3A7,
    "schnorr-256": 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFF72EF,
}

REFERENCE_GROUP = "schnorr-64"


def available_groups() -> list[str]:
    return [*_SAFE_PRIMES, "ed25519"]


@lru_cache(maxsize=None)
def get_group(name: str = REFERENCE_GROUP) -> GroupBackend:
    if name in _SAFE_PRIMES:
        return SchnorrGroup(_SAFE_PRIMES[name], name=name)
    if name == "ed25519":
        return Ed25519Group()
    raise KeyError(f"unknown group {name!r}; choose from {available_groups()}")
