"""Randomized response, Laplace noise, and privacy-budget accounting.

Edge LDP is not a runnable mechanism here. It is the per-client notion
the Baseline protocol composes: each client's randomized response is
``eps/m``-Edge LDP, and ``m`` such reports of one shared edge compose to
``eps`` overall.
"""

from __future__ import annotations

import csv
import io
import math
import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "BudgetExceeded",
    "BudgetLedger",
    "DEFAULT_FRACTIONS",
    "LaplaceChannel",
    "LedgerEntry",
    "PrivacyBudget",
    "RRChannel",
    "exact_split",
    "flip_probability",
    "laplace_sample",
    "laplace_samples",
    "rr_apply",
    "rr_flip",
    "split_budget",
]

DEFAULT_FRACTIONS = (0.45, 0.10, 0.45)


def flip_probability(epsilon: float) -> float:
    """``1 / (1 + e^eps)``; ``eps = inf`` gives the identity channel (p = 0)."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if math.isinf(epsilon):
        return 0.0
    # written to stay finite for large eps
    return math.exp(-epsilon) / (1.0 + math.exp(-epsilon))


@dataclass(frozen=True)
class RRChannel:
    epsilon: float

    def __post_init__(self):
        flip_probability(self.epsilon)

    @property
    def p(self) -> float:
        return flip_probability(self.epsilon)


@dataclass(frozen=True)
class LaplaceChannel:
    sensitivity: float
    epsilon: float

    def __post_init__(self):
        if not self.sensitivity > 0:
            raise ValueError(f"sensitivity must be positive, got {self.sensitivity}")
        if not self.epsilon > 0 or math.isinf(self.epsilon):
            raise ValueError(f"epsilon must be positive and finite, got {self.epsilon}")

    @property
    def scale(self) -> float:
        return self.sensitivity / self.epsilon


def rr_apply(bit: int, ch: RRChannel, rng: np.random.Generator) -> int:
    """Keep ``bit`` with probability ``1-p``, flip it with probability ``p``."""
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit!r}")
    p = ch.p
    if p == 0.0:
        return bit
    return 1 - bit if rng.random() < p else bit


def rr_flip(bits: np.ndarray, ch: RRChannel, rng: np.random.Generator) -> np.ndarray:
    """Vectorised :func:`rr_apply` over a boolean array."""
    bits = np.asarray(bits, dtype=bool)
    p = ch.p
    if p == 0.0:
        return bits.copy()
    return bits ^ (rng.random(bits.shape) < p)


def _inverse_cdf(u: np.ndarray, scale: float) -> np.ndarray:
    # u uniform on [-1/2, 1/2); 1 - 2|u| lies in (0, 1]
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def laplace_samples(ch: LaplaceChannel, rng: np.random.Generator, size) -> np.ndarray:
    u = rng.random(size) - 0.5
    return _inverse_cdf(u, ch.scale)


def laplace_sample(ch: LaplaceChannel, rng: np.random.Generator) -> float:
    """One zero-mean Laplace draw with scale ``sensitivity/epsilon``.

    Plain inverse-CDF sampling on a 64-bit uniform; no snapping or other
    floating-point hardening.
    """
    return float(laplace_samples(ch, rng, None))


# --------------------------------------------------------------------------
# budgets


@dataclass(frozen=True)
class PrivacyBudget:
    """Three-way split for graph collection, partition and perturbation."""

    epsilon_total: float
    eps1: float
    eps2: float
    eps3: float

    def __post_init__(self):
        if not self.epsilon_total > 0:
            raise ValueError("epsilon_total must be positive")
        parts = (self.eps1, self.eps2, self.eps3)
        if any(e < 0 for e in parts):
            raise ValueError(f"budget parts must be non-negative: {parts}")
        s = math.fsum(parts)
        if not (s == self.epsilon_total or math.isclose(s, self.epsilon_total, rel_tol=4 * 2**-52)):
            raise ValueError(f"budget parts sum to {s!r}, not {self.epsilon_total!r}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.eps1, self.eps2, self.eps3)


def exact_split(total: float, weights: Sequence[float]) -> list[float]:
    """Shares ``total * w`` whose ``math.fsum`` is exactly ``total``.

    The last nonzero share absorbs the rounding remainder, so ledgers can
    check equality instead of a tolerance.
    """
    w = [float(x) for x in weights]
    shares = [total * x if x else 0.0 for x in w]
    if math.isinf(total) or not any(w):
        return shares
    last = max(i for i, x in enumerate(w) if x)
    others = [i for i, x in enumerate(w) if x and i != last]
    # when the other shares sum to a half-ulp tie no last share works; nudge one of them
    for attempt in range(1 + 2 * len(others)):
        if attempt:
            j = others[(attempt - 1) // 2]
            shares[j] = math.nextafter(total * w[j], math.inf if attempt % 2 else -math.inf)
        if _absorb(shares, last, total):
            return shares
    raise ArithmeticError(f"could not split {total!r} exactly")


def _absorb(shares: list[float], last: int, total: float) -> bool:
    rest = math.fsum(shares[:last] + shares[last + 1:])
    shares[last] = total - rest
    for _ in range(64):
        err = math.fsum(shares) - total
        if err == 0:
            return True
        shares[last] = math.nextafter(shares[last], -math.inf if err > 0 else math.inf)
    return False


def split_budget(epsilon_total: float, fractions: Sequence[float] = DEFAULT_FRACTIONS) -> PrivacyBudget:
    f = tuple(float(x) for x in fractions)
    if len(f) != 3:
        raise ValueError("need exactly three budget fractions")
    if any(x < 0 for x in f):
        raise ValueError(f"fractions must be non-negative: {f}")
    if not math.isclose(math.fsum(f), 1.0, rel_tol=0, abs_tol=1e-9):
        raise ValueError(f"fractions sum to {math.fsum(f)}, not 1")
    return PrivacyBudget(epsilon_total, *exact_split(epsilon_total, f))


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class LedgerEntry:
    phase: str
    mechanism: str
    epsilon: float
    party: str = ""
    seq: int = 0


@dataclass
class BudgetLedger:
    """Append-only record of every randomized access to client data.

    ``record`` raises :class:`BudgetExceeded` as soon as the cumulative
    charge would pass ``limit``; callers let it propagate to abort the run.
    Appends are thread-safe; reads return entries in append order.
    """

    limit: float
    entries: list[LedgerEntry] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def record(self, phase: str, mechanism: str, epsilon: float, party: str = "") -> None:
        if not epsilon >= 0:
            raise ValueError(f"cannot charge epsilon={epsilon}")
        with self._lock:
            new_total = math.fsum([e.epsilon for e in self.entries] + [epsilon])
            if not math.isinf(self.limit) and new_total > self.limit * (1 + 1e-12):
                raise BudgetExceeded(
                    f"{phase}/{mechanism} would spend {new_total:g} of a {self.limit:g} budget"
                )
            self.entries.append(LedgerEntry(phase, mechanism, float(epsilon), party, len(self.entries)))

    def total(self) -> float:
        return math.fsum(e.epsilon for e in self.entries)

    def by_phase(self) -> dict[str, float]:
        out: dict[str, list[float]] = {}
        for e in self.entries:
            out.setdefault(e.phase, []).append(e.epsilon)
        return {k: math.fsum(v) for k, v in out.items()}

    def by_party(self, phase: str | None = None) -> dict[str, float]:
        out: dict[str, list[float]] = {}
        for e in self.entries:
            if phase is None or e.phase == phase:
                out.setdefault(e.party, []).append(e.epsilon)
        return {k: math.fsum(v) for k, v in out.items()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["phase", "mechanism", "epsilon", "party"])
        for e in self.entries:
            w.writerow([e.phase, e.mechanism, repr(e.epsilon), e.party])
        return buf.getvalue()
