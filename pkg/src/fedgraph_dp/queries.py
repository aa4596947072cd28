"""Subgraph-count estimators that undo randomized-response noise.

Every noisy slot ``o`` (a node pair observed through RR with flip
probability ``p``) has the unbiased per-slot estimate

    h(o) = (o - p) / (1 - 2p),   so  h(1) = x/(x-1),  h(0) = -1/(x-1),  x = e^eps.

Slots are flipped independently, so the product of ``h`` over the noisy
slots of a pattern is an unbiased estimate of the product of the true
bits. The triangle closed forms below are that product summed over
triples, grouped by census counts. The k-star estimators use the same
idea: an elementary symmetric polynomial in ``h`` over a node's slots
estimates ``C(d, k)`` without bias.

The plug-in ``C(d~, k)`` (``kstar_method="binomial"``) and the
alternative 1-local-edge formula (``form="alt"``) are kept for
comparison. Both are biased.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import comb

from .graph import Graph, count_kstars_exact, count_triangles_exact
from .mechanisms import flip_probability

__all__ = [
    "LocalTriangleCensus",
    "QueryResult",
    "QuerySpec",
    "SingularCalibrationError",
    "TripletCensus",
    "calibrate_degree",
    "debias_T0",
    "debias_T1",
    "debias_T2",
    "exact_query",
    "feat_kstar",
    "feat_triangles",
    "featplus_kstar",
    "featplus_triangles",
    "gen_binom",
    "local_triangle_census",
    "mre",
    "mse",
    "slot_estimates",
    "triplet_census",
]

T1_SINGULAR_EPS = math.log(1 + math.sqrt(2))


class SingularCalibrationError(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class QuerySpec:
    kind: str  # "kstar" or "triangle"
    k: int = 3

    def __post_init__(self):
        if self.kind not in ("kstar", "triangle"):
            raise ValueError(f"unknown query kind {self.kind!r}")
        if self.kind == "kstar" and self.k < 2:
            raise ValueError("k-star queries need k >= 2")
        if self.kind == "triangle" and self.k != 3:
            object.__setattr__(self, "k", 3)

    @classmethod
    def parse(cls, text: str) -> "QuerySpec":
        """``"triangle"`` or ``"kstar:K"``."""
        text = text.strip().lower()
        if text == "triangle":
            return cls("triangle")
        if text.startswith("kstar:"):
            try:
                k = int(text.split(":", 1)[1])
            except ValueError:
                raise ValueError(f"bad k in query {text!r}") from None
            return cls("kstar", k)
        raise ValueError(f"query must be 'triangle' or 'kstar:K', got {text!r}")

    def __str__(self) -> str:
        return "triangle" if self.kind == "triangle" else f"kstar:{self.k}"


@dataclass
class QueryResult:
    estimate: float
    query: QuerySpec
    epsilon: float
    budget_spent: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.estimate):
            raise ValueError(f"non-finite estimate {self.estimate}")


def exact_query(g: Graph, q: QuerySpec) -> int:
    if q.kind == "triangle":
        return count_triangles_exact(g)
    return count_kstars_exact(g, q.k)


# --------------------------------------------------------------------------
# helpers


def _p(epsilon: float) -> float:
    p = flip_probability(epsilon)
    if p >= 0.5:
        raise SingularCalibrationError("flip probability 1/2 cannot be calibrated")
    return p


def slot_estimates(epsilon: float) -> tuple[float, float]:
    """``(h(1), h(0))`` for one RR-observed slot."""
    p = _p(epsilon)
    return (1 - p) / (1 - 2 * p), -p / (1 - 2 * p)


def gen_binom(x, k: int):
    """``x (x-1) ... (x-k+1) / k!`` for real (possibly negative) ``x``."""
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    for i in range(k):
        out = out * (x - i)
    return out / math.factorial(k)


def _esym(d_obs, n_slots, k: int, a: float, b: float):
    """Elementary symmetric polynomial of degree ``k`` over ``n_slots`` values
    of which ``d_obs`` equal ``a`` and the rest ``b``."""
    d_obs = np.asarray(d_obs, dtype=float)
    n_slots = np.asarray(n_slots, dtype=float)
    out = np.zeros(np.broadcast(d_obs, n_slots).shape)
    for j in range(k + 1):
        out = out + comb(d_obs, j) * comb(n_slots - d_obs, k - j) * a**j * b ** (k - j)
    return out


def calibrate_degree(d_prime, n_slots, epsilon: float):
    """``(d' - n p) / (1 - 2p)``: unbiased degree from ``n_slots`` RR-observed slots."""
    p = _p(epsilon)
    return (np.asarray(d_prime, dtype=float) - np.asarray(n_slots, dtype=float) * p) / (1 - 2 * p)


# --------------------------------------------------------------------------
# FEAT: estimators on the noisy global graph


def feat_kstar(gprime: Graph, k: int, epsilon: float, method: str = "unbiased", slots: str = "exact") -> float:
    """k-star count of the true union from its RR-noised copy ``G'``.

    ``method="unbiased"`` sums the symmetric-polynomial estimate of
    ``C(d, k)`` per node. ``method="binomial"`` plugs the calibrated
    degree into ``C(d~, k)``. ``slots`` picks the per-node noisy-slot
    count: ``"exact"`` gives ``n-1``, ``"n"`` gives ``n``.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    n_slots = {"exact": gprime.n - 1, "n": gprime.n}[slots]
    d = gprime.degrees()
    if method == "binomial":
        return float(gen_binom(calibrate_degree(d, n_slots, epsilon), k).sum())
    if method != "unbiased":
        raise ValueError(f"unknown k-star method {method!r}")
    a, b = slot_estimates(epsilon)
    return float(_esym(d, n_slots, k, a, b).sum())


@dataclass(frozen=True)
class TripletCensus:
    t0: int
    t1: int
    t2: int
    t3: int

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.t0, self.t1, self.t2, self.t3)

    def total(self) -> int:
        return self.t0 + self.t1 + self.t2 + self.t3


def triplet_census(g: Graph) -> TripletCensus:
    """Number of node triples holding exactly 0, 1, 2 and 3 edges of ``g``."""
    n = g.n
    t3 = count_triangles_exact(g)
    d = g.degrees().astype(object)
    wedges = int(sum(x * (x - 1) // 2 for x in d))
    t2 = wedges - 3 * t3
    t1 = g.num_edges * (n - 2) - 2 * t2 - 3 * t3
    t0 = math.comb(n, 3) - t1 - t2 - t3
    return TripletCensus(t0, t1, t2, t3)


def _triangle_form(counts: Sequence[float], epsilon: float) -> float:
    """Sum over triples of prod h(o) for three noisy slots; ``counts[j]``
    is the number of triples with ``j`` observed edges."""
    a, b = slot_estimates(epsilon)
    c0, c1, c2, c3 = counts
    return c0 * b**3 + c1 * a * b * b + c2 * a * a * b + c3 * a**3


def feat_triangles(gprime: Graph, epsilon: float) -> float:
    census = triplet_census(gprime)
    if math.isinf(epsilon):
        return float(census.t3)
    return _triangle_form(census.as_tuple(), epsilon)


# --------------------------------------------------------------------------
# FEAT+: local estimators on G_bar = G' u G_i over a client's apex set


def debias_T0(t0, t1, t2, T0, epsilon1: float) -> float:
    """Triangles among triples with no local edge (all three slots noisy)."""
    return _triangle_form((t0, t1, t2, T0), epsilon1)


def debias_T1(t0, t1, T1, epsilon1: float, form: str = "exact") -> float:
    """Triangles among triples with exactly one local edge.

    ``t0, t1, T1`` count those triples whose two noisy slots show 0, 1
    and 2 edges. ``form="alt"`` is the alternative closed form, which
    is biased and singular at ``eps = ln(1 + sqrt 2)``.
    """
    if form == "exact":
        a, b = slot_estimates(epsilon1)
        return t0 * b * b + t1 * a * b + T1 * a * a
    if form != "alt":
        raise ValueError(f"unknown form {form!r}")
    _p(epsilon1)
    if math.isinf(epsilon1):
        return float(T1)
    x = math.exp(epsilon1)
    den = (x - 1) * (x * x - 2 * x - 1)
    if abs(x * x - 2 * x - 1) < 1e-12:
        raise SingularCalibrationError(f"1-local-edge form is singular at epsilon1 = ln(1+sqrt(2)) = {T1_SINGULAR_EPS:.6f}")
    return (x + 1) * (x * x * t0 - x * (x + 1) * t1 + (2 * x + 1) * T1) / den


def debias_T2(T2, S, epsilon1: float) -> float:
    """Triangles among ``S`` local wedges, ``T2`` of which look closed."""
    p = _p(epsilon1)
    return (T2 - S * p) / (1 - 2 * p)


@dataclass(frozen=True)
class LocalTriangleCensus:
    """``counts[s, c]``: apex triples with ``s`` local slots and ``c`` of the
    remaining ``3 - s`` slots observed as edges of ``G'``."""

    counts: np.ndarray

    @property
    def T0(self) -> int:
        return int(self.counts[0, 3])

    @property
    def T1(self) -> int:
        return int(self.counts[1, 2])

    @property
    def T2(self) -> int:
        return int(self.counts[2, 1])

    @property
    def T3(self) -> int:
        return int(self.counts[3, 0])

    def estimate(self, epsilon1: float, t1_form: str = "exact") -> float:
        c = self.counts
        if math.isinf(epsilon1):
            return float(c[0, 3] + c[1, 2] + c[2, 1] + c[3, 0])
        est0 = debias_T0(c[0, 0], c[0, 1], c[0, 2], c[0, 3], epsilon1)
        est1 = debias_T1(c[1, 0], c[1, 1], c[1, 2], epsilon1, form=t1_form)
        est2 = debias_T2(c[2, 1], c[2, 0] + c[2, 1], epsilon1)
        return float(est0 + est1 + est2 + c[3, 0])


def _apex_mask(n: int, u_i) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    u = np.asarray(u_i, dtype=np.int64)
    if u.size and (u.min() < 0 or u.max() >= n):
        raise ValueError("apex set contains nodes outside the universe")
    mask[u] = True
    return mask


def local_triangle_census(gprime: Graph, g_i: Graph, u_i) -> LocalTriangleCensus:
    n = gprime.n
    if g_i.n != n:
        raise ValueError("client graph and G' must share a node universe")
    mask = _apex_mask(n, u_i)
    counts = np.zeros((4, 4), dtype=np.int64)
    if not mask.any() or n < 3:
        return LocalTriangleCensus(counts)
    upper = np.triu(np.ones((n, n), dtype=bool), 1)
    local = g_i.adjacency().astype(bool) & upper
    noisy_one = gprime.adjacency().astype(bool) & upper & ~local
    noisy_zero = upper & ~local & ~noisy_one
    # state index: 0 local, 1 observed edge, 2 observed non-edge
    mats = [m.astype(np.float64) for m in (local, noisy_one, noisy_zero)]
    rows = [m[mask] for m in mats]
    s_of = (1, 0, 0)
    c_of = (0, 1, 0)
    for a in range(3):  # slot (j, k)
        for cc in range(3):  # slot (k, l)
            paths = rows[a] @ mats[cc]  # [j, l] = sum_k A[j,k] C[k,l], k > j, l > k
            for b in range(3):  # slot (j, l)
                tot = int(round(float((paths * rows[b]).sum())))
                counts[s_of[a] + s_of[b] + s_of[cc], c_of[a] + c_of[b] + c_of[cc]] += tot
    return LocalTriangleCensus(counts)


def featplus_triangles(gprime: Graph, g_i: Graph, u_i, epsilon1: float, t1_form: str = "exact") -> float:
    return local_triangle_census(gprime, g_i, u_i).estimate(epsilon1, t1_form)


def featplus_kstar(
    gprime: Graph,
    g_i: Graph,
    u_i,
    k: int,
    epsilon1: float,
    method: str = "unbiased",
    slots: str = "incident",
) -> float:
    """k-stars centred on ``U_i`` in the merged graph, local edges taken as exact.

    A node has ``d1`` edges in ``G_i`` and ``d2`` further edges of ``G'``
    on its other slots. ``slots="incident"`` treats those other
    ``n-1-d1`` slots as the noisy ones; ``slots="n"`` uses ``n``.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    mask = _apex_mask(gprime.n, u_i)
    if not mask.any():
        return 0.0
    merged = gprime.union(g_i)
    d1 = g_i.degrees()[mask].astype(float)
    d2 = merged.degrees()[mask].astype(float) - d1
    n_slots = {"incident": gprime.n - 1 - d1, "n": np.full_like(d1, gprime.n)}[slots]
    if method == "binomial":
        return float(gen_binom(d1 + calibrate_degree(d2, n_slots, epsilon1), k).sum())
    if method != "unbiased":
        raise ValueError(f"unknown k-star method {method!r}")
    if math.isinf(epsilon1):
        return float(gen_binom(d1 + d2, k).sum())
    a, b = slot_estimates(epsilon1)
    total = np.zeros_like(d1)
    for j in range(k + 1):
        total = total + comb(d1, k - j) * _esym(d2, n_slots, j, a, b)
    return float(total.sum())


# --------------------------------------------------------------------------
# error metrics


def mse(estimates, truth: float) -> float:
    e = np.asarray(estimates, dtype=float)
    if e.size == 0:
        raise ValueError("no estimates")
    return float(np.mean((e - truth) ** 2))


def mre(estimates, truth: float) -> float:
    if truth == 0:
        raise ZeroDivisionError("relative error is undefined for a zero truth")
    e = np.asarray(estimates, dtype=float)
    if e.size == 0:
        raise ValueError("no estimates")
    return float(np.mean(np.abs(e - truth)) / abs(truth))
