"""End-to-end protocols: Baseline, FEAT and FEAT+, plus node partitioning.

Passing ``epsilon = inf`` (or a budget with ``epsilon_total = inf``)
disables every noise source. That gives the noise-free mode used to
check that protocols reduce to exact counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .crypto.dpsu import dpsu_collect_graph
from .crypto.groups import REFERENCE_GROUP
from .graph import Graph, SubgraphCollection, union
from .mechanisms import (
    BudgetLedger,
    LaplaceChannel,
    PrivacyBudget,
    RRChannel,
    exact_split,
    laplace_samples,
    rr_flip,
    split_budget,
)
from .queries import (
    QueryResult,
    QuerySpec,
    exact_query,
    feat_kstar,
    feat_triangles,
    featplus_kstar,
    featplus_triangles,
)

__all__ = [
    "DeltaPolicy",
    "PROTOCOLS",
    "PartitionAssignment",
    "assign_nodes",
    "ProtocolConfig",
    "partition_nodes",
    "run_baseline",
    "run_feat",
    "run_feat_plus",
    "run_protocol",
    "default_config",
]

PROTOCOLS = ("baseline", "feat", "feat_plus")


@dataclass(frozen=True)
class DeltaPolicy:
    """Sensitivity for the FEAT+ output perturbation.

    ``D`` is ``degree_cap`` if given, else the true max degree of the
    union. That default is convenient for experiments but is not itself
    private. Triangles use ``D``; k-stars use ``C(D, k-1)``.
    """

    degree_cap: int | None = None
    fixed: float | None = None

    def sensitivity(self, query: QuerySpec, union_graph: Graph) -> float:
        if self.fixed is not None:
            return float(self.fixed)
        D = self.degree_cap if self.degree_cap is not None else int(union_graph.degrees().max(initial=0))
        D = max(D, 1)
        if query.kind == "triangle":
            return float(D)
        return float(max(math.comb(D, query.k - 1), 1))


@dataclass(frozen=True)
class PartitionAssignment:
    n: int
    m: int
    owner: np.ndarray  # owner[v] = index of the client that holds node v

    def nodes(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.owner == i)

    def groups(self) -> list[np.ndarray]:
        return [self.nodes(i) for i in range(self.m)]

    def is_partition(self) -> bool:
        gs = self.groups()
        allnodes = np.concatenate(gs) if gs else np.zeros(0, dtype=np.int64)
        return len(allnodes) == self.n and np.array_equal(np.sort(allnodes), np.arange(self.n))


@dataclass(frozen=True)
class ProtocolConfig:
    protocol: str
    budget: PrivacyBudget
    query: QuerySpec
    dpsu_mode: str = "single-flip"
    delta: DeltaPolicy = field(default_factory=DeltaPolicy)
    group: str = REFERENCE_GROUP
    kstar_method: str = "unbiased"
    kstar_slots: str = "exact"  # "exact" or "n"
    t1_form: str = "exact"

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")


def _parts(parts) -> list[Graph]:
    parts = list(parts)
    if not parts:
        raise ValueError("need at least one client")
    if len({g.n for g in parts}) != 1:
        raise ValueError("all clients must share one node universe")
    return parts


def _ledger(ledger: BudgetLedger | None, epsilon: float) -> BudgetLedger:
    return ledger if ledger is not None else BudgetLedger(epsilon)


def run_baseline(parts: SubgraphCollection | Sequence[Graph], epsilon: float, rng: np.random.Generator,
                 ledger: BudgetLedger | None = None) -> Graph:
    """Every client runs RR with ``eps/m`` on its own flags; the server ORs them."""
    parts = _parts(parts)
    m = len(parts)
    ledger = _ledger(ledger, epsilon)
    shares = exact_split(epsilon, [1.0 / m] * m)
    noisy = np.zeros_like(parts[0].flags)
    for i, (g, e, crng) in enumerate(zip(parts, shares, rng.spawn(m))):
        ledger.record("collect", "rr", e, party=f"client-{i + 1}")
        noisy |= rr_flip(g.flags, RRChannel(e), crng)
    return Graph.from_flags(parts[0].n, noisy)


def run_feat(parts, epsilon: float, query: QuerySpec, rng: np.random.Generator, *,
             dpsu_mode: str = "single-flip", group: str = REFERENCE_GROUP, ledger: BudgetLedger | None = None,
             kstar_method: str = "unbiased", kstar_slots: str = "exact") -> QueryResult:
    parts = _parts(parts)
    ledger = _ledger(ledger, epsilon)
    gprime = dpsu_collect_graph(parts, epsilon, mode=dpsu_mode, rng=rng, group=group, ledger=ledger)
    if query.kind == "triangle":
        est = feat_triangles(gprime, epsilon)
    else:
        est = feat_kstar(gprime, query.k, epsilon, method=kstar_method,
                         slots="n" if kstar_slots == "n" else "exact")
    return QueryResult(est, query, epsilon, ledger.total(), {"noisy_edges": gprime.num_edges})


def assign_nodes(noisy_degrees: np.ndarray) -> np.ndarray:
    """Owner of each node (column): row index of the largest report, lowest on ties."""
    return np.argmax(np.asarray(noisy_degrees, dtype=float), axis=0)


def partition_nodes(parts, epsilon2: float, rng: np.random.Generator,
                    ledger: BudgetLedger | None = None) -> PartitionAssignment:
    """Each client reports noisy degrees ``d + Lap(m/eps2)``; a node goes to the
    client with the largest report, lowest index on ties."""
    parts = _parts(parts)
    m, n = len(parts), parts[0].n
    if not epsilon2 > 0:
        raise ValueError("epsilon2 must be positive")
    noisy = np.vstack([g.degrees().astype(float) for g in parts])
    shares = exact_split(epsilon2, [1.0 / m] * m)
    for i, (e, crng) in enumerate(zip(shares, rng.spawn(m))):
        if ledger is not None:
            ledger.record("partition", "laplace", e, party=f"client-{i + 1}")
        if not math.isinf(epsilon2):
            noisy[i] += laplace_samples(LaplaceChannel(m, epsilon2), crng, n)
    return PartitionAssignment(n, m, assign_nodes(noisy))


def run_feat_plus(parts, budget: PrivacyBudget, query: QuerySpec, rng: np.random.Generator, *,
                  delta: DeltaPolicy | None = None, dpsu_mode: str = "single-flip", group: str = REFERENCE_GROUP,
                  ledger: BudgetLedger | None = None, kstar_method: str = "unbiased", kstar_slots: str = "exact",
                  t1_form: str = "exact") -> QueryResult:
    parts = _parts(parts)
    delta = delta or DeltaPolicy()
    ledger = _ledger(ledger, budget.epsilon_total)
    e1, e2, e3 = budget.as_tuple()
    r_collect, r_part, r_perturb = rng.spawn(3)

    gprime = dpsu_collect_graph(parts, e1, mode=dpsu_mode, rng=r_collect, group=group, ledger=ledger)
    assignment = partition_nodes(parts, e2, r_part, ledger=ledger)

    sens = delta.sensitivity(query, union(parts))
    ledger.record("perturb", "laplace", e3, party="clients")
    slots = "n" if kstar_slots == "n" else "incident"
    total = 0.0
    local = []
    for i, (g, crng) in enumerate(zip(parts, r_perturb.spawn(len(parts)))):
        u = assignment.nodes(i)
        if query.kind == "triangle":
            q = featplus_triangles(gprime, g, u, e1, t1_form=t1_form)
        else:
            q = featplus_kstar(gprime, g, u, query.k, e1, method=kstar_method, slots=slots)
        if not math.isinf(e3):
            q += float(laplace_samples(LaplaceChannel(sens, e3), crng, None))
        local.append(q)
        total += q
    meta = {"noisy_edges": gprime.num_edges, "sensitivity": sens, "local": local,
            "partition_sizes": [int(len(assignment.nodes(i))) for i in range(len(parts))]}
    return QueryResult(total, query, budget.epsilon_total, ledger.total(), meta)


def run_protocol(cfg: ProtocolConfig, parts, rng: np.random.Generator,
                 ledger: BudgetLedger | None = None) -> QueryResult:
    eps = cfg.budget.epsilon_total
    ledger = _ledger(ledger, eps)
    if cfg.protocol == "baseline":
        g = run_baseline(parts, eps, rng, ledger)
        return QueryResult(float(exact_query(g, cfg.query)), cfg.query, eps, ledger.total(),
                           {"noisy_edges": g.num_edges})
    if cfg.protocol == "feat":
        return run_feat(parts, eps, cfg.query, rng, dpsu_mode=cfg.dpsu_mode, group=cfg.group, ledger=ledger,
                        kstar_method=cfg.kstar_method, kstar_slots=cfg.kstar_slots)
    return run_feat_plus(parts, cfg.budget, cfg.query, rng, delta=cfg.delta, dpsu_mode=cfg.dpsu_mode,
                         group=cfg.group, ledger=ledger, kstar_method=cfg.kstar_method,
                         kstar_slots=cfg.kstar_slots, t1_form=cfg.t1_form)


def default_config(protocol: str, epsilon: float, query: QuerySpec, **kw) -> ProtocolConfig:
    return ProtocolConfig(protocol, split_budget(epsilon, kw.pop("fractions", (0.45, 0.10, 0.45))), query, **kw)
