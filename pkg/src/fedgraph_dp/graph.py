"""Graph representation, edge-domain indexing, loading and federated splitting.

Graphs are undirected and simple. Edges are stored as a sorted array of
edge-domain indices: the pair ``(i, j)`` with ``i < j`` maps to its
position in the row-major upper triangle of the ``n x n`` adjacency
matrix, so for ``n = 4`` the order is (0,1), (0,2), (0,3), (1,2), (1,3),
(2,3). Flag vectors used by the collection protocols share this order.
"""

from __future__ import annotations

import gzip
import io
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from .rng import stream

__all__ = [
    "EdgeListParseError",
    "Graph",
    "SplitConfig",
    "SubgraphCollection",
    "bfs_subsample",
    "count_kstars_exact",
    "count_triangles_exact",
    "domain_size",
    "edge_index",
    "erdos_renyi",
    "index_to_edge",
    "load_edge_list",
    "load_edge_list_path",
    "powerlaw_cluster",
    "serialize_edge_list",
    "split_federated",
    "union",
]


class EdgeListParseError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


# --------------------------------------------------------------------------
# edge domain


def domain_size(n: int) -> int:
    return n * (n - 1) // 2


def _row_start(i, n):
    return i * (2 * n - i - 1) // 2


def edge_index(i: int, j: int, n: int) -> int:
    """Position of the unordered pair ``{i, j}`` in the edge domain of ``n`` nodes."""
    i, j = int(i), int(j)
    if i == j:
        raise ValueError(f"self-loop ({i}, {j}) has no edge-domain index")
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError(f"pair ({i}, {j}) out of range for n={n}")
    if i > j:
        i, j = j, i
    return _row_start(i, n) + (j - i - 1)


def index_to_edge(idx: int, n: int) -> tuple[int, int]:
    N = domain_size(n)
    if not 0 <= idx < N:
        raise ValueError(f"index {idx} out of range for n={n} (N={N})")
    i, j = index_to_edge_array(np.array([idx], dtype=np.int64), n)
    return int(i[0]), int(j[0])


def edge_index_array(i: np.ndarray, j: np.ndarray, n: int) -> np.ndarray:
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    return _row_start(lo, n) + (hi - lo - 1)


def index_to_edge_array(idx: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.asarray(idx, dtype=np.int64)
    b = 2 * n - 1
    i = np.floor((b - np.sqrt(np.maximum(b * b - 8 * idx, 0).astype(np.float64))) / 2)
    i = i.astype(np.int64)
    # float sqrt can be off by one near row boundaries
    i = np.where(_row_start(i, n) > idx, i - 1, i)
    i = np.where(_row_start(i + 1, n) <= idx, i + 1, i)
    j = idx - _row_start(i, n) + i + 1
    return i, j


# --------------------------------------------------------------------------
# graph


class Graph:
    """Immutable undirected simple graph on nodes ``0..n-1``.

    ``edge_ids`` is the sorted array of edge-domain indices. The boolean
    flag vector (membership in O(1)) and the CSR adjacency (neighbors in
    O(deg)) are built on first use.
    """

    __slots__ = ("n", "_ids", "_flags", "_csr", "_degrees", "labels")

    def __init__(self, n: int, edge_ids: np.ndarray, labels: Sequence[int] | None = None):
        if n < 0:
            raise ValueError("node count must be non-negative")
        ids = np.asarray(edge_ids, dtype=np.int64)
        if ids.size:
            if ids.min() < 0 or ids.max() >= domain_size(n):
                raise ValueError("edge index outside the edge domain")
            if np.any(np.diff(ids) <= 0):
                ids = np.unique(ids)
        ids.setflags(write=False)
        self.n = int(n)
        self._ids = ids
        self._flags = None
        self._csr = None
        self._degrees = None
        self.labels = None if labels is None else np.asarray(labels)

    # construction -----------------------------------------------------

    @classmethod
    def from_edges(cls, n: int, pairs: Iterable[tuple[int, int]], labels=None) -> "Graph":
        arr = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
        if arr.size and (np.any(arr[:, 0] == arr[:, 1])):
            bad = arr[arr[:, 0] == arr[:, 1]][0]
            raise ValueError(f"self-loop ({bad[0]}, {bad[1]})")
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise ValueError(f"edge endpoint outside [0, {n})")
        ids = edge_index_array(arr[:, 0], arr[:, 1], n) if arr.size else arr[:0, 0]
        return cls(n, np.unique(ids), labels=labels)

    @classmethod
    def from_flags(cls, n: int, flags: np.ndarray) -> "Graph":
        flags = np.asarray(flags)
        if flags.shape != (domain_size(n),):
            raise ValueError(f"flag vector has length {flags.shape}, expected {domain_size(n)}")
        return cls(n, np.flatnonzero(flags).astype(np.int64))

    @classmethod
    def from_adjacency(cls, adj: np.ndarray) -> "Graph":
        adj = np.asarray(adj)
        n = adj.shape[0]
        iu = np.triu_indices(n, 1)
        return cls.from_flags(n, adj[iu] != 0)

    @classmethod
    def empty(cls, n: int) -> "Graph":
        return cls(n, np.empty(0, dtype=np.int64))

    # views ------------------------------------------------------------

    @property
    def edge_ids(self) -> np.ndarray:
        return self._ids

    @property
    def num_edges(self) -> int:
        return int(self._ids.size)

    @property
    def edges(self) -> frozenset[tuple[int, int]]:
        i, j = self.edge_arrays()
        return frozenset(zip(i.tolist(), j.tolist()))

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return index_to_edge_array(self._ids, self.n)

    def iter_edges(self) -> Iterator[tuple[int, int]]:
        i, j = self.edge_arrays()
        return zip(i.tolist(), j.tolist())

    @property
    def flags(self) -> np.ndarray:
        """Boolean membership vector over the edge domain."""
        if self._flags is None:
            f = np.zeros(domain_size(self.n), dtype=bool)
            f[self._ids] = True
            f.setflags(write=False)
            self._flags = f
        return self._flags

    def csr(self) -> sp.csr_matrix:
        if self._csr is None:
            i, j = self.edge_arrays()
            rows = np.concatenate([i, j])
            cols = np.concatenate([j, i])
            data = np.ones(rows.size, dtype=np.int64)
            self._csr = sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))
            self._csr.sort_indices()
        return self._csr

    def adjacency(self) -> np.ndarray:
        """Dense symmetric 0/1 adjacency matrix (uint8)."""
        a = np.zeros((self.n, self.n), dtype=np.uint8)
        i, j = self.edge_arrays()
        a[i, j] = 1
        a[j, i] = 1
        return a

    def degrees(self) -> np.ndarray:
        if self._degrees is None:
            i, j = self.edge_arrays()
            d = np.bincount(np.concatenate([i, j]), minlength=self.n).astype(np.int64)
            d.setflags(write=False)
            self._degrees = d
        return self._degrees

    def degree(self, v: int) -> int:
        return int(self.degrees()[v])

    def neighbors(self, v: int) -> np.ndarray:
        m = self.csr()
        return m.indices[m.indptr[v]:m.indptr[v + 1]]

    def has_edge(self, i: int, j: int) -> bool:
        if i == j:
            return False
        return bool(self.flags[edge_index(i, j, self.n)])

    # set algebra ------------------------------------------------------

    def union(self, other: "Graph") -> "Graph":
        self._check_universe(other)
        return Graph(self.n, np.union1d(self._ids, other._ids))

    def difference(self, other: "Graph") -> "Graph":
        self._check_universe(other)
        return Graph(self.n, np.setdiff1d(self._ids, other._ids, assume_unique=True))

    def issubset(self, other: "Graph") -> bool:
        self._check_universe(other)
        return bool(np.all(np.isin(self._ids, other._ids, assume_unique=True)))

    def induced(self, nodes: Sequence[int]) -> "Graph":
        """Induced subgraph, relabelled to ``0..len(nodes)-1`` in the given order."""
        nodes = np.asarray(nodes, dtype=np.int64)
        pos = np.full(self.n, -1, dtype=np.int64)
        pos[nodes] = np.arange(nodes.size)
        i, j = self.edge_arrays()
        keep = (pos[i] >= 0) & (pos[j] >= 0)
        k = nodes.size
        ids = edge_index_array(pos[i[keep]], pos[j[keep]], k)
        labels = nodes if self.labels is None else self.labels[nodes]
        return Graph(k, np.unique(ids), labels=labels)

    def _check_universe(self, other: "Graph") -> None:
        if other.n != self.n:
            raise ValueError(f"node universes differ: {self.n} vs {other.n}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return self.n == other.n and np.array_equal(self._ids, other._ids)

    def __hash__(self) -> int:
        return hash((self.n, self._ids.tobytes()))

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, edges={self.num_edges})"


# --------------------------------------------------------------------------
# loading / serialization


def load_edge_list(data) -> Graph:
    """Parse a SNAP-style edge list.

    ``data`` may be bytes, str, or a binary/text stream. Node ids are
    relabelled to a contiguous range in increasing order of the original
    id; the original ids are kept in ``Graph.labels``. Reversed and
    repeated pairs collapse to one edge, self-loops are dropped.
    """
    if isinstance(data, (bytes, bytearray)):
        lines = io.StringIO(bytes(data).decode("utf-8"))
    elif isinstance(data, str):
        lines = io.StringIO(data)
    else:
        raw = data.read()
        lines = io.StringIO(raw.decode("utf-8") if isinstance(raw, (bytes, bytearray)) else raw)

    us: list[int] = []
    vs: list[int] = []
    for lineno, line in enumerate(lines, start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        tok = s.split()
        if len(tok) != 2:
            raise EdgeListParseError(f"expected 2 node ids, found {len(tok)} tokens", lineno)
        try:
            u, v = int(tok[0]), int(tok[1])
        except ValueError:
            raise EdgeListParseError(f"malformed node id in {s!r}", lineno) from None
        if u < 0 or v < 0:
            raise EdgeListParseError(f"negative node id in {s!r}", lineno)
        us.append(u)
        vs.append(v)
    if not us:
        raise EdgeListParseError("edge list is empty")

    u = np.asarray(us, dtype=np.int64)
    v = np.asarray(vs, dtype=np.int64)
    labels, inv = np.unique(np.concatenate([u, v]), return_inverse=True)
    u, v = inv[: u.size], inv[u.size:]
    keep = u != v
    n = labels.size
    ids = edge_index_array(u[keep], v[keep], n)
    return Graph(n, np.unique(ids), labels=labels)


def load_edge_list_path(path) -> Graph:
    path = str(path)
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as fh:
        return load_edge_list(fh)


def serialize_edge_list(g: Graph) -> str:
    """Canonical form: one ``"i j"`` line per edge, ``i < j``, sorted."""
    return "".join(f"{i} {j}\n" for i, j in g.iter_edges())


# --------------------------------------------------------------------------
# federated splitting


@dataclass(frozen=True)
class SubgraphCollection:
    n: int
    parts: tuple[Graph, ...]

    def __post_init__(self):
        if len(self.parts) < 1:
            raise ValueError("a collection needs at least one subgraph")
        for g in self.parts:
            if g.n != self.n:
                raise ValueError(f"subgraph universe {g.n} differs from {self.n}")

    @property
    def m(self) -> int:
        return len(self.parts)

    def __len__(self) -> int:
        return len(self.parts)

    def __iter__(self):
        return iter(self.parts)

    def __getitem__(self, i) -> Graph:
        return self.parts[i]

    def union(self) -> Graph:
        return union(self)


def union(parts: Iterable[Graph]) -> Graph:
    parts = list(parts)
    if not parts:
        raise ValueError("union of no graphs")
    n = parts[0].n
    ids = np.unique(np.concatenate([g.edge_ids for g in parts])) if parts else np.empty(0, np.int64)
    for g in parts:
        if g.n != n:
            raise ValueError("subgraphs have different node universes")
    return Graph(n, ids)


@dataclass(frozen=True)
class SplitConfig:
    m: int = 4
    rho: float = 0.3
    sigma: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if not 0 < self.rho <= 1:
            raise ValueError(f"rho must be in (0, 1], got {self.rho}")
        if not 0 <= self.sigma < 1:
            raise ValueError(f"sigma must be in [0, 1), got {self.sigma}")


def split_federated(g: Graph, cfg: SplitConfig) -> SubgraphCollection:
    """Split ``g`` into ``cfg.m`` overlapping client subgraphs.

    Each client receives ``floor(rho*|E|)`` edges. About a ``sigma``
    fraction of them come from a shared pool whose edges are handed to two
    distinct clients each; the rest are dealt round-robin from the
    remaining shuffled edges. When ``m*rho`` exceeds what the fresh edges
    can supply the deal wraps around the shuffled list, so clients then
    share more than the ``sigma`` fraction.
    Pool edges go to the two clients with the most overlap quota left, so
    every client ends up with its ``round(sigma*quota)`` shared edges.
    """
    E = g.num_edges
    quota = math.floor(cfg.rho * E)
    if quota < 1:
        raise ValueError(f"infeasible split: rho*|E| = {cfg.rho * E:g} < 1")
    m = cfg.m
    rng = stream(cfg.seed, "split")
    order = g.edge_ids[rng.permutation(E)]

    overlap_quota = min(quota, round(cfg.sigma * quota)) if m >= 2 else 0
    pool_size = min(E, overlap_quota * m // 2)
    pool, rest = order[:pool_size], order[pool_size:]

    assigned: list[list[int]] = [[] for _ in range(m)]
    left = [overlap_quota] * m
    unused_pool = []
    for e in pool.tolist():
        # the two clients with most overlap quota left, ties broken at random
        tie = rng.permutation(m)
        a, b = sorted(range(m), key=lambda c: (-left[c], tie[c]))[:2]
        if left[b] <= 0:
            unused_pool.append(e)
            continue
        for c in (a, b):
            assigned[c].append(e)
            left[c] -= 1

    supply = np.concatenate([rest, np.asarray(unused_pool, dtype=np.int64), pool]).tolist()
    held = [set(a) for a in assigned]
    need = [quota - len(a) for a in assigned]
    ptr = 0
    L = len(supply)
    while any(need):
        for c in range(m):
            if need[c] <= 0:
                continue
            for _ in range(L):
                e = supply[ptr % L]
                ptr += 1
                if e not in held[c]:
                    break
            held[c].add(e)
            assigned[c].append(e)
            need[c] -= 1

    parts = tuple(Graph(g.n, np.asarray(sorted(a), dtype=np.int64)) for a in assigned)
    return SubgraphCollection(g.n, parts)


# --------------------------------------------------------------------------
# exact counts


def count_kstars_exact(g: Graph, k: int) -> int:
    if k < 1:
        raise ValueError("k must be >= 1")
    return sum(math.comb(int(d), k) for d in g.degrees())


def count_triangles_exact(g: Graph) -> int:
    # |N(u) & N(v)| summed over ordered adjacent pairs counts each triangle 6 times
    a = g.csr()
    if g.num_edges == 0:
        return 0
    return int((a @ a).multiply(a).sum()) // 6


# --------------------------------------------------------------------------
# synthetic graphs


def erdos_renyi(n: int, p: float, rng: np.random.Generator) -> Graph:
    return Graph.from_flags(n, rng.random(domain_size(n)) < p)


def powerlaw_cluster(n: int, m: int, p: float, seed: int) -> Graph:
    """Holme-Kim clustered scale-free graph (social-network stand-in)."""
    import networkx as nx

    h = nx.powerlaw_cluster_graph(n, m, p, seed=seed)
    return Graph.from_edges(n, h.edges())


def bfs_subsample(g: Graph, size: int, rng: np.random.Generator) -> Graph:
    """Induced subgraph on the first ``size`` nodes reached by BFS from random seeds."""
    if size >= g.n:
        return g
    seen = np.zeros(g.n, dtype=bool)
    picked: list[int] = []
    for start in rng.permutation(g.n).tolist():
        if len(picked) >= size:
            break
        if seen[start]:
            continue
        seen[start] = True
        queue = deque([start])
        while queue and len(picked) < size:
            v = queue.popleft()
            picked.append(v)
            for w in g.neighbors(v).tolist():
                if not seen[w]:
                    seen[w] = True
                    queue.append(w)
    return g.induced(sorted(picked[:size]))
