"""Experiment runner: datasets, trial grid, metrics and CSV output."""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from itertools import product
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .crypto.elgamal import combine_many, encrypt_bits, keygen, partial_decrypt_many
from .crypto.groups import REFERENCE_GROUP, GroupBackend, get_group
from .graph import Graph, SplitConfig, bfs_subsample, erdos_renyi, load_edge_list_path, powerlaw_cluster, split_federated
from .mechanisms import DEFAULT_FRACTIONS, split_budget
from .protocols import PROTOCOLS, DeltaPolicy, ProtocolConfig, run_protocol
from .queries import QuerySpec, exact_query
from .rng import derive_seed, stream

__all__ = [
    "CSV_COLUMNS",
    "ExperimentConfig",
    "MetricsReport",
    "MetricsRow",
    "bench_group_ops",
    "emit_csv",
    "facebook_surrogate",
    "load_graph",
    "read_csv",
    "run_experiment",
]

CSV_COLUMNS = ("protocol", "query", "epsilon", "rho", "sigma", "m", "trials",
               "truth", "mean_estimate", "mse", "mre", "seconds")

FACEBOOK_ENV = "FEDGRAPH_FACEBOOK"


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str | None = None
    synthetic: str | None = None  # "n,p" (Erdos-Renyi) or "plc:n,m,p"
    subsample: int | None = None
    m: int = 4
    rhos: tuple[float, ...] = (0.3,)
    sigmas: tuple[float, ...] = (0.2,)
    epsilons: tuple[float, ...] = (3.0,)
    budget_fractions: tuple[float, float, float] = DEFAULT_FRACTIONS
    protocols: tuple[str, ...] = PROTOCOLS
    queries: tuple[QuerySpec, ...] = (QuerySpec("kstar", 2), QuerySpec("triangle"))
    dpsu_mode: str = "single-flip"
    trials: int = 10
    seed: int = 0
    fixed_split: bool = False
    group: str = REFERENCE_GROUP
    degree_cap: int | None = None
    workers: int = 1
    timing: bool = True  # off: seconds column is 0 so reruns are byte-identical

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for name in ("rhos", "sigmas", "epsilons", "protocols", "queries"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be nonempty")
        for p in self.protocols:
            if p not in PROTOCOLS:
                raise ValueError(f"unknown protocol {p!r}")
        if self.dataset is not None and self.synthetic is not None:
            raise ValueError("give only one of dataset or synthetic")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class MetricsRow:
    protocol: str
    query: str
    epsilon: float
    rho: float
    sigma: float
    m: int
    trials: int
    truth: float
    mean_estimate: float
    mse: float
    mre: float
    seconds: float


@dataclass
class MetricsReport:
    rows: list[MetricsRow] = field(default_factory=list)

    def get(self, protocol: str, query: str, **match) -> list[MetricsRow]:
        return [r for r in self.rows if r.protocol == protocol and r.query == query
                and all(getattr(r, k) == v for k, v in match.items())]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(r, c) for c in CSV_COLUMNS)])
        return buf.getvalue()


def emit_csv(report: MetricsReport, path) -> None:
    Path(path).write_text(report.to_csv())


def read_csv(source) -> MetricsReport:
    text = Path(source).read_text() if not isinstance(source, io.StringIO) else source.getvalue()
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != CSV_COLUMNS:
        raise ValueError(f"unexpected header {header}")
    types = {f.name: f.type for f in fields(MetricsRow)}
    conv = {"str": str, "int": int, "float": float}
    rows = [MetricsRow(**{c: conv[types[c]](v) for c, v in zip(CSV_COLUMNS, rec)}) for rec in reader if rec]
    return MetricsReport(rows)


# --------------------------------------------------------------------------
# datasets


def facebook_surrogate(seed: int = 0, n: int = 4039) -> Graph:
    """Clustered scale-free graph sized like the SNAP ego-Facebook network
    (4039 nodes, mean degree about 44); used when the real file is absent."""
    return powerlaw_cluster(n, 22, 0.6, seed)


def load_graph(cfg: ExperimentConfig) -> Graph:
    if cfg.dataset is not None:
        if cfg.dataset == "facebook-surrogate":
            g = facebook_surrogate(derive_seed(cfg.seed, "surrogate"))
        else:
            g = load_edge_list_path(cfg.dataset)
    elif cfg.synthetic is not None:
        spec = cfg.synthetic.strip()
        try:
            if spec.startswith("plc:"):
                n, mm, p = spec[4:].split(",")
                g = powerlaw_cluster(int(n), int(mm), float(p), derive_seed(cfg.seed, "synthetic"))
            else:
                n, p = spec.split(",")
                g = erdos_renyi(int(n), float(p), stream(cfg.seed, "synthetic"))
        except ValueError as exc:
            raise ValueError(f"bad synthetic spec {spec!r}: {exc}") from None
    else:
        raise ValueError("no dataset or synthetic graph configured")
    if cfg.subsample:
        g = bfs_subsample(g, cfg.subsample, stream(cfg.seed, "subsample"))
    return g


# --------------------------------------------------------------------------
# running


def _trial(args):
    """One (rho, sigma, trial) cell: split once, run every protocol/query/epsilon."""
    g, cfg, rho, sigma, trial = args
    split_seed = derive_seed(cfg.seed, "split", repr(rho), repr(sigma), 0 if cfg.fixed_split else trial)
    parts = split_federated(g, SplitConfig(cfg.m, rho, sigma, split_seed))
    union = parts.union()
    out = []
    for eps, proto, q in product(cfg.epsilons, cfg.protocols, cfg.queries):
        truth = exact_query(union, q)
        pc = ProtocolConfig(proto, split_budget(eps, cfg.budget_fractions), q, dpsu_mode=cfg.dpsu_mode,
                            delta=DeltaPolicy(degree_cap=cfg.degree_cap), group=cfg.group)
        rng = stream(cfg.seed, "run", proto, str(q), repr(eps), repr(rho), repr(sigma), trial)
        t0 = time.perf_counter()
        res = run_protocol(pc, parts, rng)
        dt = time.perf_counter() - t0
        out.append(((proto, str(q), eps, rho, sigma), trial, truth, res.estimate, dt))
    return out


def run_experiment(cfg: ExperimentConfig, graph: Graph | None = None) -> MetricsReport:
    """Every grid point gets ``cfg.trials`` runs; results do not depend on ``workers``.

    ``seconds`` is the mean wall-clock time of one protocol run, dataset
    loading and splitting excluded.
    """
    g = graph if graph is not None else load_graph(cfg)
    tasks = [(g, cfg, rho, sigma, t) for rho, sigma in product(cfg.rhos, cfg.sigmas) for t in range(cfg.trials)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(_trial, tasks))
    else:
        results = [_trial(t) for t in tasks]

    cells: dict[tuple, list] = {}
    for batch in results:
        for key, trial, truth, est, dt in batch:
            cells.setdefault(key, []).append((trial, truth, est, dt))

    rows = []
    for eps, rho, sigma, proto, q in product(cfg.epsilons, cfg.rhos, cfg.sigmas, cfg.protocols, cfg.queries):
        key = (proto, str(q), eps, rho, sigma)
        recs = sorted(cells[key])
        truth = np.array([r[1] for r in recs], dtype=float)
        est = np.array([r[2] for r in recs], dtype=float)
        err = est - truth
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(truth != 0, np.abs(err) / np.abs(truth), np.nan)
        rows.append(MetricsRow(
            proto, str(q), float(eps), float(rho), float(sigma), cfg.m, len(recs),
            float(truth.mean()), float(est.mean()), float(np.mean(err**2)),
            float(np.mean(rel)), float(np.mean([r[3] for r in recs])) if cfg.timing else 0.0,
        ))
    return MetricsReport(rows)


# --------------------------------------------------------------------------
# micro-benchmark


def bench_group_ops(backend: GroupBackend | str = REFERENCE_GROUP, sizes: Sequence[int] = (10, 100, 1000, 10000),
                    parties: int = 4, seed: int = 0) -> list[dict]:
    """Seconds and ops/sec for exponentiation, encryption and joint decryption."""
    grp = get_group(backend) if isinstance(backend, str) else backend
    rng = stream(seed, "bench", grp.name)
    shares, pk = keygen(parties, grp, rng)
    rows = []
    for size in sizes:
        bits = (rng.random(size) < 0.5).tolist()
        ks = grp.random_scalars(rng, size)

        t0 = time.perf_counter()
        for k in ks:
            grp.exp_g(k)
        t_exp = time.perf_counter() - t0

        t0 = time.perf_counter()
        cts = encrypt_bits(bits, pk, grp, rng)
        t_enc = time.perf_counter() - t0

        t0 = time.perf_counter()
        partials = {s.index: partial_decrypt_many(cts, s, grp) for s in shares}
        dec = combine_many(cts, partials, grp, parties)
        t_dec = time.perf_counter() - t0
        if dec.tolist() != bits:
            raise RuntimeError("benchmark decryption mismatch")

        for op, t in (("exp", t_exp), ("encrypt", t_enc), ("decrypt", t_dec)):
            rows.append({"group": grp.name, "op": op, "batch": size, "seconds": t,
                         "ops_per_sec": size / t if t > 0 else math.inf})
    return rows


def bench_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["group", "op", "batch", "seconds", "ops_per_sec"], lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def facebook_path() -> str | None:
    p = os.environ.get(FACEBOOK_ENV)
    return p if p and Path(p).exists() else None
