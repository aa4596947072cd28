"""Command-line entry point: ``fedgraph-dp [options]``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .crypto.dpsu import DPSU_MODES
from .crypto.groups import REFERENCE_GROUP, available_groups
from .harness import ExperimentConfig, bench_csv, bench_group_ops, emit_csv, run_experiment
from .mechanisms import DEFAULT_FRACTIONS
from .protocols import PROTOCOLS
from .queries import QuerySpec

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _floats(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fedgraph-dp", description="Federated graph statistics under edge differential privacy.")
    p.add_argument("--config", help="file of key=value lines; command-line flags take precedence")
    src = p.add_argument_group("graph")
    src.add_argument("--dataset", help="edge-list file (.gz ok), or 'facebook-surrogate'")
    src.add_argument("--synthetic", help="'n,p' for G(n,p) or 'plc:n,m,p' for a clustered power-law graph")
    src.add_argument("--subsample", type=int, help="BFS-subsample this many nodes")
    ex = p.add_argument_group("experiment")
    ex.add_argument("--m", type=int, default=4, help="number of clients (default 4)")
    ex.add_argument("--rho", type=_floats, default=(0.3,), help="sampling rate(s), comma-separated")
    ex.add_argument("--sigma", type=_floats, default=(0.2,), help="overlap rate(s), comma-separated")
    ex.add_argument("--epsilon", type=_floats, default=(3.0,), help="privacy budget(s), comma-separated; 'inf' disables noise")
    ex.add_argument("--budget-fractions", type=_floats, default=DEFAULT_FRACTIONS,
                    help="FEAT+ split of epsilon into collection, partition and perturbation")
    ex.add_argument("--protocol", action="append", choices=PROTOCOLS, help="repeatable; default all three")
    ex.add_argument("--query", action="append", help="'triangle' or 'kstar:K'; repeatable; default kstar:2 and triangle")
    ex.add_argument("--dpsu-mode", choices=DPSU_MODES, default="single-flip")
    ex.add_argument("--group", choices=available_groups(), default=REFERENCE_GROUP)
    ex.add_argument("--degree-cap", type=int, help="public degree bound D for FEAT+ sensitivity")
    ex.add_argument("--trials", type=int, default=10)
    ex.add_argument("--seed", type=int, default=0)
    ex.add_argument("--fixed-split", action="store_true", help="reuse one split for all trials")
    ex.add_argument("--workers", type=int, default=1, help="parallel trial processes")
    ex.add_argument("--no-timing", action="store_true", help="write 0 for seconds so reruns are byte-identical")
    ex.add_argument("--out", help="CSV output path (default stdout)")
    b = p.add_argument_group("benchmark")
    b.add_argument("--bench", action="store_true", help="time group operations instead of running experiments")
    b.add_argument("--bench-sizes", type=_floats, default=(10, 100, 1000, 10000))
    return p


def read_config_file(path: str) -> dict[str, str]:
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for no, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{no}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _apply_file(parser: argparse.ArgumentParser, values: dict[str, str]) -> None:
    actions = {a.dest: a for a in parser._actions}
    defaults = {}
    for k, v in values.items():
        a = actions.get(k)
        if a is None or k in ("config", "help"):
            raise ConfigError(f"unknown config key {k!r}")
        if isinstance(a, argparse._StoreTrueAction):
            defaults[k] = v.lower() in ("1", "true", "yes", "on")
        elif isinstance(a, argparse._AppendAction):
            defaults[k] = [x.strip() for x in v.split(",") if x.strip()]
        else:
            try:
                defaults[k] = a.type(v) if a.type else v
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise ConfigError(f"config key {k}: {exc}") from None
            if a.choices and defaults[k] not in a.choices:
                raise ConfigError(f"config key {k}: {v!r} not in {list(a.choices)}")
    parser.set_defaults(**defaults)


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    cfg_path = None
    argv_list = list(sys.argv[1:] if argv is None else argv)
    for i, tok in enumerate(argv_list):
        if tok == "--config" and i + 1 < len(argv_list):
            cfg_path = argv_list[i + 1]
        elif tok.startswith("--config="):
            cfg_path = tok.split("=", 1)[1]
    if cfg_path:
        _apply_file(parser, read_config_file(cfg_path))
    return parser.parse_args(argv_list)


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    try:
        queries = tuple(QuerySpec.parse(q) for q in (ns.query or ["kstar:2", "triangle"]))
        if len(ns.budget_fractions) != 3:
            raise ValueError("--budget-fractions needs three values")
        return ExperimentConfig(
            dataset=ns.dataset, synthetic=ns.synthetic, subsample=ns.subsample, m=ns.m,
            rhos=ns.rho, sigmas=ns.sigma, epsilons=ns.epsilon, budget_fractions=tuple(ns.budget_fractions),
            protocols=tuple(ns.protocol or PROTOCOLS), queries=queries, dpsu_mode=ns.dpsu_mode,
            trials=ns.trials, seed=ns.seed, fixed_split=ns.fixed_split, group=ns.group,
            degree_cap=ns.degree_cap, workers=ns.workers, timing=not ns.no_timing,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def main(argv=None) -> int:
    try:
        ns = parse_args(argv)
        if ns.bench:
            rows = bench_group_ops(ns.group, [int(s) for s in ns.bench_sizes], parties=ns.m, seed=ns.seed)
            text = bench_csv(rows)
            if ns.out:
                Path(ns.out).write_text(text)
            else:
                sys.stdout.write(text)
            return EXIT_OK
        cfg = config_from_args(ns)
        if cfg.dataset is None and cfg.synthetic is None:
            raise ConfigError("one of --dataset or --synthetic is required")
    except ConfigError as exc:
        print(f"fedgraph-dp: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"fedgraph-dp: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        report = run_experiment(cfg)
        if ns.out:
            emit_csv(report, ns.out)
        else:
            sys.stdout.write(report.to_csv())
    except Exception as exc:
        print(f"fedgraph-dp: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
