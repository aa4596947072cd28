import io
import math
import subprocess
import sys

import pytest

from fedgraph_dp.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from fedgraph_dp.graph import Graph, serialize_edge_list
from fedgraph_dp.harness import (
    CSV_COLUMNS,
    ExperimentConfig,
    MetricsReport,
    bench_group_ops,
    emit_csv,
    load_graph,
    read_csv,
    run_experiment,
)
from fedgraph_dp.queries import QuerySpec

SMALL = dict(synthetic="24,0.3", trials=2, queries=(QuerySpec("triangle"), QuerySpec("kstar", 2)))


def test_config_defaults_and_validation():
    cfg = ExperimentConfig(synthetic="10,0.5")
    assert (cfg.m, cfg.rhos, cfg.sigmas, cfg.epsilons, cfg.trials) == (4, (0.3,), (0.2,), (3.0,), 10)
    assert cfg.budget_fractions == (0.45, 0.10, 0.45)
    for bad in [dict(trials=0), dict(epsilons=()), dict(protocols=("x",)), dict(workers=0),
                dict(dataset="a", synthetic="10,0.5")]:
        with pytest.raises(ValueError):
            ExperimentConfig(**{"synthetic": "10,0.5", **bad})
    with pytest.raises(ValueError):
        load_graph(ExperimentConfig())
    with pytest.raises(ValueError):
        load_graph(ExperimentConfig(synthetic="ten,0.5"))


def test_report_shape_and_noise_free_zero_error():
    cfg = ExperimentConfig(**{**SMALL, "trials": 1}, epsilons=(math.inf,), sigmas=(0.0, 0.3))
    rep = run_experiment(cfg)
    assert len(rep.rows) == 1 * 2 * 3 * 2  # eps x sigma x protocols x queries
    for r in rep.rows:
        assert r.mse == 0 and r.mre == 0 and r.mean_estimate == r.truth


def test_same_seed_byte_identical_csv(tmp_path):
    cfg = ExperimentConfig(**SMALL, timing=False)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_csv(run_experiment(cfg), a)
    emit_csv(run_experiment(cfg), b)
    assert a.read_bytes() == b.read_bytes()


def test_results_do_not_depend_on_workers():
    a = run_experiment(ExperimentConfig(**SMALL, timing=False, protocols=("baseline", "feat")))
    b = run_experiment(ExperimentConfig(**SMALL, timing=False, protocols=("baseline", "feat"), workers=2))
    assert a.to_csv() == b.to_csv()


def test_fixed_split_changes_truth_variation():
    cfg = ExperimentConfig(**{**SMALL, "trials": 3}, epsilons=(math.inf,), fixed_split=True, protocols=("baseline",))
    rep = run_experiment(cfg)
    assert all(r.mse == 0 for r in rep.rows)


def test_csv_round_trip_and_columns(tmp_path):
    rep = run_experiment(ExperimentConfig(**SMALL))
    p = tmp_path / "r.csv"
    emit_csv(rep, p)
    assert p.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    back = read_csv(p)
    assert back.rows == rep.rows
    assert read_csv(io.StringIO(rep.to_csv())).rows == rep.rows


def test_empty_report_is_header_only(tmp_path):
    p = tmp_path / "e.csv"
    emit_csv(MetricsReport(), p)
    assert p.read_text() == ",".join(CSV_COLUMNS) + "\n"
    with pytest.raises(ValueError):
        read_csv(io.StringIO("a,b\n"))


def test_dataset_file_and_subsample(tmp_path):
    g = Graph.from_edges(30, [(i, (i * 7 + 3) % 30) for i in range(30) if i != (i * 7 + 3) % 30]
                         + [(i, (i + 1) % 30) for i in range(30)])
    p = tmp_path / "g.txt"
    p.write_text(serialize_edge_list(g))
    assert load_graph(ExperimentConfig(dataset=str(p))).num_edges == g.num_edges
    assert load_graph(ExperimentConfig(dataset=str(p), subsample=12)).n == 12
    assert load_graph(ExperimentConfig(synthetic="plc:50,3,0.5")).n == 50


def test_bench_rows():
    rows = bench_group_ops("schnorr-64", (10, 100, 1000))
    assert {(r["op"], r["batch"]) for r in rows} == {(o, b) for o in ("exp", "encrypt", "decrypt") for b in (10, 100, 1000)}
    for op in ("exp", "encrypt", "decrypt"):
        t = [r["seconds"] for r in rows if r["op"] == op]
        assert t == sorted(t)


def test_bench_reference_vs_production_same_batches():
    ref = bench_group_ops("schnorr-64", (10, 100))
    prod = bench_group_ops("ed25519", (10, 100))
    assert [(r["op"], r["batch"]) for r in ref] == [(r["op"], r["batch"]) for r in prod]
    # the curve group does real 128-bit-security work and is slower per exponentiation
    assert sum(r["seconds"] for r in prod if r["op"] == "exp") > sum(r["seconds"] for r in ref if r["op"] == "exp")


# ---- CLI


def test_cli_runs_and_writes_csv(tmp_path, capsys):
    out = tmp_path / "o.csv"
    rc = main(["--synthetic", "20,0.3", "--trials", "1", "--epsilon", "2,3", "--protocol", "feat",
               "--query", "triangle", "--out", str(out), "--no-timing"])
    assert rc == EXIT_OK
    rows = read_csv(out).rows
    assert [(r.protocol, r.query, r.epsilon) for r in rows] == [("feat", "triangle", 2.0), ("feat", "triangle", 3.0)]


def test_cli_stdout(capsys):
    assert main(["--synthetic", "12,0.4", "--trials", "1", "--protocol", "baseline", "--query", "kstar:2"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("protocol,query")


def test_cli_config_file_and_override(tmp_path):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text("# experiment\nsynthetic = 14,0.4\ntrials=1\nprotocol=baseline,feat\nquery=triangle\nepsilon=1,2\n")
    out = tmp_path / "o.csv"
    assert main(["--config", str(cfgfile), "--epsilon", "4", "--out", str(out)]) == EXIT_OK
    rows = read_csv(out).rows
    assert {r.epsilon for r in rows} == {4.0}
    assert {r.protocol for r in rows} == {"baseline", "feat"}


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["--m", "x", "--synthetic", "10,0.5"]) == EXIT_CONFIG
    assert main([]) == EXIT_CONFIG
    assert main(["--synthetic", "10,0.5", "--query", "square"]) == EXIT_CONFIG
    assert main(["--synthetic", "10,0.5", "--trials", "0"]) == EXIT_CONFIG
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense line\n")
    assert main(["--config", str(bad)]) == EXIT_CONFIG
    bad.write_text("colour=blue\n")
    assert main(["--config", str(bad)]) == EXIT_CONFIG
    assert main(["--dataset", str(tmp_path / "missing.txt"), "--trials", "1"]) == EXIT_RUNTIME
    # too few edges to give every client one
    assert main(["--synthetic", "3,0.0", "--trials", "1"]) == EXIT_RUNTIME


def test_cli_bench(capsys):
    assert main(["--bench", "--bench-sizes", "10,100"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "group,op,batch,seconds,ops_per_sec"
    assert len(lines) == 1 + 6


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "fedgraph_dp", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "--dpsu-mode" in r.stdout
