import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedgraph_dp.graph import Graph, SplitConfig, SubgraphCollection, count_triangles_exact, domain_size, erdos_renyi, split_federated, union
from fedgraph_dp.mechanisms import BudgetExceeded, BudgetLedger, RRChannel, split_budget
from fedgraph_dp.protocols import (
    PROTOCOLS,
    DeltaPolicy,
    ProtocolConfig,
    assign_nodes,
    default_config,
    partition_nodes,
    run_baseline,
    run_feat,
    run_feat_plus,
    run_protocol,
)
from fedgraph_dp.queries import QuerySpec, exact_query
from fedgraph_dp.rng import stream

TRI = QuerySpec("triangle")
STAR2 = QuerySpec("kstar", 2)


def four_triangle_parts():
    return SubgraphCollection(4, tuple(Graph.from_edges(4, e) for e in (
        [(0, 1), (1, 2)], [(0, 2), (2, 3)], [(0, 3), (1, 3), (1, 2)])))


def random_parts(seed, n=15, m=3, rho=0.4, sigma=0.2):
    g = erdos_renyi(n, 0.35, np.random.default_rng(seed))
    return split_federated(g, SplitConfig(m, rho, sigma, seed))


# ---- baseline


def test_baseline_noise_free_is_union():
    parts = random_parts(0)
    assert run_baseline(parts, math.inf, stream(0)) == parts.union()


def test_baseline_single_client_is_plain_rr():
    g = erdos_renyi(20, 0.3, np.random.default_rng(1))
    eps = 1.0
    rates = [(run_baseline([g], eps, stream(s, "b1")).flags != g.flags).mean() for s in range(300)]
    assert abs(np.mean(rates) - RRChannel(eps).p) < 0.01


def test_baseline_slot_density_matches_closed_form():
    n, m, eps = 10, 4, 2.0
    rng = np.random.default_rng(2)
    parts = [Graph.from_flags(n, rng.random(domain_size(n)) < 0.3) for _ in range(m)]
    owners = sum(p.flags.astype(int) for p in parts)
    q = RRChannel(eps / m).p
    # a slot reads 0 only if each owner flipped away and each non-owner kept its 0
    p_one = 1 - q**owners * (1 - q) ** (m - owners)
    runs = np.array([run_baseline(parts, eps, stream(s, "bd")).flags for s in range(3000)])
    emp = runs.mean(axis=0)
    se = np.sqrt(p_one * (1 - p_one) / len(runs))
    assert np.all(np.abs(emp - p_one) < 5 * se + 1e-12)
    one_owner = owners == 1
    assert np.allclose(p_one[one_owner], 1 - q * (1 - q) ** (m - 1))


def test_baseline_ledger_per_client():
    led = BudgetLedger(2.0)
    run_baseline(random_parts(3, m=4), 2.0, stream(0), led)
    assert led.by_party("collect") == {f"client-{i}": 0.5 for i in range(1, 5)}
    assert led.total() == 2.0


# ---- FEAT


def test_feat_noise_free_counts():
    parts = four_triangle_parts()
    assert run_feat(parts, math.inf, TRI, stream(0)).estimate == 4
    assert run_feat(parts, math.inf, STAR2, stream(0)).estimate == 12
    for mode in ("single-flip", "literal-alg3"):
        r = run_feat(random_parts(4), math.inf, TRI, stream(1), dpsu_mode=mode)
        assert r.estimate == count_triangles_exact(random_parts(4).union())


def test_feat_single_charge():
    led = BudgetLedger(3.0)
    r = run_feat(random_parts(5), 3.0, TRI, stream(0), ledger=led)
    assert [(e.phase, e.epsilon) for e in led.entries] == [("collect", 3.0)]
    assert r.budget_spent == 3.0


# ---- partition


def test_partition_single_client():
    parts = [erdos_renyi(12, 0.3, np.random.default_rng(0))]
    a = partition_nodes(parts, 0.3, stream(0))
    assert a.nodes(0).tolist() == list(range(12))


def test_partition_noise_free_prefers_local_degree():
    # node 3 has degree 2 at client 0 and 1 at clients 1 and 2
    parts = [Graph.from_edges(5, [(3, 0), (3, 1)]), Graph.from_edges(5, [(3, 2)]), Graph.from_edges(5, [(3, 4)])]
    a = partition_nodes(parts, math.inf, stream(0))
    assert a.owner[3] == 0


def test_partition_tie_goes_to_lowest_index():
    parts = [Graph.from_edges(3, [(0, 1)]), Graph.from_edges(3, [(0, 1)])]
    a = partition_nodes(parts, math.inf, stream(0))
    assert a.owner.tolist() == [0, 0, 0]


def test_partition_always_valid():
    for s in range(1000):
        rng = np.random.default_rng(s)
        m = int(rng.integers(1, 6))
        n = int(rng.integers(3, 12))
        parts = [Graph.from_flags(n, rng.random(domain_size(n)) < 0.3) for _ in range(m)]
        a = partition_nodes(parts, float(rng.uniform(0.05, 3)), stream(s, "part"))
        assert a.is_partition()
        groups = a.groups()
        assert sum(len(g) for g in groups) == n


@given(st.integers(1, 5), st.integers(1, 6), st.data())
def test_argmax_shift_invariance(m, n, data):
    # quarter-integer reports keep every sum exact, so ties survive the shift
    noisy = np.array(data.draw(st.lists(st.integers(-200, 200), min_size=m * n, max_size=m * n))).reshape(m, n) / 4
    shift = np.array(data.draw(st.lists(st.integers(-400, 400), min_size=n, max_size=n))) / 4
    assert np.array_equal(assign_nodes(noisy + shift), assign_nodes(noisy))


def test_partition_ledger_and_validation():
    led = BudgetLedger(0.3)
    partition_nodes(random_parts(0, m=3), 0.3, stream(0), ledger=led)
    assert led.total() == 0.3 and len(led.entries) == 3
    with pytest.raises(ValueError):
        partition_nodes(random_parts(0), 0.0, stream(0))


# ---- FEAT+


def test_feat_plus_noise_free_exact():
    parts = random_parts(6, n=18, m=4)
    b = split_budget(math.inf)
    for q in (TRI, STAR2, QuerySpec("kstar", 3)):
        assert run_feat_plus(parts, b, q, stream(0)).estimate == pytest.approx(exact_query(parts.union(), q))


def test_feat_plus_phase_charges():
    led = BudgetLedger(3.0)
    run_feat_plus(random_parts(7), split_budget(3.0), TRI, stream(0), ledger=led)
    phases = led.by_phase()
    assert phases["collect"] == pytest.approx(1.35, abs=1e-15)
    assert phases["partition"] == pytest.approx(0.3, abs=1e-15)
    assert phases["perturb"] == pytest.approx(1.35, abs=1e-15)
    assert led.total() == 3.0


def test_overspend_aborts_run():
    led = BudgetLedger(2.0)
    with pytest.raises(BudgetExceeded):
        run_feat_plus(random_parts(8), split_budget(3.0), TRI, stream(0), ledger=led)


def test_delta_policy():
    g = Graph.from_edges(5, [(0, 1), (0, 2), (0, 3), (1, 2)])
    assert DeltaPolicy().sensitivity(TRI, g) == 3
    assert DeltaPolicy().sensitivity(QuerySpec("kstar", 3), g) == math.comb(3, 2)
    assert DeltaPolicy(degree_cap=10).sensitivity(STAR2, g) == 10
    assert DeltaPolicy(fixed=2.5).sensitivity(TRI, g) == 2.5
    assert DeltaPolicy().sensitivity(TRI, Graph.empty(3)) == 1


# ---- dispatch


def test_all_protocols_noise_free_agree():
    parts = random_parts(9, n=16, m=3)
    truth = exact_query(parts.union(), TRI)
    for proto in PROTOCOLS:
        r = run_protocol(default_config(proto, math.inf, TRI), parts, stream(0))
        assert r.estimate == truth


def test_protocol_ledger_totals_equal_epsilon():
    parts = random_parts(10, m=4)
    for eps in (0.7, 1.1, 2.0, 3.0, 5.3):
        for proto in PROTOCOLS:
            led = BudgetLedger(eps)
            run_protocol(default_config(proto, eps, STAR2), parts, stream(1), led)
            assert led.total() == eps


def test_protocol_config_validation():
    with pytest.raises(ValueError):
        ProtocolConfig("other", split_budget(1.0), TRI)


def test_reproducible_given_seed():
    parts = random_parts(11)
    a = run_protocol(default_config("feat_plus", 2.0, TRI), parts, stream(5)).estimate
    b = run_protocol(default_config("feat_plus", 2.0, TRI), parts, stream(5)).estimate
    assert a == b
