import math
import threading

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from fedgraph_dp.mechanisms import (
    BudgetExceeded,
    BudgetLedger,
    LaplaceChannel,
    PrivacyBudget,
    RRChannel,
    exact_split,
    flip_probability,
    laplace_sample,
    laplace_samples,
    rr_apply,
    rr_flip,
    split_budget,
)
from fedgraph_dp.rng import derive_seed, stream


def test_flip_probability_values():
    assert flip_probability(math.log(3)) == pytest.approx(0.25, abs=1e-15)
    assert flip_probability(math.inf) == 0.0
    assert flip_probability(1e-9) == pytest.approx(0.5, abs=1e-9)
    assert flip_probability(800.0) >= 0.0
    for bad in [0.0, -1.0, float("nan")]:
        with pytest.raises(ValueError):
            flip_probability(bad)


@given(st.floats(1e-6, 50))
def test_flip_probability_range(eps):
    p = RRChannel(eps).p
    assert 0 < p < 0.5
    assert p == pytest.approx(1 / (1 + math.exp(eps)), rel=1e-12)


def test_rr_identity_at_infinity():
    rng = np.random.default_rng(0)
    ch = RRChannel(math.inf)
    assert rr_apply(0, ch, rng) == 0 and rr_apply(1, ch, rng) == 1
    bits = rng.random(1000) < 0.5
    assert np.array_equal(rr_flip(bits, ch, rng), bits)
    with pytest.raises(ValueError):
        rr_apply(2, ch, rng)


def test_rr_empirical_flip_rate():
    rng = stream(1, "rr")
    ch = RRChannel(1.0)
    flips = rr_flip(np.zeros(100_000, dtype=bool), ch, rng).mean()
    assert abs(flips - 1 / (1 + math.e)) < 0.005
    scalar = np.mean([rr_apply(1, ch, rng) == 0 for _ in range(20_000)])
    assert abs(scalar - ch.p) < 0.01


@pytest.mark.parametrize("eps", [0.5, 1.0, 3.0])
def test_rr_transition_matrix_chi2(eps):
    rng = stream(2, "chi2", repr(eps))
    ch = RRChannel(eps)
    n = 100_000
    for b in (0, 1):
        out = rr_flip(np.full(n, bool(b)), ch, rng)
        ones = int(out.sum())
        expect_one = (1 - ch.p) if b else ch.p
        _, pval = stats.chisquare([n - ones, ones], [n * (1 - expect_one), n * expect_one])
        assert pval > 1e-4


def test_laplace_moments():
    ch = LaplaceChannel(2.0, 0.5)
    x = laplace_samples(ch, stream(3, "lap"), 100_000)
    assert abs(x.mean()) < 3 * ch.scale * math.sqrt(2) / math.sqrt(x.size)
    assert x.var() == pytest.approx(2 * ch.scale**2, rel=0.03)
    # distributional check against scipy's Laplace
    assert stats.kstest(x, stats.laplace(scale=ch.scale).cdf).pvalue > 1e-4
    assert isinstance(laplace_sample(ch, stream(3, "one")), float)


def test_laplace_channel_validation():
    for bad in [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (1.0, math.inf)]:
        with pytest.raises(ValueError):
            LaplaceChannel(*bad)


def test_split_budget_examples():
    b = split_budget(3.0)
    assert b.as_tuple() == pytest.approx((1.35, 0.3, 1.35), abs=1e-15)
    assert math.fsum(b.as_tuple()) == 3.0
    assert split_budget(2.0, (1, 0, 0)).as_tuple() == (2.0, 0.0, 0.0)
    assert split_budget(2.0, (0.5, 0.2, 0.3)).as_tuple() == pytest.approx((1.0, 0.4, 0.6), abs=1e-15)
    for bad in [(0.5, 0.5, 0.5), (0.5, 0.5), (1.2, -0.2, 0.0)]:
        with pytest.raises(ValueError):
            split_budget(1.0, bad)
    with pytest.raises(ValueError):
        PrivacyBudget(1.0, 0.5, 0.5, 0.5)


@given(st.floats(1e-3, 100), st.lists(st.floats(0.01, 1.0), min_size=1, max_size=10))
def test_exact_split_sums_exactly(total, weights):
    w = [x / sum(weights) for x in weights]
    shares = exact_split(total, w)
    assert math.fsum(shares) == total
    for s, x in zip(shares, w):
        assert s == pytest.approx(total * x, rel=1e-9, abs=1e-12)


def test_ledger_accounting_and_overspend():
    led = BudgetLedger(2.0)
    for i, e in enumerate(exact_split(2.0, [0.25] * 4)):
        led.record("collect", "rr", e, party=f"client-{i + 1}")
    assert led.total() == 2.0
    assert led.by_party("collect") == {f"client-{i}": 0.5 for i in range(1, 5)}
    with pytest.raises(BudgetExceeded):
        led.record("extra", "laplace", 0.1)
    assert len(led.entries) == 4
    csv_text = led.to_csv()
    assert csv_text.splitlines()[0] == "phase,mechanism,epsilon,party"
    assert len(csv_text.splitlines()) == 5
    with pytest.raises(ValueError):
        led.record("x", "y", -1.0)


def test_ledger_concurrent_appends():
    led = BudgetLedger(math.inf)

    def work(k):
        for _ in range(200):
            led.record("p", "m", 0.001, party=str(k))

    ts = [threading.Thread(target=work, args=(k,)) for k in range(8)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert len(led.entries) == 1600
    assert [e.seq for e in led.entries] == list(range(1600))


def test_streams_are_keyed_and_reproducible():
    a = stream(5, "client", 1).random(4)
    assert np.array_equal(a, stream(5, "client", 1).random(4))
    assert not np.array_equal(a, stream(5, "client", 2).random(4))
    assert not np.array_equal(a, stream(6, "client", 1).random(4))
    assert derive_seed(5, "x") == derive_seed(5, "x") != derive_seed(5, "y")
    with pytest.raises(ValueError):
        stream(1, -3)


def test_exact_split_half_ulp_tie():
    # the first share sums to a rounding tie at total's precision
    total = 1.979527289914475
    shares = exact_split(total, [0.2, 0.8])
    assert math.fsum(shares) == total
    assert shares == pytest.approx([0.2 * total, 0.8 * total], rel=1e-15)
