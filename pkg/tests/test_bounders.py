import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aqpbounds.bounders import (
    EBS_KAPPA,
    AndersonDKW,
    BounderError,
    EmpiricalBernsteinSerfling,
    HoeffdingSerfling,
    MisconfiguredError,
    NoSampleError,
    RangeBounds,
    dkw_lbound,
    dkw_rbound,
    ebs_epsilon,
    ebs_lbound,
    ebs_rbound,
    hs_epsilon,
    hs_lbound,
    hs_rbound,
    init_state,
    remove_value,
    state_from_sample,
    update_batch,
    update_state,
)

UNIT = RangeBounds(0.0, 1.0)


def hs_oracle(m, n, a, b, delta):
    mpmath.mp.dps = 40
    return float((b - a) * mpmath.sqrt((1 - mpmath.mpf(m - 1) / n) * mpmath.log(1 / mpmath.mpf(delta)) / (2 * m)))


def dkw_oracle(values, a, b, delta, grid=400_001):
    """Midpoint-rule integral of the clipped CDF band."""
    x = np.sort(np.asarray(values, float))
    eps = math.sqrt(math.log(2 / delta) / (2 * x.size))
    t = np.linspace(a, b, grid)
    mid = 0.5 * (t[1:] + t[:-1])
    F = np.searchsorted(x, mid, side="right") / x.size
    dx = (b - a) / (grid - 1)
    lo = b - np.sum(np.minimum(F + eps, 1.0)) * dx
    hi = b - np.sum(np.maximum(F - eps, 0.0)) * dx
    return lo, hi


# -- state ---------------------------------------------------------------------


def test_init_state_empty():
    s = init_state()
    assert (s.m, s.sum, s.sum_sq) == (0, 0.0, 0.0)
    assert s.min_seen is None and s.max_seen is None


def test_update_single_and_three():
    s = update_state(init_state(), 0.5)
    assert s.m == 1 and s.sum == 0.5
    s = init_state()
    for v in (1, 2, 3):
        s = update_state(s, v)
    assert (s.m, s.sum, s.sum_sq) == (3, 6.0, 14.0)
    assert s.mean == 2.0


def test_update_additive_and_negative():
    s = update_state(update_state(init_state(), 2.0), 3.0)
    assert s.m == 2 and s.sum == 5.0
    s = update_state(init_state(), -1.5)
    assert s.min_seen == -1.5 and s.max_seen == -1.5


def test_update_order_independent():
    states = [state_from_sample(p) for p in itertools.permutations([1.0, 2.0, 3.0])]
    for s in states:
        assert (s.m, s.sum, s.sum_sq, s.min_seen, s.max_seen) == (3, 6.0, 14.0, 1.0, 3.0)
        assert s.variance == pytest.approx(2 / 3)


def test_rejects_non_finite():
    with pytest.raises(BounderError):
        update_state(init_state(), float("nan"))
    with pytest.raises(BounderError):
        update_batch(init_state(), [1.0, float("inf")])


def test_tracked_values_match_sum():
    s = state_from_sample([0.3, 0.1, 0.2], track_values=True)
    assert s.values.size == s.m
    assert s.values.sum() == pytest.approx(s.sum)


def test_remove_value_roundtrip():
    s = state_from_sample([1.0, 2.0, 3.0, 10.0], track_values=True)
    t = remove_value(s, 10.0, new_min=1.0, new_max=3.0)
    ref = state_from_sample([1.0, 2.0, 3.0])
    assert t.m == 3
    assert t.mean == pytest.approx(ref.mean)
    assert t.variance == pytest.approx(ref.variance)
    assert sorted(t.values) == [1.0, 2.0, 3.0]


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60))
def test_incremental_equals_batch(xs):
    inc = init_state()
    for v in xs:
        inc = update_state(inc, v)
    bat = state_from_sample(xs)
    assert inc.m == bat.m
    assert inc.mean == pytest.approx(bat.mean, rel=1e-12, abs=1e-9)
    assert inc.variance == pytest.approx(bat.variance, rel=1e-9, abs=1e-7)
    if len(xs) >= 1:
        assert inc.sum_sq >= inc.sum**2 / inc.m - 1e-6 * max(1.0, inc.sum_sq)


# -- Hoeffding-Serfling --------------------------------------------------------


def test_hs_epsilon_worked_value():
    eps = hs_epsilon(100, 10_000, UNIT, 0.05)
    assert eps == pytest.approx(0.12178, abs=1e-4)
    assert eps == pytest.approx(hs_oracle(100, 10_000, 0, 1, 0.05), rel=1e-12)


def test_hs_epsilon_zero_range():
    assert hs_epsilon(10, 100, RangeBounds(2.0, 2.0), 0.1) == 0.0


def test_hs_epsilon_monotone_in_m():
    n = 500
    eps = [hs_epsilon(m, n, UNIT, 0.05) for m in range(1, n + 1)]
    assert all(e2 <= e1 for e1, e2 in zip(eps, eps[1:]))


def test_hs_epsilon_needs_sample():
    with pytest.raises(NoSampleError):
        hs_epsilon(0, 10, UNIT, 0.1)


def test_hs_lbound_worked_value():
    s = state_from_sample([0.0, 1.0] * 50)
    assert s.mean == 0.5
    assert hs_lbound(s, UNIT, 10_000, 0.05) == pytest.approx(0.37822, abs=1e-4)
    assert hs_rbound(s, UNIT, 10_000, 0.05) == pytest.approx(0.62178, abs=1e-4)


def test_hs_census_constant_column():
    s = state_from_sample([4.0] * 20)
    r = RangeBounds(4.0, 4.0)
    assert hs_lbound(s, r, 20, 0.1) == 4.0 and hs_rbound(s, r, 20, 0.1) == 4.0


def test_empty_state_is_vacuous():
    r = RangeBounds(-2.0, 5.0)
    for b in (HoeffdingSerfling(), EmpiricalBernsteinSerfling(), AndersonDKW()):
        s = b.init_state()
        assert b.lbound(s, r, 10, 0.1) == -2.0
        assert b.rbound(s, r, 10, 0.1) == 5.0


def test_size_smaller_than_sample_rejected():
    s = state_from_sample([0.1, 0.2, 0.3])
    with pytest.raises(BounderError):
        hs_lbound(s, UNIT, 2, 0.1)


@pytest.mark.parametrize("bounder", [HoeffdingSerfling(), EmpiricalBernsteinSerfling(), AndersonDKW()])
def test_exhaustive_n8_m4(bounder):
    data = np.arange(1.0, 9.0)
    mu = data.mean()
    r = RangeBounds(1.0, 8.0)
    misses = 0
    for idx in itertools.combinations(range(8), 4):
        s = bounder.update_batch(bounder.init_state(), data[list(idx)])
        if bounder.lbound(s, r, 8, 0.15) > mu or bounder.rbound(s, r, 8, 0.15) < mu:
            misses += 1
    assert misses / 70 <= 0.3


# -- empirical Bernstein-Serfling ------------------------------------------------


def ebs_oracle(xs, a, b, n, delta):
    mpmath.mp.dps = 40
    x = [mpmath.mpf(v) for v in xs]
    m = len(x)
    mean = sum(x) / m
    var = sum((v - mean) ** 2 for v in x) / m
    rho = 1 - mpmath.mpf(m - 1) / n if m <= n / 2 else (1 - mpmath.mpf(m) / n) * (1 + mpmath.mpf(1) / m)
    L = mpmath.log(5 / mpmath.mpf(delta))
    kappa = mpmath.mpf(7) / 3 + 3 / mpmath.sqrt(2)
    return float(mpmath.sqrt(var) * mpmath.sqrt(2 * rho * L / m) + kappa * (b - a) * L / m)


@pytest.mark.parametrize("n", [50, 1000])
def test_ebs_epsilon_matches_oracle(n):
    rng = np.random.default_rng(3)
    xs = rng.uniform(0, 1, 40)
    s = state_from_sample(xs)
    assert ebs_epsilon(s, UNIT, n, 0.05) == pytest.approx(ebs_oracle(xs, 0, 1, n, 0.05), rel=1e-10)


def test_ebs_kappa():
    assert EBS_KAPPA == pytest.approx(7 / 3 + 3 / math.sqrt(2))


def test_ebs_constant_column_width():
    s = state_from_sample([0.5] * 10_000)
    width = ebs_rbound(s, UNIT, 10**6, 0.05) - ebs_lbound(s, UNIT, 10**6, 0.05)
    assert width == pytest.approx(2 * EBS_KAPPA * math.log(5 / 0.05) / 10_000)
    assert width < 0.01


def test_ebs_beats_hs_on_low_variance():
    rng = np.random.default_rng(7)
    s = state_from_sample(rng.uniform(0, 0.1, 5000))
    n, d = 10**6, 1e-6
    w_ebs = ebs_rbound(s, UNIT, n, d) - ebs_lbound(s, UNIT, n, d)
    w_hs = hs_rbound(s, UNIT, n, d) - hs_lbound(s, UNIT, n, d)
    assert w_ebs < w_hs


# -- DKW -------------------------------------------------------------------------


def test_dkw_worked_value():
    s = state_from_sample([0.5] * 50, track_values=True)
    lo, hi = dkw_lbound(s, UNIT, 0.05), dkw_rbound(s, UNIT, 0.05)
    assert lo == pytest.approx(0.40396, abs=1e-4)
    assert hi == pytest.approx(0.59604, abs=1e-4)
    eps = math.sqrt(math.log(2 / 0.05) / 100)
    assert lo == pytest.approx(0.5 - 0.5 * eps, rel=1e-12)


def test_dkw_matches_numeric_integral():
    rng = np.random.default_rng(11)
    xs = rng.uniform(0.2, 0.9, 37)
    s = state_from_sample(xs, track_values=True)
    lo, hi = dkw_oracle(xs, 0.0, 1.0, 0.1)
    assert dkw_lbound(s, UNIT, 0.1) == pytest.approx(lo, abs=1e-5)
    assert dkw_rbound(s, UNIT, 0.1) == pytest.approx(hi, abs=1e-5)


def test_dkw_tiny_sample_is_vacuous():
    s = state_from_sample([0.5], track_values=True)
    assert dkw_lbound(s, UNIT, 0.01) == 0.0 and dkw_rbound(s, UNIT, 0.01) == 1.0


def test_dkw_needs_values():
    with pytest.raises(MisconfiguredError):
        dkw_lbound(state_from_sample([0.1, 0.2]), UNIT, 0.1)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=80), st.floats(0.001, 0.9))
def test_dkw_brackets_sample_mean(xs, delta):
    s = state_from_sample(xs, track_values=True)
    assert dkw_lbound(s, UNIT, delta) <= s.mean + 1e-12
    assert dkw_rbound(s, UNIT, delta) >= s.mean - 1e-12


# -- interface properties ------------------------------------------------------

samples = st.lists(st.floats(-5, 5), min_size=1, max_size=50)


@settings(max_examples=200)
@given(samples, st.integers(0, 1000), st.integers(1, 10**6), st.floats(1e-9, 0.9))
def test_dataset_size_monotone(xs, extra, more, delta):
    r = RangeBounds(-5.0, 5.0)
    n1 = len(xs) + extra
    n2 = n1 + more
    for b in (HoeffdingSerfling(), EmpiricalBernsteinSerfling(), AndersonDKW()):
        s = b.update_batch(b.init_state(), xs)
        assert b.lbound(s, r, n2, delta) <= b.lbound(s, r, n1, delta)
        assert b.rbound(s, r, n2, delta) >= b.rbound(s, r, n1, delta)


@settings(max_examples=200)
@given(samples, st.floats(1e-9, 0.5), st.floats(1e-3, 1.0))
def test_delta_monotone_and_clamped(xs, d1, frac):
    d2 = d1 * frac
    r = RangeBounds(-5.0, 5.0)
    n = len(xs) + 10
    for b in (HoeffdingSerfling(), EmpiricalBernsteinSerfling(), AndersonDKW()):
        s = b.update_batch(b.init_state(), xs)
        assert b.lbound(s, r, n, d2) <= b.lbound(s, r, n, d1)
        assert b.rbound(s, r, n, d2) >= b.rbound(s, r, n, d1)
        ci = b.interval(s, r, n, d1)
        assert -5.0 <= ci.lower <= ci.upper <= 5.0
