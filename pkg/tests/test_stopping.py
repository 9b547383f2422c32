import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aqpbounds.bounders import BounderError, ConfidenceInterval, RangeBounds
from aqpbounds.rangetrim import bounder_from_name
from aqpbounds.stopping import (
    Having,
    RoundSchedule,
    RunningInterval,
    StoppingCondition,
    eval_absolute,
    eval_ordered,
    eval_relative,
    eval_threshold,
    eval_topk,
    ordered_classify,
    round_delta,
    run_until_stopped,
    topk_classify,
)
from aqpbounds.views import ArrayBlockSource, MeanView


def CI(lo, hi):
    return ConfidenceInterval(lo, hi, 0.05)


def topk_bruteforce(cis, k, direction):
    """Some K-subset lies entirely on the wanted side of every outsider."""
    names = list(cis)
    for chosen in itertools.combinations(names, k):
        rest = [n for n in names if n not in chosen]
        if direction == "min":
            ok = all(cis[c].upper < cis[o].lower for c in chosen for o in rest)
        else:
            ok = all(cis[c].lower > cis[o].upper for c in chosen for o in rest)
        if ok:
            return True
    return False


# -- round deltas --------------------------------------------------------------


def test_round_delta_values():
    assert round_delta(1.0, 1) == pytest.approx(0.607927, abs=1e-6)
    assert round_delta(0.1, 1) == pytest.approx(float(6 / mpmath.pi**2) * 0.1, rel=1e-14)
    assert round_delta(0.3, 2) == round_delta(0.3, 1) / 4
    with pytest.raises(BounderError):
        round_delta(0.1, 0)


def test_round_delta_partial_sums_below_total():
    k = np.arange(1, 10**6 + 1, dtype=float)
    partial = np.cumsum(6 / math.pi**2 * 1e-3 / k**2)
    assert partial[-1] < 1e-3
    assert np.all(partial < 1e-3)
    tail = 6 / math.pi**2 * 1e-3 * float(mpmath.zeta(2, 10**6 + 1))
    assert partial[-1] + tail == pytest.approx(1e-3, rel=1e-9)


def test_schedule():
    s = RoundSchedule(0.01)
    assert s.block_size == 40000
    assert s.delta_at(3) == round_delta(0.01, 3)
    with pytest.raises(BounderError):
        RoundSchedule(0.0)


def test_running_interval_monotone():
    r = RunningInterval(0.0, 10.0)
    r.update(CI(1.0, 12.0))
    r.update(CI(-5.0, 8.0))
    assert (r.best_lower, r.best_upper) == (1.0, 8.0)
    r.set_exact(4.0)
    assert (r.best_lower, r.best_upper) == (4.0, 4.0)


# -- evaluators ----------------------------------------------------------------


def test_relative_examples():
    assert eval_relative(CI(10, 10.5), 0.1)
    assert not eval_relative(CI(-1, 1), 0.5)
    assert not eval_relative(CI(10, 12), 0.1)
    assert eval_relative(CI(-10.5, -10), 0.1)


def test_threshold_examples():
    assert eval_threshold(CI(-3, -1), 0)
    assert not eval_threshold(CI(-1, 1), 0)
    assert not eval_threshold(CI(0, 0), 0)


def test_absolute():
    assert eval_absolute(CI(1.0, 1.125), 0.125)
    assert not eval_absolute(CI(1.0, 1.25), 0.125)


def test_topk_examples():
    assert eval_topk({"A": CI(0, 1), "B": CI(2, 3), "C": CI(2.5, 4)}, 1, "min")
    assert not eval_topk({"A": CI(0, 2.2), "B": CI(2, 3)}, 1, "min")
    cis = {"A": CI(5, 6), "B": CI(3, 4), "C": CI(0, 1)}
    assert eval_topk(cis, 2, "max")
    assert topk_bruteforce(cis, 2, "max")


def test_ordered_examples():
    assert eval_ordered({"a": CI(1, 2), "b": CI(3, 4), "c": CI(5, 6)})
    assert not eval_ordered({"a": CI(1, 3), "b": CI(2, 4)})
    assert eval_ordered({"a": CI(1, 3)})


intervals = st.tuples(st.integers(0, 12), st.integers(0, 4)).map(lambda t: CI(t[0], t[0] + t[1]))


@given(st.lists(intervals, min_size=2, max_size=6), st.data())
def test_topk_matches_bruteforce(ivs, data):
    cis = {f"g{i}": ci for i, ci in enumerate(ivs)}
    k = data.draw(st.integers(1, len(cis) - 1))
    d = data.draw(st.sampled_from(["min", "max"]))
    assert eval_topk(cis, k, d) == topk_bruteforce(cis, k, d)


@given(st.lists(intervals, min_size=2, max_size=6), st.data())
def test_topk_classify_consistent(ivs, data):
    cis = {f"g{i}": ci for i, ci in enumerate(ivs)}
    k = data.draw(st.integers(1, len(cis) - 1))
    cls = topk_classify(cis, k, "min")
    assert sum(1 for v in cls.values() if v is True) <= k
    assert sum(1 for v in cls.values() if v is False) <= len(cis) - k
    if eval_topk(cis, k, "min"):
        assert all(v is not None for v in cls.values())


@given(st.lists(intervals, min_size=1, max_size=6))
def test_ordered_classify_consistent(ivs):
    cis = {f"g{i}": ci for i, ci in enumerate(ivs)}
    assert eval_ordered(cis) == all(ordered_classify(cis).values())


def test_condition_parse_roundtrip():
    for text in ("taken:100", "abs:0.5", "rel:0.1", "thresh:-3", "topk:2:max", "ordered"):
        assert str(StoppingCondition.parse(text)) == text
    assert StoppingCondition.parse("topk:3").direction == "min"
    for bad in ("rel:0", "abs:-1", "topk:0", "topk:1:up", "foo", "rel:x", "taken:1.5"):
        with pytest.raises(ValueError):
            StoppingCondition.parse(bad)


def test_having_decide():
    h = Having(">", 5.0)
    assert h.decide(CI(6, 7)) is True
    assert h.decide(CI(1, 4)) is False
    assert h.decide(CI(4, 6)) is None
    assert h.decide(CI(5, 5)) is False
    assert Having("=", 1.0).decide(CI(2, 3)) is False
    assert Having("!=", 1.0).decide(CI(2, 3)) is True
    with pytest.raises(ValueError):
        Having("~", 1.0)


# -- controller ----------------------------------------------------------------


def one_view(data, delta=0.1, bounder="bernstein", rng=RangeBounds(0, 1)):
    return MeanView("v", bounder_from_name(bounder), rng, delta, len(data))


def test_taken_zero_stops_immediately():
    data = np.full(100, 0.5)
    out = run_until_stopped([one_view(data)], ArrayBlockSource(data, 10), None, StoppingCondition("taken", 0))
    ci = out.views["v"].interval
    assert out.rounds == 0 and (ci.lower, ci.upper) == (0.0, 1.0)


def test_full_exhaustion_reports_exact():
    data = np.random.default_rng(1).uniform(0, 1, 95)
    out = run_until_stopped(
        [one_view(data)], ArrayBlockSource(data, 10), None, StoppingCondition("abs", 1e-9)
    )
    v = out.views["v"]
    assert v.forced_exact and v.exhausted
    assert v.interval.lower == v.interval.upper == pytest.approx(data.mean())
    assert v.estimate == pytest.approx(data.mean())
    assert out.rounds == 10


def test_stops_early_when_condition_met():
    data = np.random.default_rng(2).uniform(0.4, 0.6, 100_000)
    out = run_until_stopped(
        [one_view(data, bounder="bernstein+rt")], ArrayBlockSource(data, 1000), None, StoppingCondition("abs", 0.05)
    )
    v = out.views["v"]
    assert out.satisfied and not v.exhausted
    assert v.interval.width <= 0.05
    assert v.rows_sampled < 100_000


def test_running_interval_nested_across_rounds():
    data = np.random.default_rng(3).beta(2, 5, 50_000)
    out = run_until_stopped(
        [one_view(data)], ArrayBlockSource(data, 500), None, StoppingCondition("abs", 0.02), record=True
    )
    lows = [t[1]["v"][0] for t in out.trace]
    highs = [t[1]["v"][1] for t in out.trace]
    assert lows == sorted(lows) and highs == sorted(highs, reverse=True)
    assert lows[-1] <= data.mean() <= highs[-1]


def test_deterministic():
    data = np.random.default_rng(4).uniform(0, 1, 20_000)

    def go():
        out = run_until_stopped(
            [one_view(data)], ArrayBlockSource(data, 700), None, StoppingCondition("rel", 0.05), record=True
        )
        return out.trace, out.views["v"].interval

    assert go() == go()


def test_montecarlo_small():
    gen = np.random.default_rng(9)
    data = gen.beta(2, 5, 10_000)
    mu = data.mean()
    misses = 0
    for _ in range(200):
        perm = data[gen.permutation(data.size)]
        out = run_until_stopped([one_view(perm, delta=0.1)], ArrayBlockSource(perm, 200), None,
                                StoppingCondition("abs", 0.05))
        ci = out.views["v"].interval
        misses += not (ci.lower <= mu <= ci.upper)
    assert misses / 200 <= 0.1


def test_duplicate_view_keys_rejected():
    data = np.zeros(10)
    with pytest.raises(ValueError):
        run_until_stopped([one_view(data), one_view(data)], ArrayBlockSource(data, 5), None, StoppingCondition("taken", 1))
