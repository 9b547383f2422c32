"""RangeTrim: make any range-based bounder insensitive to the far endpoint.

The lower bound is computed from the sample minus one copy of its maximum,
with ``max(S)`` standing in for ``b`` and ``N - 1`` for the dataset size; the
upper bound symmetrically drops one copy of the minimum and uses ``min(S)``
in place of ``a``.  The trimmed states are derived at bound time from the
full state plus the tracked extremes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bounders import (
    AndersonDKW,
    Bounder,
    BounderError,
    BounderState,
    ConfidenceInterval,
    EmpiricalBernsteinSerfling,
    HoeffdingSerfling,
    RangeBounds,
    init_state,
    remove_value,
    update_batch,
    update_state,
)


@dataclass(frozen=True, eq=False)
class RangeTrimState:
    total: BounderState = field(default_factory=BounderState)
    min_seen: float | None = None
    max_seen: float | None = None
    count_at_min: int = 0
    count_at_max: int = 0

    @property
    def m(self) -> int:
        return self.total.m


def rt_init(track_values: bool = False) -> RangeTrimState:
    return RangeTrimState(total=init_state(track_values))


def _merge_extreme(cur, cnt, new, new_cnt, better):
    if cur is None or better(new, cur):
        return new, new_cnt
    if new == cur:
        return cur, cnt + new_cnt
    return cur, cnt


def rt_update(state: RangeTrimState, v: float) -> RangeTrimState:
    total = update_state(state.total, v)
    v = float(v)
    lo, lo_n = _merge_extreme(state.min_seen, state.count_at_min, v, 1, lambda x, y: x < y)
    hi, hi_n = _merge_extreme(state.max_seen, state.count_at_max, v, 1, lambda x, y: x > y)
    return RangeTrimState(total, lo, hi, lo_n, hi_n)


def rt_update_batch(state: RangeTrimState, values) -> RangeTrimState:
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        return state
    total = update_batch(state.total, x)
    bmin, bmax = float(x.min()), float(x.max())
    lo, lo_n = _merge_extreme(
        state.min_seen, state.count_at_min, bmin, int(np.count_nonzero(x == bmin)), lambda p, q: p < q
    )
    hi, hi_n = _merge_extreme(
        state.max_seen, state.count_at_max, bmax, int(np.count_nonzero(x == bmax)), lambda p, q: p > q
    )
    return RangeTrimState(total, lo, hi, lo_n, hi_n)


def trim_max(state: RangeTrimState) -> BounderState:
    """The sample with one occurrence of its maximum removed."""
    t = state.total
    new_max = state.max_seen if state.count_at_max > 1 else None
    new_min = state.min_seen if (state.min_seen != state.max_seen or state.count_at_min > 1) else None
    return remove_value(t, state.max_seen, new_min=new_min, new_max=new_max)


def trim_min(state: RangeTrimState) -> BounderState:
    """The sample with one occurrence of its minimum removed."""
    t = state.total
    new_min = state.min_seen if state.count_at_min > 1 else None
    new_max = state.max_seen if (state.min_seen != state.max_seen or state.count_at_max > 1) else None
    return remove_value(t, state.min_seen, new_min=new_min, new_max=new_max)


def _resolve(inner) -> Bounder:
    b = inner if isinstance(inner, Bounder) else bounder_from_name(inner)
    if isinstance(b, RangeTrim):
        raise BounderError("RangeTrim cannot wrap another RangeTrim")
    return b


def rt_lbound(state: RangeTrimState, rng: RangeBounds, n: float, delta: float, inner) -> float:
    inner = _resolve(inner)
    if n < state.m:
        raise BounderError(f"dataset size {n} is smaller than sample size {state.m}")
    if not (0.0 < delta < 1.0):
        raise BounderError(f"delta must lie in (0, 1), got {delta}")
    if state.m <= 1:
        return rng.a
    trimmed_rng = RangeBounds(rng.a, max(state.max_seen, rng.a))
    lo = inner.lbound(trim_max(state), trimmed_rng, n - 1, delta)
    return rng.clamp(lo)


def rt_rbound(state: RangeTrimState, rng: RangeBounds, n: float, delta: float, inner) -> float:
    inner = _resolve(inner)
    if n < state.m:
        raise BounderError(f"dataset size {n} is smaller than sample size {state.m}")
    if not (0.0 < delta < 1.0):
        raise BounderError(f"delta must lie in (0, 1), got {delta}")
    if state.m <= 1:
        return rng.b
    trimmed_rng = RangeBounds(min(state.min_seen, rng.b), rng.b)
    hi = inner.rbound(trim_min(state), trimmed_rng, n - 1, delta)
    return rng.clamp(hi)


def rt_interval(state: RangeTrimState, rng: RangeBounds, n: float, delta: float, inner) -> ConfidenceInterval:
    lo = rt_lbound(state, rng, n, delta / 2, inner)
    hi = rt_rbound(state, rng, n, delta / 2, inner)
    if lo > hi:
        lo = hi = 0.5 * (lo + hi)
    return ConfidenceInterval(lo, hi, delta)


class RangeTrim(Bounder):
    def __init__(self, inner: Bounder):
        self.inner = _resolve(inner)
        self.name = f"{self.inner.name}+rt"
        self.tracks_values = self.inner.tracks_values

    def init_state(self):
        return rt_init(self.tracks_values)

    def update(self, state, v):
        return rt_update(state, v)

    def update_batch(self, state, values):
        return rt_update_batch(state, values)

    def sample_size(self, state) -> int:
        return state.m

    def lbound(self, state, rng, n, delta):
        return rt_lbound(state, rng, n, delta, self.inner)

    def rbound(self, state, rng, n, delta):
        return rt_rbound(state, rng, n, delta, self.inner)


_BASE = {
    "hoeffding": HoeffdingSerfling,
    "bernstein": EmpiricalBernsteinSerfling,
    "dkw": AndersonDKW,
}

BOUNDER_NAMES = ("hoeffding", "hoeffding+rt", "bernstein", "bernstein+rt", "dkw", "dkw+rt")


def bounder_from_name(name: str) -> Bounder:
    key = name.strip().lower()
    # short aliases used in tests and on the command line
    key = {"hs": "hoeffding", "ebs": "bernstein", "hs+rt": "hoeffding+rt", "ebs+rt": "bernstein+rt"}.get(key, key)
    if key.endswith("+rt"):
        base = key[:-3]
        if base not in _BASE:
            raise BounderError(f"unknown bounder {name!r}")
        return RangeTrim(_BASE[base]())
    if key not in _BASE:
        raise BounderError(f"unknown bounder {name!r}")
    return _BASE[key]()
