"""COUNT, AVG-of-unknown-size and SUM intervals built on top of the bounders."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .bounders import Bounder, BounderError, ConfidenceInterval, RangeBounds

DEFAULT_ALPHA = 0.99


@dataclass(frozen=True)
class SelectivityState:
    """``r`` scramble rows scanned, ``m_v`` of them in the view, ``R`` total."""

    r: int
    m_v: int
    R: int

    def __post_init__(self):
        if not (0 <= self.m_v <= self.r <= self.R):
            raise BounderError(f"need 0 <= m_v <= r <= R, got m_v={self.m_v} r={self.r} R={self.R}")


@dataclass(frozen=True)
class DeltaBudget:
    delta_query: float
    n_views: int
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if not (0.0 < self.delta_query < 1.0):
            raise BounderError("query delta must lie in (0, 1)")
        if self.n_views < 1:
            raise BounderError("need at least one aggregate view")
        if not (0.0 < self.alpha < 1.0):
            raise BounderError("alpha must lie in (0, 1)")

    @property
    def per_view(self) -> float:
        return budget(self.delta_query, self.n_views)


def budget(delta_query: float, n_views: int) -> float:
    if n_views < 1:
        raise BounderError("need at least one aggregate view")
    return delta_query / n_views


def _selectivity_eps(r: int, R: int, log_term: float) -> float:
    return math.sqrt(log_term / (2.0 * r) * (1.0 - (r - 1) / R))


def selectivity_ci(state: SelectivityState, delta: float) -> ConfidenceInterval:
    if state.r == 0:
        return ConfidenceInterval(0.0, 1.0, delta)
    r, m_v, R = state.r, state.m_v, state.R
    eps = _selectivity_eps(r, R, math.log(2.0 / delta))
    est = m_v / r
    lo = max(est - eps, m_v / R)
    hi = min(est + eps, 1.0 - (r - m_v) / R)
    return ConfidenceInterval(lo, max(lo, hi), delta)


def count_ci(state: SelectivityState, delta: float) -> ConfidenceInterval:
    """Selectivity interval scaled by ``R``, rounded outward to whole rows."""
    r, m_v, R = state.r, state.m_v, state.R
    if r == 0:
        return ConfidenceInterval(0.0, float(R), delta)
    eps = _selectivity_eps(r, R, math.log(2.0 / delta))
    est = m_v / r
    lo = max(m_v, math.floor((est - eps) * R))
    hi = min(R - (r - m_v), math.ceil((est + eps) * R))
    return ConfidenceInterval(float(lo), float(max(lo, hi)), delta)


def upper_bound_n(state: SelectivityState, delta: float, alpha: float = DEFAULT_ALPHA) -> int:
    """High-probability upper bound on the view size (fails w.p. (1-alpha)*delta)."""
    r, m_v, R = state.r, state.m_v, state.R
    cap = R - (r - m_v)
    if r == 0:
        return cap
    eps = _selectivity_eps(r, R, math.log(1.0 / ((1.0 - alpha) * delta)))
    n_plus = math.ceil((m_v / r + eps) * R)
    return max(m_v, min(n_plus, cap))


def avg_ci_unknown_size(
    bounder: Bounder,
    state,
    sel: SelectivityState,
    rng: RangeBounds,
    delta: float,
    alpha: float = DEFAULT_ALPHA,
) -> ConfidenceInterval:
    n_plus = upper_bound_n(sel, delta, alpha)
    lo = bounder.lbound(state, rng, n_plus, alpha * delta / 2)
    hi = bounder.rbound(state, rng, n_plus, alpha * delta / 2)
    if lo > hi:
        lo = hi = 0.5 * (lo + hi)
    return ConfidenceInterval(lo, hi, delta)


def sum_ci(count: ConfidenceInterval, avg: ConfidenceInterval) -> ConfidenceInterval:
    """Product interval; covers c*g for every c in ``count`` and g in ``avg``."""
    products = [c * g for c in (count.lower, count.upper) for g in (avg.lower, avg.upper)]
    return ConfidenceInterval(min(products), max(products), count.delta + avg.delta)
