"""Range-based error bounders for AVG over a without-replacement sample.

Every bounder works against the same incremental state (:class:`BounderState`)
and exposes ``lbound``/``rbound`` taking the state, the a-priori range
``[a, b]``, the dataset size ``N`` (an upper bound is fine) and a one-sided
error probability.  A two-sided interval at ``delta`` is the pair of one-sided
bounds at ``delta / 2``.

Conventions shared by all bounders:

* natural logarithms throughout;
* every bound is clamped into ``[a, b]``;
* with no samples, ``lbound`` is ``a`` and ``rbound`` is ``b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np


class BounderError(ValueError):
    """Invalid input to a bounder."""


class NoSampleError(BounderError):
    """A closed-form width was requested for an empty sample."""


class MisconfiguredError(BounderError):
    """The state lacks what the bounder needs (e.g. retained values)."""


@dataclass(frozen=True)
class RangeBounds:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a <= self.b):
            raise BounderError(f"range bounds must satisfy a <= b, got [{self.a}, {self.b}]")

    @property
    def width(self) -> float:
        return self.b - self.a

    def clamp(self, x: float) -> float:
        return min(max(x, self.a), self.b)


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    delta: float

    def __post_init__(self):
        if not (self.lower <= self.upper):
            raise BounderError(f"interval lower {self.lower} exceeds upper {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, x: float) -> bool:
        return self.lower <= x <= self.upper


@dataclass(frozen=True, eq=False)
class BounderState:
    """Sufficient statistics of the values seen so far.

    ``sum_sq`` is kept because it is the textbook definition of the second
    moment, but variance is taken from the Welford/Chan pair ``(mean, m2)``.
    ``values`` is only populated for bounders that need the whole sample.
    """

    m: int = 0
    sum: float = 0.0
    sum_sq: float = 0.0
    min_seen: Optional[float] = None
    max_seen: Optional[float] = None
    mean: float = 0.0
    m2: float = 0.0
    values: Optional[np.ndarray] = None

    @property
    def tracks_values(self) -> bool:
        return self.values is not None

    @property
    def variance(self) -> float:
        """Biased (1/m) sample variance."""
        if self.m == 0:
            return 0.0
        return max(self.m2, 0.0) / self.m

    def sorted_values(self) -> np.ndarray:
        if self.values is None:
            raise MisconfiguredError("state does not retain sample values")
        return np.sort(self.values, kind="stable")


def init_state(track_values: bool = False) -> BounderState:
    return BounderState(values=np.empty(0) if track_values else None)


def update_state(state: BounderState, v: float) -> BounderState:
    v = float(v)
    if not math.isfinite(v):
        raise BounderError(f"rejected non-finite value {v!r}")
    m = state.m + 1
    d = v - state.mean
    mean = state.mean + d / m
    m2 = state.m2 + d * (v - mean)
    values = None if state.values is None else np.append(state.values, v)
    return BounderState(
        m=m,
        sum=state.sum + v,
        sum_sq=state.sum_sq + v * v,
        min_seen=v if state.min_seen is None else min(state.min_seen, v),
        max_seen=v if state.max_seen is None else max(state.max_seen, v),
        mean=mean,
        m2=m2,
        values=values,
    )


def update_batch(state: BounderState, values) -> BounderState:
    """Fold a whole array of values into ``state`` (Chan et al. merge)."""
    x = np.asarray(values, dtype=float).ravel()
    n = x.size
    if n == 0:
        return state
    if not np.all(np.isfinite(x)):
        raise BounderError("rejected non-finite value in batch")
    bmean = float(x.mean())
    bm2 = float(np.sum((x - bmean) ** 2))
    m = state.m + n
    d = bmean - state.mean
    mean = state.mean + d * n / m
    m2 = state.m2 + bm2 + d * d * state.m * n / m
    lo, hi = float(x.min()), float(x.max())
    kept = None if state.values is None else np.concatenate([state.values, x])
    return BounderState(
        m=m,
        sum=state.sum + float(x.sum()),
        sum_sq=state.sum_sq + float(np.dot(x, x)),
        min_seen=lo if state.min_seen is None else min(state.min_seen, lo),
        max_seen=hi if state.max_seen is None else max(state.max_seen, hi),
        mean=mean,
        m2=m2,
        values=kept,
    )


def state_from_sample(values, track_values: bool = False) -> BounderState:
    return update_batch(init_state(track_values), values)


def remove_value(state: BounderState, v: float, new_min=None, new_max=None) -> BounderState:
    """Take one occurrence of ``v`` back out of the moments.

    Extremes of the result are whatever the caller says they are; the moment
    bounders never look at them.
    """
    if state.m == 0:
        raise BounderError("cannot remove from an empty state")
    m = state.m - 1
    if m == 0:
        return init_state(state.values is not None)
    mean = (state.mean * state.m - v) / m
    m2 = max(state.m2 - (v - state.mean) * (v - mean), 0.0)
    values = state.values
    if values is not None:
        idx = np.flatnonzero(values == v)
        if idx.size == 0:
            raise BounderError(f"value {v!r} not present in retained sample")
        values = np.delete(values, idx[-1])
    return replace(
        state,
        m=m,
        sum=state.sum - v,
        sum_sq=state.sum_sq - v * v,
        min_seen=new_min,
        max_seen=new_max,
        mean=mean,
        m2=m2,
        values=values,
    )


def _check_common(state: BounderState, n: float, delta: float) -> None:
    if not (0.0 < delta < 1.0):
        raise BounderError(f"delta must lie in (0, 1), got {delta}")
    if n < state.m:
        raise BounderError(f"dataset size {n} is smaller than sample size {state.m}")


# -- Hoeffding-Serfling ------------------------------------------------------


def hs_epsilon(m: int, n: float, rng: RangeBounds, delta: float) -> float:
    """Half-width of the one-sided Hoeffding-Serfling bound."""
    if m <= 0:
        raise NoSampleError("Hoeffding-Serfling width needs at least one sample")
    if n < m:
        raise BounderError(f"dataset size {n} is smaller than sample size {m}")
    if not (0.0 < delta < 1.0):
        raise BounderError(f"delta must lie in (0, 1), got {delta}")
    fpc = 1.0 - (m - 1) / n
    return rng.width * math.sqrt(fpc * math.log(1.0 / delta) / (2.0 * m))


def hs_lbound(state: BounderState, rng: RangeBounds, n: float, delta: float) -> float:
    _check_common(state, n, delta)
    if state.m == 0:
        return rng.a
    return rng.clamp(state.mean - hs_epsilon(state.m, n, rng, delta))


def hs_rbound(state: BounderState, rng: RangeBounds, n: float, delta: float) -> float:
    _check_common(state, n, delta)
    if state.m == 0:
        return rng.b
    return rng.clamp(state.mean + hs_epsilon(state.m, n, rng, delta))


# -- empirical Bernstein-Serfling ---------------------------------------------

EBS_KAPPA = 7.0 / 3.0 + 3.0 / math.sqrt(2.0)


def ebs_rho(m: int, n: float) -> float:
    if m <= n / 2:
        return 1.0 - (m - 1) / n
    return (1.0 - m / n) * (1.0 + 1.0 / m)


def ebs_epsilon(state: BounderState, rng: RangeBounds, n: float, delta: float) -> float:
    m = state.m
    if m <= 0:
        raise NoSampleError("Bernstein-Serfling width needs at least one sample")
    log_term = math.log(5.0 / delta)
    sigma = math.sqrt(state.variance)
    return sigma * math.sqrt(2.0 * ebs_rho(m, n) * log_term / m) + EBS_KAPPA * rng.width * log_term / m


def ebs_lbound(state: BounderState, rng: RangeBounds, n: float, delta: float) -> float:
    _check_common(state, n, delta)
    if state.m == 0:
        return rng.a
    return rng.clamp(state.mean - ebs_epsilon(state, rng, n, delta))


def ebs_rbound(state: BounderState, rng: RangeBounds, n: float, delta: float) -> float:
    _check_common(state, n, delta)
    if state.m == 0:
        return rng.b
    return rng.clamp(state.mean + ebs_epsilon(state, rng, n, delta))


# -- Anderson / DKW ----------------------------------------------------------


def dkw_epsilon(m: int, delta: float) -> float:
    return math.sqrt(math.log(2.0 / delta) / (2.0 * m))


def _cdf_band_integral(xs: np.ndarray, rng: RangeBounds, shift: float) -> float:
    """Exact integral over [a, b] of clip(F_hat + shift, 0, 1) for sorted xs."""
    m = xs.size
    xs = np.clip(xs, rng.a, rng.b)
    knots = np.concatenate(([rng.a], xs, [rng.b]))
    lengths = np.diff(knots)
    levels = np.arange(m + 1) / m
    # ties produce zero-length segments, so the running count is still right
    return float(np.dot(lengths, np.clip(levels + shift, 0.0, 1.0)))


def dkw_lbound(state: BounderState, rng: RangeBounds, delta: float) -> float:
    if state.values is None:
        raise MisconfiguredError("DKW bounder requires a state that retains values")
    if not (0.0 < delta < 1.0):
        raise BounderError(f"delta must lie in (0, 1), got {delta}")
    if state.m == 0:
        return rng.a
    eps = dkw_epsilon(state.m, delta)
    if eps >= 1.0:
        return rng.a
    return rng.clamp(rng.b - _cdf_band_integral(state.sorted_values(), rng, eps))


def dkw_rbound(state: BounderState, rng: RangeBounds, delta: float) -> float:
    if state.values is None:
        raise MisconfiguredError("DKW bounder requires a state that retains values")
    if not (0.0 < delta < 1.0):
        raise BounderError(f"delta must lie in (0, 1), got {delta}")
    if state.m == 0:
        return rng.b
    eps = dkw_epsilon(state.m, delta)
    if eps >= 1.0:
        return rng.b
    return rng.clamp(rng.b - _cdf_band_integral(state.sorted_values(), rng, -eps))


# -- bounder objects ---------------------------------------------------------


class Bounder:
    """Common interface: state handling plus one-sided bounds."""

    name = "base"
    tracks_values = False

    def init_state(self):
        return init_state(self.tracks_values)

    def update(self, state, v):
        return update_state(state, v)

    def update_batch(self, state, values):
        return update_batch(state, values)

    def sample_size(self, state) -> int:
        return state.m

    def lbound(self, state, rng: RangeBounds, n: float, delta: float) -> float:
        raise NotImplementedError

    def rbound(self, state, rng: RangeBounds, n: float, delta: float) -> float:
        raise NotImplementedError

    def interval(self, state, rng: RangeBounds, n: float, delta: float) -> ConfidenceInterval:
        lo = self.lbound(state, rng, n, delta / 2)
        hi = self.rbound(state, rng, n, delta / 2)
        if lo > hi:
            lo = hi = 0.5 * (lo + hi)
        return ConfidenceInterval(lo, hi, delta)

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


class HoeffdingSerfling(Bounder):
    name = "hoeffding"

    def lbound(self, state, rng, n, delta):
        return hs_lbound(state, rng, n, delta)

    def rbound(self, state, rng, n, delta):
        return hs_rbound(state, rng, n, delta)


class EmpiricalBernsteinSerfling(Bounder):
    name = "bernstein"

    def lbound(self, state, rng, n, delta):
        return ebs_lbound(state, rng, n, delta)

    def rbound(self, state, rng, n, delta):
        return ebs_rbound(state, rng, n, delta)


class AndersonDKW(Bounder):
    """CDF-band bounder; ignores ``n`` (valid for any dataset size)."""

    name = "dkw"
    tracks_values = True

    def lbound(self, state, rng, n, delta):
        _check_common(state, n, delta)
        return dkw_lbound(state, rng, delta)

    def rbound(self, state, rng, n, delta):
        _check_common(state, n, delta)
        return dkw_rbound(state, rng, delta)
