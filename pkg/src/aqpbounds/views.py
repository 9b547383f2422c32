"""Aggregate views: the unit of bounder state and delta budgeting.

Each view sees, in scan order, the rows satisfying its predicate and keeps
just enough state to produce an interval at any delta.  ``rows_passed``
counts every scramble row the scan has gone past (read or skipped), which is
what the selectivity bound needs.
"""

from __future__ import annotations

import math
from typing import Hashable, Optional

import numpy as np

from .bounders import Bounder, ConfidenceInterval, RangeBounds
from .estimators import (
    DEFAULT_ALPHA,
    SelectivityState,
    avg_ci_unknown_size,
    count_ci,
    sum_ci,
)
from .stopping import Batch


_OWN = object()  # default: the view is its own group


class _ViewBase:
    def __init__(self, key: Hashable, group: Hashable, delta: float):
        self.key = key
        self.group = group
        self.delta = delta
        self.r = 0
        self.m = 0

    @property
    def rows_sampled(self) -> int:
        return self.m


class MeanView(_ViewBase):
    """AVG over a view whose size ``n`` is known up front."""

    def __init__(self, key, bounder: Bounder, rng: RangeBounds, delta: float, n: int, group=_OWN):
        super().__init__(key, key if group is _OWN else group, delta)
        self.bounder = bounder
        self.rng = rng
        self.n = n
        self.state = bounder.init_state()

    def ingest(self, values, rows_passed: int) -> None:
        x = np.asarray(values, dtype=float)
        self.r += rows_passed
        if x.size:
            self.state = self.bounder.update_batch(self.state, x)
            self.m += x.size

    def vacuous(self) -> ConfidenceInterval:
        return ConfidenceInterval(self.rng.a, self.rng.b, self.delta)

    def interval(self, delta: float) -> ConfidenceInterval:
        return self.bounder.interval(self.state, self.rng, self.n, delta)

    def _mean(self) -> Optional[float]:
        if self.m == 0:
            return None
        st = getattr(self.state, "total", self.state)
        return float(st.mean)

    def exact_value(self) -> Optional[float]:
        return self._mean()

    def estimate(self) -> Optional[float]:
        return self._mean()


class AvgView(MeanView):
    """AVG over a view of unknown size, using a high-probability size bound."""

    def __init__(self, key, bounder, rng, delta, total_rows: int, group=_OWN, alpha=DEFAULT_ALPHA):
        super().__init__(key, bounder, rng, delta, total_rows, group)
        self.total_rows = total_rows
        self.alpha = alpha

    def selectivity(self) -> SelectivityState:
        return SelectivityState(self.r, self.m, self.total_rows)

    def interval(self, delta: float) -> ConfidenceInterval:
        return avg_ci_unknown_size(self.bounder, self.state, self.selectivity(), self.rng, delta, self.alpha)


class CountView(_ViewBase):
    """COUNT of rows satisfying the view predicate."""

    def __init__(self, key, delta: float, total_rows: int, group=_OWN, known_size=False):
        super().__init__(key, key if group is _OWN else group, delta)
        self.total_rows = total_rows
        self.known_size = known_size

    def ingest(self, values, rows_passed: int) -> None:
        self.r += rows_passed
        self.m += len(values)

    def vacuous(self) -> ConfidenceInterval:
        lo = float(self.total_rows) if self.known_size else 0.0
        return ConfidenceInterval(lo, float(self.total_rows), self.delta)

    def interval(self, delta: float) -> ConfidenceInterval:
        if self.known_size:
            return ConfidenceInterval(float(self.total_rows), float(self.total_rows), delta)
        return count_ci(SelectivityState(self.r, self.m, self.total_rows), delta)

    def exact_value(self) -> Optional[float]:
        return float(self.m)

    def estimate(self) -> Optional[float]:
        if self.known_size:
            return float(self.total_rows)
        if self.r == 0:
            return None
        return self.m / self.r * self.total_rows


class SumView(_ViewBase):
    """SUM as COUNT times AVG, each at half the delta.

    When the view is the whole table its size is known, so the count is exact
    and the AVG side gets the full delta.
    """

    def __init__(self, key, bounder, rng, delta, total_rows: int, group=_OWN, alpha=DEFAULT_ALPHA, known_size=False):
        super().__init__(key, key if group is _OWN else group, delta)
        self.known_size = known_size
        self.count = CountView(key, delta, total_rows, group, known_size)
        if known_size:
            self.avg = MeanView(key, bounder, rng, delta, total_rows, group)
        else:
            self.avg = AvgView(key, bounder, rng, delta, total_rows, group, alpha)
        self.total = 0.0

    @property
    def rows_sampled(self) -> int:
        return self.avg.m

    def ingest(self, values, rows_passed: int) -> None:
        x = np.asarray(values, dtype=float)
        self.count.ingest(x, rows_passed)
        self.avg.ingest(x, rows_passed)
        self.total += float(x.sum()) if x.size else 0.0

    def vacuous(self) -> ConfidenceInterval:
        return sum_ci(self.count.vacuous(), self.avg.vacuous())

    def interval(self, delta: float) -> ConfidenceInterval:
        if self.known_size:
            return sum_ci(self.count.interval(0.0), self.avg.interval(delta))
        return sum_ci(self.count.interval(delta / 2), self.avg.interval(delta / 2))

    def exact_value(self) -> Optional[float]:
        return self.total

    def estimate(self) -> Optional[float]:
        c, a = self.count.estimate(), self.avg.estimate()
        return None if c is None or a is None else c * a


class ArrayBlockSource:
    """Feeds one view's values in blocks of ``block_size``, in array order."""

    def __init__(self, values, block_size: int, key: Hashable = "v"):
        self.values = np.asarray(values, dtype=float)
        self.block_size = block_size
        self.key = key
        self.n_blocks = max(1, math.ceil(self.values.size / block_size))
        self.pos = 0

    def next_batch(self, unfinished=None) -> Optional[Batch]:
        if self.pos >= self.n_blocks:
            return None
        lo = self.pos * self.block_size
        chunk = self.values[lo : lo + self.block_size]
        self.pos += 1
        done = frozenset([self.key]) if self.pos == self.n_blocks else frozenset()
        return Batch(self.pos, chunk.size, {self.key: chunk}, done)
