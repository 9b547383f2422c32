"""Optional stopping: recompute intervals round by round with a decaying delta.

Round ``k`` uses ``(6 / pi**2) * delta / k**2``.  Summed over all ``k`` this
stays below ``delta``, so the intersection of every interval ever reported is
valid with probability ``1 - delta`` no matter when sampling stops.

``k`` is the number of storage blocks the scan has *passed*, whether they were
read or skipped.  For a plain scan that is the round number; with block
skipping it keeps each round tied to a fixed scan prefix, which is what the
union bound needs.

Views are duck-typed.  The controller needs, per view:

* ``key``, ``group``, ``delta`` attributes, and a ``rows_sampled`` property;
* ``ingest(values, rows_passed)`` folding in one step of the scan;
* ``interval(delta)`` returning a :class:`ConfidenceInterval`, and
  ``vacuous()`` for the no-data interval;
* ``exact_value()`` once every candidate block has been passed (or ``None``
  when the view turned out empty);
* ``estimate()`` a point estimate.

The block source provides ``next_batch(unfinished_groups)`` returning a
:class:`Batch` or ``None`` when the scan is over.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Optional

from .bounders import BounderError, ConfidenceInterval

SIX_OVER_PI_SQ = 6.0 / math.pi**2


def round_delta(delta_total: float, k: int) -> float:
    if k < 1:
        raise BounderError(f"round index must be >= 1, got {k}")
    return SIX_OVER_PI_SQ * delta_total / (k * k)


@dataclass(frozen=True)
class RoundSchedule:
    delta_total: float
    block_size: int = 40000

    def __post_init__(self):
        if not (0.0 < self.delta_total < 1.0):
            raise BounderError("delta must lie in (0, 1)")
        if self.block_size < 1:
            raise BounderError("block size must be positive")

    def delta_at(self, k: int) -> float:
        return round_delta(self.delta_total, k)


class RunningInterval:
    """Intersection of all intervals seen so far."""

    def __init__(self, lower: float = -math.inf, upper: float = math.inf):
        self.best_lower = lower
        self.best_upper = upper

    def update(self, ci: ConfidenceInterval) -> None:
        self.best_lower = max(self.best_lower, ci.lower)
        self.best_upper = min(self.best_upper, ci.upper)

    def set_exact(self, value: float) -> None:
        self.best_lower = self.best_upper = value

    @property
    def crossed(self) -> bool:
        return self.best_lower > self.best_upper

    def interval(self, delta: float) -> ConfidenceInterval:
        lo, hi = self.best_lower, self.best_upper
        if lo > hi:
            # only possible when some round already failed to cover
            lo = hi = 0.5 * (lo + hi)
        return ConfidenceInterval(lo, hi, delta)

    def __repr__(self):
        return f"RunningInterval([{self.best_lower}, {self.best_upper}])"


# -- stopping conditions -----------------------------------------------------

_KINDS = ("taken", "abs", "rel", "thresh", "topk", "ordered")


@dataclass(frozen=True)
class StoppingCondition:
    kind: str
    value: float = 0.0
    k: int = 0
    direction: str = "min"

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown stopping condition {self.kind!r}")
        if self.kind == "taken" and (self.value < 0 or self.value != int(self.value)):
            raise ValueError("taken:M needs a whole number M >= 0")
        if self.kind in ("abs", "rel") and not self.value > 0:
            raise ValueError(f"{self.kind}:E needs E > 0")
        if self.kind == "topk":
            if self.k < 1:
                raise ValueError("topk needs K >= 1")
            if self.direction not in ("min", "max"):
                raise ValueError("topk direction must be min or max")

    @classmethod
    def parse(cls, text: str) -> "StoppingCondition":
        parts = text.strip().split(":")
        kind = parts[0].lower()
        try:
            if kind == "ordered" and len(parts) == 1:
                return cls("ordered")
            if kind in ("taken", "abs", "rel", "thresh") and len(parts) == 2:
                v = float(parts[1])
                if kind == "taken":
                    return cls("taken", value=float(int(parts[1])))
                return cls(kind, value=v)
            if kind == "topk" and len(parts) in (2, 3):
                direction = parts[2].lower() if len(parts) == 3 else "min"
                return cls("topk", k=int(parts[1]), direction=direction)
        except ValueError as exc:
            raise ValueError(f"bad stopping condition {text!r}: {exc}") from None
        raise ValueError(f"bad stopping condition {text!r}")

    @property
    def is_global(self) -> bool:
        return self.kind in ("topk", "ordered")

    def __str__(self):
        if self.kind == "ordered":
            return "ordered"
        if self.kind == "topk":
            return f"topk:{self.k}:{self.direction}"
        if self.kind == "taken":
            return f"taken:{int(self.value)}"
        return f"{self.kind}:{self.value:g}"


def eval_absolute(ci: ConfidenceInterval, eps: float) -> bool:
    return ci.upper - ci.lower <= eps


def eval_relative(ci: ConfidenceInterval, eps: float) -> bool:
    if ci.lower <= 0.0 <= ci.upper:
        return False
    return ci.upper - ci.lower <= eps * min(abs(ci.lower), abs(ci.upper))


def eval_threshold(ci: ConfidenceInterval, v: float) -> bool:
    return ci.upper < v or ci.lower > v


def _orient(group_cis: Mapping, direction: str) -> dict:
    if direction == "min":
        return {g: (ci.lower, ci.upper) for g, ci in group_cis.items()}
    return {g: (-ci.upper, -ci.lower) for g, ci in group_cis.items()}


def eval_topk(group_cis: Mapping, k: int, direction: str = "min") -> bool:
    """True iff some K groups sit strictly below (or above) all the others."""
    if k < 1:
        raise ValueError("K must be >= 1")
    if k >= len(group_cis):
        return True
    iv = _orient(group_cis, direction)
    # the only candidate set is the K smallest upper endpoints
    order = sorted(iv, key=lambda g: iv[g][1])
    top, rest = order[:k], order[k:]
    return max(iv[g][1] for g in top) < min(iv[g][0] for g in rest)


def eval_ordered(group_cis: Mapping) -> bool:
    ivs = sorted((ci.lower, ci.upper) for ci in group_cis.values())
    return all(prev[1] < cur[0] for prev, cur in zip(ivs, ivs[1:]))


def topk_classify(group_cis: Mapping, k: int, direction: str = "min") -> dict:
    """Per group: True (certainly in the top K), False (certainly out), None."""
    iv = _orient(group_cis, direction)
    out = {}
    for g, (lo, hi) in iv.items():
        below_me = sum(1 for h, (l2, _) in iv.items() if h != g and l2 <= hi)
        strictly_below = sum(1 for h, (_, u2) in iv.items() if h != g and u2 < lo)
        if below_me <= k - 1:
            out[g] = True
        elif strictly_below >= k:
            out[g] = False
        else:
            out[g] = None
    return out


def ordered_classify(group_cis: Mapping) -> dict:
    """Per group: whether its interval is disjoint from every other one."""
    items = list(group_cis.items())
    out = {}
    for g, ci in items:
        out[g] = all(ci.upper < o.lower or o.upper < ci.lower for h, o in items if h != g)
    return out


# -- the controller ----------------------------------------------------------


@dataclass(frozen=True)
class Having:
    """Group filter ``agg <cmp> value`` applied to one view per group."""

    cmp: str
    value: float

    def __post_init__(self):
        if self.cmp not in ("<", "<=", ">", ">=", "=", "!="):
            raise ValueError(f"unsupported comparator {self.cmp!r}")

    def holds(self, x: float) -> bool:
        v = self.value
        return {
            "<": x < v,
            "<=": x <= v,
            ">": x > v,
            ">=": x >= v,
            "=": x == v,
            "!=": x != v,
        }[self.cmp]

    def decide(self, ci: ConfidenceInterval) -> Optional[bool]:
        """Membership certified by the interval, or None if undecided."""
        lo_ok, hi_ok = self.holds(ci.lower), self.holds(ci.upper)
        if ci.lower == ci.upper:
            return lo_ok
        if self.cmp in ("=", "!="):
            if eval_threshold(ci, self.value):
                return self.cmp == "!="
            return None
        return lo_ok if lo_ok == hi_ok else None


@dataclass
class Batch:
    """One scan step: rows passed (read or skipped) and per-view values."""

    position: int
    rows_passed: int
    values: dict = field(default_factory=dict)
    exhausted: frozenset = frozenset()
    block_read: bool = True


@dataclass
class ViewOutcome:
    key: Hashable
    group: Hashable
    interval: ConfidenceInterval
    estimate: Optional[float]
    rows_sampled: int
    exhausted: bool
    forced_exact: bool
    finished: bool


@dataclass
class StopOutcome:
    views: dict
    rounds: int
    positions: int
    satisfied: bool
    trace: list = field(default_factory=list)

    def group_intervals(self, target: Mapping) -> dict:
        return {g: self.views[key].interval for g, key in target.items()}


class _Controller:
    def __init__(self, views, condition, target, having):
        self.views = {v.key: v for v in views}
        if len(self.views) != len(views):
            raise ValueError("view keys must be unique")
        self.by_group = {}
        for v in views:
            self.by_group.setdefault(v.group, []).append(v)
        self.condition = condition
        self.target = dict(target) if target else {g: vs[0].key for g, vs in self.by_group.items()}
        self.having = having
        self.running = {}
        for v in views:
            ci = v.vacuous()
            self.running[v.key] = RunningInterval(ci.lower, ci.upper)
        self.exhausted = set()
        self.forced = set()
        self.finished = set()
        self.empty = set()

    def ci(self, key):
        return self.running[key].interval(self.views[key].delta)

    def _view_ok(self, v) -> bool:
        c = self.condition
        if v.key in self.exhausted:
            return True
        ci = self.ci(v.key)
        if c.kind == "taken":
            return v.rows_sampled >= c.value
        if c.kind == "abs":
            return eval_absolute(ci, c.value)
        if c.kind == "rel":
            return eval_relative(ci, c.value)
        if c.kind == "thresh":
            return v.key != self.target[v.group] or eval_threshold(ci, c.value)
        return True

    def _group_exhausted(self, g) -> bool:
        return all(v.key in self.exhausted for v in self.by_group[g])

    def refresh_finished(self) -> None:
        c = self.condition
        groups = [g for g in self.by_group if g not in self.finished]
        if c.is_global:
            live = {
                g: self.ci(self.target[g]) for g in self.by_group if self.target[g] not in self.empty
            }
            if c.kind == "topk":
                cls = topk_classify(live, c.k, c.direction) if c.k < len(live) else dict.fromkeys(live, True)
                done = {g for g, s in cls.items() if s is not None}
            else:
                done = {g for g, s in ordered_classify(live).items() if s}
            for g in groups:
                if g in done or self._group_exhausted(g) or g not in live:
                    self.finished.add(g)
            return
        for g in groups:
            if self._group_exhausted(g):
                self.finished.add(g)
                continue
            if self.having is not None:
                side = self.having.decide(self.ci(self.target[g]))
                if side is None:
                    continue
                if side is False:
                    self.finished.add(g)
                    continue
            if all(self._view_ok(v) for v in self.by_group[g]):
                self.finished.add(g)

    def satisfied(self) -> bool:
        c = self.condition
        if c.kind == "topk":
            live = {g: self.ci(self.target[g]) for g in self.by_group if self.target[g] not in self.empty}
            return not live or eval_topk(live, c.k, c.direction)
        if c.kind == "ordered":
            live = {g: self.ci(self.target[g]) for g in self.by_group if self.target[g] not in self.empty}
            return eval_ordered(live)
        return len(self.finished) == len(self.by_group)


def run_until_stopped(
    views,
    source,
    schedule: Optional[RoundSchedule],
    condition: StoppingCondition,
    *,
    target: Optional[Mapping] = None,
    having: Optional[Having] = None,
    record: bool = False,
) -> StopOutcome:
    """Drive ``source`` until every group is finished or the data runs out.

    ``target`` maps each group to the view that threshold, HAVING, top-K and
    ordering decisions look at (default: the group's first view).  Finished
    groups stop ingesting, so the rows behind each view are always a prefix
    of that view's rows in scan order.  ``schedule`` is informational; each
    view decays its own delta share.
    """
    ctl = _Controller(list(views), condition, target, having)
    rounds = 0
    position = 0
    trace = []
    ctl.refresh_finished()
    while len(ctl.finished) < len(ctl.by_group):
        unfinished = frozenset(g for g in ctl.by_group if g not in ctl.finished)
        batch = source.next_batch(unfinished)
        if batch is None:
            break
        position = batch.position
        if batch.block_read:
            rounds += 1
        for g in unfinished:
            for v in ctl.by_group[g]:
                v.ingest(batch.values.get(v.key, ()), batch.rows_passed)
        for g in unfinished:
            for v in ctl.by_group[g]:
                if v.key in batch.exhausted and v.key not in ctl.exhausted:
                    ctl.exhausted.add(v.key)
                    ctl.forced.add(v.key)
                    exact = v.exact_value()
                    if exact is None:
                        ctl.empty.add(v.key)
                    else:
                        ctl.running[v.key].set_exact(exact)
                elif v.key not in ctl.exhausted:
                    ctl.running[v.key].update(v.interval(round_delta(v.delta, position)))
        if record:
            trace.append(
                (position, {k: (r.best_lower, r.best_upper) for k, r in ctl.running.items()})
            )
        ctl.refresh_finished()

    out = {}
    for key, v in ctl.views.items():
        ci = ctl.ci(key)
        est = v.estimate()
        if est is not None:
            est = min(max(est, ci.lower), ci.upper)
        out[key] = ViewOutcome(
            key=key,
            group=v.group,
            interval=ci,
            estimate=est,
            rows_sampled=v.rows_sampled,
            exhausted=key in ctl.exhausted,
            forced_exact=key in ctl.forced,
            finished=v.group in ctl.finished,
        )
    return StopOutcome(out, rounds, position, ctl.satisfied(), trace)
