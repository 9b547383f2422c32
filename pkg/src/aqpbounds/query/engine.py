"""Query execution over a scramble with Scan, ActiveSync or ActivePeek.

All strategies walk blocks in the same cyclic order starting from a block
drawn from the query seed.  Scan reads every block.  ActiveSync consults the
block bitmaps before each read and skips blocks holding no row of any
unfinished group.  ActivePeek moves the bitmap consultation to a producer
thread that runs ahead of the consumer and hands candidate positions over a
bounded queue; the consumer re-checks each candidate against the current
unfinished set, so it reads exactly the blocks ActiveSync would.
"""

from __future__ import annotations

import math
import queue
import threading
import time
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..bounders import ConfidenceInterval
from ..rangetrim import bounder_from_name
from ..scramble import Scramble
from ..stopping import Batch, StoppingCondition, run_until_stopped, topk_classify
from ..views import AvgView, CountView, MeanView, SumView
from .plan import QueryPlan

DEFAULT_QUEUE_SIZE = 64
DEFAULT_LOOKAHEAD = 256

_CMP = {
    "=": np.equal,
    "!=": np.not_equal,
    "<": np.less,
    "<=": np.less_equal,
    ">": np.greater,
    ">=": np.greater_equal,
}


@dataclass
class GroupResult:
    group: Optional[str]
    aggregate: str
    estimate: Optional[float]
    lower: float
    upper: float
    delta: float
    rows_sampled: int
    forced_exact: bool
    finished: bool = True
    in_result: bool = True

    def record(self) -> dict:
        keys = ("group", "aggregate", "estimate", "lower", "upper", "delta", "rows_sampled", "forced_exact")
        return {k: getattr(self, k) for k in keys}


@dataclass
class Metrics:
    blocks_fetched: int
    rows_scanned: int
    rows_in_views: int
    rounds: int
    wall_time: float
    blocks_total: int

    def record(self) -> dict:
        return {"metrics": asdict(self)}


@dataclass
class QueryResult:
    results: list
    metrics: Metrics
    plan: QueryPlan
    satisfied: bool
    blocks_read: tuple = ()

    def rows(self, include_excluded: bool = False) -> list:
        return [r for r in self.results if include_excluded or r.in_result]

    def _target_rows(self) -> list:
        label = self.plan.query.aggregates[self.plan.target_agg].label
        return [r for r in self.results if r.aggregate == label and r.estimate is not None]

    def having_groups(self) -> set:
        return {r.group for r in self._target_rows() if r.in_result}

    def topk_groups(self) -> set:
        stop = self.plan.stop
        rows = self._target_rows()
        cis = {r.group: ConfidenceInterval(r.lower, r.upper, r.delta) for r in rows}
        if stop.k >= len(cis):
            return set(cis)
        cls = topk_classify(cis, stop.k, stop.direction)
        chosen = {g for g, s in cls.items() if s}
        if len(chosen) == stop.k:
            return chosen
        sign = 1.0 if stop.direction == "min" else -1.0
        return {r.group for r in sorted(rows, key=lambda r: sign * r.estimate)[: stop.k]}

    def order(self) -> list:
        return [r.group for r in sorted(self._target_rows(), key=lambda r: (r.lower, r.upper, r.estimate))]

    def records(self) -> list:
        return [r.record() for r in self.rows()] + [self.metrics.record()]


class BlockFeeder:
    """Produces :class:`Batch` objects for the stopping controller."""

    def __init__(self, plan: QueryPlan, scramble: Scramble, start: int, strategy: str,
                 queue_size: int = DEFAULT_QUEUE_SIZE, lookahead: int = DEFAULT_LOOKAHEAD):
        self.plan = plan
        self.s = scramble
        self.strategy = strategy
        nb = scramble.n_blocks
        self.n_blocks = nb
        self.order = (start + np.arange(nb)) % nb
        sizes = np.array([scramble.block_range(j)[1] - scramble.block_range(j)[0] for j in range(nb)])
        self.rows_before = np.concatenate(([0], np.cumsum(sizes[self.order])))
        self.pos = 0
        self.blocks_read = []
        self.rows_scanned = 0

        base = np.ones(nb, dtype=bool)
        for f in plan.filters:
            if f.categorical and f.op == "=":
                if f.code is None:
                    base[:] = False
                else:
                    base &= scramble.bitmaps[f.column][f.code]
        self.group_mask = {}
        for label, code in plan.groups.items():
            m = base.copy()
            if plan.group_column is not None:
                m &= scramble.bitmaps[plan.group_column][code]
            self.group_mask[label] = m[self.order]
        self.last_pos = {}
        for label, m in self.group_mask.items():
            hits = np.flatnonzero(m)
            self.last_pos[label] = int(hits[-1]) if hits.size else -1
        self.views_by_group = {}
        for v in plan.views:
            self.views_by_group.setdefault(v.group, []).append(v)
        self._mask_cache = {}
        self._peek = None
        if strategy == "activepeek":
            self._peek = _Peeker(self, queue_size, lookahead)

    def union_mask(self, groups: frozenset) -> np.ndarray:
        m = self._mask_cache.get(groups)
        if m is None:
            m = np.zeros(self.n_blocks, dtype=bool)
            for g in groups:
                m |= self.group_mask[g]
            self._mask_cache[groups] = m
        return m

    def _next_sync(self, unfinished) -> int:
        mask = self.union_mask(unfinished)
        rest = mask[self.pos :]
        hit = int(np.argmax(rest)) if rest.size else 0
        return self.pos + hit if rest.size and rest[hit] else self.n_blocks

    def _next_peek(self, unfinished) -> int:
        mask = self.union_mask(unfinished)
        return self._peek.next_candidate(unfinished, self.pos, mask)

    def next_batch(self, unfinished) -> Optional[Batch]:
        if self.pos >= self.n_blocks:
            self.close()
            return None
        unfinished = frozenset(unfinished)
        if self.strategy in ("scan", "exact"):
            q = self.pos
        elif self.strategy == "activesync":
            q = self._next_sync(unfinished)
        else:
            q = self._next_peek(unfinished)
        values = {}
        read = q < self.n_blocks
        if read:
            j = int(self.order[q])
            self.blocks_read.append(j)
            block = self.s.scan_block(j)
            self.rows_scanned += len(next(iter(block.values())))
            values = self._extract(block, unfinished)
            new_pos = q + 1
        else:
            new_pos = self.n_blocks
        passed = int(self.rows_before[new_pos] - self.rows_before[self.pos])
        self.pos = new_pos
        exhausted = frozenset(
            v.key for g, vs in self.views_by_group.items() if self.last_pos[g] < self.pos for v in vs
        )
        if self.pos >= self.n_blocks:
            self.close()
        return Batch(self.pos, passed, values, exhausted, read)

    def _extract(self, block: dict, unfinished) -> dict:
        n = len(next(iter(block.values())))
        keep = np.ones(n, dtype=bool)
        for f in self.plan.filters:
            col = block[f.column]
            if f.categorical:
                if f.code is None:
                    keep[:] = f.op == "!="
                else:
                    keep &= _CMP[f.op](col, f.code)
            else:
                keep &= _CMP[f.op](col, f.number)
        rows = np.flatnonzero(keep)
        gcol = self.plan.group_column
        codes = block[gcol][rows] if gcol is not None else None
        out = {}
        for label in unfinished:
            views = self.views_by_group[label]
            idx = rows if gcol is None else rows[codes == views[0].group_code]
            env = None
            for v in views:
                agg = v.aggregate
                if agg.expr is None:
                    out[v.key] = np.zeros(idx.size)
                    continue
                if env is None:
                    env = {c: block[c][idx] for c in self.plan.needed_columns() if c in block}
                val = np.asarray(agg.expr.evaluate(env), dtype=float)
                out[v.key] = np.broadcast_to(val, idx.shape)
        return out

    def close(self) -> None:
        if self._peek is not None:
            self._peek.close()


class _Peeker:
    """Lookahead producer publishing candidate scan positions."""

    def __init__(self, feeder: BlockFeeder, queue_size: int, lookahead: int):
        self.feeder = feeder
        self.q = queue.Queue(maxsize=max(1, queue_size))
        self.lookahead = max(1, lookahead)
        self.cv = threading.Condition()
        self.snapshot = frozenset(feeder.group_mask)
        self.consumer_pos = 0
        self.stop = threading.Event()
        self.thread = threading.Thread(target=self._run, name="aqp-peek", daemon=True)
        self.thread.start()

    def _put(self, item) -> bool:
        while not self.stop.is_set():
            try:
                self.q.put(item, timeout=0.05)
                return True
            except queue.Full:
                continue
        return False

    def _run(self):
        pos = 0
        n = self.feeder.n_blocks
        while pos < n and not self.stop.is_set():
            with self.cv:
                while (
                    pos - self.consumer_pos >= self.lookahead
                    and not self.q.empty()
                    and not self.stop.is_set()
                ):
                    self.cv.wait(0.01)
                snap = self.snapshot
            if self.feeder.union_mask(snap)[pos]:
                if not self._put(pos):
                    return
            pos += 1
        self._put(None)

    def next_candidate(self, unfinished, pos: int, mask) -> int:
        with self.cv:
            self.snapshot = unfinished
            self.consumer_pos = pos
            self.cv.notify_all()
        while True:
            item = self.q.get()
            if item is None:
                return self.feeder.n_blocks
            if item < pos or not mask[item]:
                continue  # stale candidate
            return item

    def close(self):
        self.stop.set()
        with self.cv:
            self.cv.notify_all()
        try:
            while True:
                self.q.get_nowait()
        except queue.Empty:
            pass
        self.thread.join(timeout=5)


def start_block(seed: int, n_blocks: int) -> int:
    return int(np.random.Generator(np.random.PCG64(seed)).integers(n_blocks))


def _make_view(spec, plan: QueryPlan):
    fn = spec.aggregate.fn
    R = plan.n_rows
    if fn == "COUNT":
        return CountView(spec.key, spec.delta, R, spec.group, plan.known_size)
    bounder = bounder_from_name(plan.bounder)
    if fn == "SUM":
        return SumView(spec.key, bounder, spec.rng, spec.delta, R, spec.group, known_size=plan.known_size)
    if plan.known_size:
        return MeanView(spec.key, bounder, spec.rng, spec.delta, R, spec.group)
    return AvgView(spec.key, bounder, spec.rng, spec.delta, R, spec.group)


def execute(
    plan: QueryPlan,
    scramble: Scramble,
    seed: int = 0,
    *,
    queue_size: int = DEFAULT_QUEUE_SIZE,
    lookahead: int = DEFAULT_LOOKAHEAD,
) -> QueryResult:
    t0 = time.perf_counter()
    fetched0 = scramble.blocks_fetched
    exact = plan.strategy == "exact"
    views = [_make_view(v, plan) for v in plan.views]
    feeder = BlockFeeder(plan, scramble, start_block(seed, scramble.n_blocks), plan.strategy, queue_size, lookahead)
    if exact:
        cond = StoppingCondition("taken", value=float(plan.n_rows + 1))
        having = None
    else:
        cond, having = plan.stop, plan.having
    try:
        out = run_until_stopped(views, feeder, None, cond, target=plan.target(), having=having)
    finally:
        feeder.close()

    results = []
    labels = [a.label for a in plan.query.aggregates]
    included = {}
    for spec in plan.views:
        vo = out.views[spec.key]
        if spec.agg_index == plan.target_agg:
            if vo.estimate is None:
                included[spec.group] = False
            elif plan.having is None:
                included[spec.group] = True
            else:
                side = plan.having.decide(vo.interval)
                included[spec.group] = plan.having.holds(vo.estimate) if side is None else side
    for spec in plan.views:
        vo = out.views[spec.key]
        results.append(
            GroupResult(
                group=spec.group,
                aggregate=labels[spec.agg_index],
                estimate=vo.estimate,
                lower=vo.interval.lower,
                upper=vo.interval.upper,
                delta=0.0 if exact else spec.delta,
                rows_sampled=vo.rows_sampled,
                forced_exact=False if exact else vo.forced_exact,
                finished=vo.finished,
                in_result=included.get(spec.group, True),
            )
        )
    metrics = Metrics(
        blocks_fetched=scramble.blocks_fetched - fetched0,
        rows_scanned=feeder.rows_scanned,
        rows_in_views=sum(v.rows_sampled for v in views),
        rounds=out.rounds,
        wall_time=time.perf_counter() - t0,
        blocks_total=scramble.n_blocks,
    )
    return QueryResult(results, metrics, plan, out.satisfied or exact, tuple(feeder.blocks_read))


def run_query(text: str, scramble: Scramble, *, seed: int = 0, **plan_kwargs) -> QueryResult:
    """Parse, plan and execute in one call."""
    from .parser import parse
    from .plan import plan as make_plan

    q = parse(text, columns=list(scramble.schema))
    p = make_plan(q, scramble.catalog, scramble.dictionaries, **plan_kwargs)
    return execute(p, scramble, seed)
