"""Turn a parsed query into aggregate views with ranges and delta shares."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

from ..bounders import RangeBounds
from ..estimators import budget
from ..expr import DerivedRange, ExprRangeError, derive_range
from ..rangetrim import bounder_from_name
from ..scramble import CATEGORICAL, NUMERIC, Catalog
from ..stopping import Having, StoppingCondition
from .parser import Aggregate, Atom, Query

STRATEGIES = ("scan", "activesync", "activepeek", "exact")
DEFAULT_STOP = "rel:0.1"


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class CompiledAtom:
    """A filter atom bound to the catalog (categoricals hold a code or None)."""

    column: str
    op: str
    categorical: bool
    code: Optional[int] = None
    number: Optional[float] = None


@dataclass(frozen=True)
class ViewSpec:
    key: tuple  # (group label, aggregate index)
    group: Optional[str]
    group_code: Optional[int]
    agg_index: int
    aggregate: Aggregate
    delta: float
    rng: Optional[RangeBounds]
    range_method: Optional[str]


@dataclass
class QueryPlan:
    query: Query
    views: list
    delta: float
    bounder: str
    strategy: str
    stop: StoppingCondition
    filters: tuple
    group_column: Optional[str]
    groups: dict  # label -> code
    having: Optional[Having]
    target_agg: int
    known_size: bool
    n_rows: int
    ranges: dict = field(default_factory=dict)

    @property
    def n_views(self) -> int:
        return len(self.views)

    def target(self) -> dict:
        return {v.group: v.key for v in self.views if v.agg_index == self.target_agg}

    def needed_columns(self) -> frozenset:
        return self.query.columns()


def _compile_atom(atom: Atom, catalog: Catalog, dictionaries: Mapping) -> CompiledAtom:
    if not catalog.has(atom.column):
        raise PlanError(f"unknown column {atom.column!r}")
    info = catalog.column(atom.column)
    if info.type == CATEGORICAL:
        if atom.op not in ("=", "!="):
            raise PlanError(f"categorical column {atom.column!r} only supports = and !=")
        words = dictionaries[atom.column]
        code = words.index(atom.text) if atom.text in words else None
        return CompiledAtom(atom.column, atom.op, True, code=code)
    if atom.number is None:
        raise PlanError(f"numeric column {atom.column!r} compared with non-numeric literal {atom.text!r}")
    return CompiledAtom(atom.column, atom.op, False, number=atom.number)


def _narrow_boxes(ranges: dict, filters) -> dict:
    """Intersect catalog boxes with numeric filter atoms (closed boxes)."""
    out = dict(ranges)
    for f in filters:
        if f.categorical or f.column not in out:
            continue
        a, b = out[f.column].a, out[f.column].b
        v = f.number
        if f.op in ("<", "<="):
            b = min(b, v)
        elif f.op in (">", ">="):
            a = max(a, v)
        elif f.op == "=":
            a, b = max(a, v), min(b, v)
        if a <= b:
            out[f.column] = RangeBounds(a, b)
    return out


def _agg_range(agg: Aggregate, boxes: dict) -> Optional[DerivedRange]:
    if agg.expr is None:
        return None
    try:
        return derive_range(agg.expr, boxes)
    except ExprRangeError as exc:
        raise PlanError(f"cannot bound {agg.label}: {exc}") from None


def plan(
    query: Query,
    catalog: Catalog,
    dictionaries: Mapping,
    *,
    delta: float = 1e-15,
    bounder: str = "bernstein+rt",
    strategy: str = "activesync",
    stop: Optional[str] = None,
) -> QueryPlan:
    if not (0.0 < delta < 1.0):
        raise PlanError("delta must lie in (0, 1)")
    if strategy not in STRATEGIES:
        raise PlanError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    bounder_from_name(bounder)  # validate early
    for col in query.columns():
        if not catalog.has(col):
            raise PlanError(f"unknown column {col!r}")
    for agg in query.aggregates:
        for col in agg.columns():
            if catalog.column(col).type != NUMERIC:
                raise PlanError(f"{agg.label} uses categorical column {col!r}")

    filters = tuple(_compile_atom(a, catalog, dictionaries) for a in query.filters)

    groups: dict = {None: None}
    if query.group_by is not None:
        info = catalog.column(query.group_by)
        if info.type != CATEGORICAL:
            raise PlanError(f"cannot group by numeric column {query.group_by!r}")
        words = dictionaries[query.group_by]
        if not words:
            raise PlanError(f"column {query.group_by!r} has an empty dictionary")
        groups = {w: i for i, w in enumerate(words)}

    having = None
    target_agg = 0
    if query.having is not None:
        hv = query.having
        matches = [i for i, a in enumerate(query.aggregates) if a == hv.aggregate]
        if not matches:
            raise PlanError(f"HAVING refers to {hv.aggregate.label}, which is not selected")
        target_agg = matches[0]
        having = Having(hv.cmp, hv.value)

    if stop is None:
        cond = StoppingCondition("thresh", value=having.value) if having else StoppingCondition.parse(DEFAULT_STOP)
    else:
        cond = StoppingCondition.parse(stop) if isinstance(stop, str) else stop
    if having is not None and cond.is_global:
        raise PlanError("HAVING cannot be combined with topk or ordered stopping")

    boxes = _narrow_boxes(catalog.ranges(), filters)
    ranges = {i: _agg_range(a, boxes) for i, a in enumerate(query.aggregates)}

    n_views = len(groups) * len(query.aggregates)
    share = budget(delta, n_views)
    views = []
    for label, code in groups.items():
        for i, agg in enumerate(query.aggregates):
            dr = ranges[i]
            views.append(
                ViewSpec(
                    key=(label, i),
                    group=label,
                    group_code=code,
                    agg_index=i,
                    aggregate=agg,
                    delta=share,
                    rng=None if dr is None else dr.as_bounds(),
                    range_method=None if dr is None else dr.method,
                )
            )
    return QueryPlan(
        query=query,
        views=views,
        delta=delta,
        bounder=bounder,
        strategy=strategy,
        stop=cond,
        filters=filters,
        group_column=query.group_by,
        groups=groups,
        having=having,
        target_agg=target_agg,
        known_size=not filters and query.group_by is None,
        n_rows=catalog.n_rows,
        ranges=ranges,
    )
