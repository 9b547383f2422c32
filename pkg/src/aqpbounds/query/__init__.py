"""Mini-SQL front end: parsing, planning and execution."""

from .engine import GroupResult, Metrics, QueryResult, execute, run_query
from .parser import Aggregate, Atom, HavingClause, Query, QuerySyntaxError, parse
from .plan import STRATEGIES, PlanError, QueryPlan, ViewSpec, plan

__all__ = [
    "Aggregate",
    "Atom",
    "GroupResult",
    "HavingClause",
    "Metrics",
    "PlanError",
    "Query",
    "QueryPlan",
    "QueryResult",
    "QuerySyntaxError",
    "STRATEGIES",
    "ViewSpec",
    "execute",
    "parse",
    "plan",
    "run_query",
]
