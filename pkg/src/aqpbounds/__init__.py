"""Approximate aggregation over shuffled tables with guaranteed error bounds."""

from .bounders import (
    AndersonDKW,
    Bounder,
    BounderError,
    ConfidenceInterval,
    EmpiricalBernsteinSerfling,
    HoeffdingSerfling,
    RangeBounds,
)
from .expr import DerivedRange, ExprRangeError, derive_range
from .rangetrim import BOUNDER_NAMES, RangeTrim, bounder_from_name
from .scramble import Scramble, build_scramble, load, save
from .stopping import StoppingCondition, round_delta, run_until_stopped

__version__ = "0.1.0"

__all__ = [
    "AndersonDKW",
    "BOUNDER_NAMES",
    "Bounder",
    "BounderError",
    "ConfidenceInterval",
    "DerivedRange",
    "EmpiricalBernsteinSerfling",
    "ExprRangeError",
    "HoeffdingSerfling",
    "RangeBounds",
    "RangeTrim",
    "Scramble",
    "StoppingCondition",
    "bounder_from_name",
    "build_scramble",
    "derive_range",
    "load",
    "round_delta",
    "run_until_stopped",
    "save",
]
