import itertools

import numpy as np
import pytest
from helpers import fuzz_soundness, random_boxes, random_expr
from hypothesis import given, settings
from hypothesis import strategies as st

from aqpbounds.bounders import RangeBounds as R
from aqpbounds.expr import (
    BinOp,
    Col,
    Const,
    ExprError,
    ExprRangeError,
    Neg,
    Pow,
    certify_monotone,
    curvature,
    derive_range,
    interval_eval,
    ipow,
)

c1, c2 = Col("c1"), Col("c2")


def add(x, y):
    return BinOp("+", x, y)


def mul(x, y):
    return BinOp("*", x, y)


def worked_example():
    inner = BinOp("-", add(mul(Const(2), c1), mul(Const(3), c2)), Const(1))
    return Pow(inner, 2)


def test_worked_example_exact():
    r = derive_range(worked_example(), {"c1": R(-3, 1), "c2": R(-1, 3)})
    assert (r.lo, r.hi) == (0.0, 100.0)
    assert r.method == "convex-corner"


def test_monotone_sum():
    r = derive_range(add(c1, c2), {"c1": R(0, 1), "c2": R(2, 3)})
    assert (r.lo, r.hi, r.method) == (2.0, 4.0, "monotone")


def test_product_corner_oracle():
    boxes = {"c1": R(-1, 2), "c2": R(-3, 4)}
    corners = [a * b for a, b in itertools.product((-1, 2), (-3, 4))]
    r = derive_range(mul(c1, c2), boxes)
    assert (r.lo, r.hi) == (min(corners), max(corners)) == (-6, 8)


def test_certify_signs():
    assert certify_monotone(add(mul(Const(2), c1), mul(Const(3), c2))) == {"c1": 1, "c2": 1}
    assert certify_monotone(add(Neg(c1), c2)) == {"c1": -1, "c2": 1}
    assert certify_monotone(mul(c1, c2), {"c1": R(-1, 2), "c2": R(-3, 4)}) is None
    assert certify_monotone(mul(c1, c2), {"c1": R(1, 2), "c2": R(3, 4)}) == {"c1": 1, "c2": 1}
    assert certify_monotone(Pow(c1, 2)) is None


def test_curvature():
    assert curvature(worked_example(), {"c1": R(-3, 1), "c2": R(-1, 3)}) == "convex"
    assert curvature(Neg(Pow(c1, 2)), {"c1": R(-1, 1)}) == "concave"
    assert curvature(Pow(c1, 3), {"c1": R(-1, 1)}) is None


def test_division_by_straddling_box():
    with pytest.raises(ExprRangeError):
        derive_range(BinOp("/", c1, c2), {"c1": R(1, 2), "c2": R(-1, 1)})
    r = derive_range(BinOp("/", c1, c2), {"c1": R(1, 2), "c2": R(2, 4)})
    assert (r.lo, r.hi) == (0.25, 1.0)


def test_missing_box():
    with pytest.raises(ExprRangeError):
        derive_range(add(c1, c2), {"c1": R(0, 1)})


def test_bad_nodes():
    with pytest.raises(ExprError):
        Pow(c1, -1)
    with pytest.raises(ExprError):
        BinOp("%", c1, c2)


def test_ipow_and_interval_even_power():
    assert ipow(3.0, 0) == 1.0 and ipow(-2.0, 3) == -8.0
    assert interval_eval(Pow(c1, 2), {"c1": R(-2, 1)}) == (0.0, 4.0)


def test_to_sql_text():
    assert worked_example().to_sql() == "(((2 * c1) + (3 * c2)) - 1)^2"
    assert str(add(c1, Const(1.5))) == "(c1 + 1.5)"


def test_deterministic():
    e = worked_example()
    b = {"c1": R(-3, 1), "c2": R(-1, 3)}
    assert derive_range(e, b) == derive_range(e, b)


def test_monotone_exact_against_grid():
    e = add(mul(Const(2), c1), Neg(mul(c2, Const(0.5))))
    boxes = {"c1": R(-1, 3), "c2": R(2, 5)}
    r = derive_range(e, boxes)
    g1, g2 = np.meshgrid(np.linspace(-1, 3, 201), np.linspace(2, 5, 201))
    vals = e.evaluate({"c1": g1, "c2": g2})
    assert vals.min() == pytest.approx(r.lo) and vals.max() == pytest.approx(r.hi)


@settings(max_examples=300)
@given(st.integers(0, 2**32 - 1))
def test_soundness_property(seed):
    gen = np.random.default_rng(seed)
    e = random_expr(gen)
    boxes = random_boxes(gen)
    try:
        r = derive_range(e, boxes)
    except ExprRangeError:
        return
    assert r.lo <= r.hi
    pts = {c: np.linspace(boxes[c].a, boxes[c].b, 9) for c in boxes}
    mesh = np.meshgrid(*pts.values())
    with np.errstate(all="ignore"):
        vals = np.asarray(e.evaluate(dict(zip(pts, mesh))), dtype=float)
    vals = vals[np.isfinite(vals)]
    tol = 1e-9 * max(1.0, abs(r.lo), abs(r.hi))
    assert vals.size == 0 or (vals.min() >= r.lo - tol and vals.max() <= r.hi + tol)


def test_fuzz_small():
    violations, checked, _ = fuzz_soundness(5000, seed=1)
    assert violations == 0 and checked > 4000
