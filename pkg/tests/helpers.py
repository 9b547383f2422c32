"""Shared generators for the test suite."""

import itertools

import numpy as np

from aqpbounds.bounders import RangeBounds
from aqpbounds.expr import BinOp, Col, Const, ExprRangeError, Neg, Pow, derive_range

COLS = ("c1", "c2", "c3")


def random_expr(gen, depth=3):
    if depth == 0 or gen.random() < 0.25:
        if gen.random() < 0.7:
            return Col(COLS[gen.integers(len(COLS))])
        return Const(float(np.round(gen.uniform(-5, 5), 2)))
    r = gen.random()
    if r < 0.1:
        return Neg(random_expr(gen, depth - 1))
    if r < 0.25:
        return Pow(random_expr(gen, depth - 1), int(gen.integers(0, 4)))
    op = "+-*/"[gen.integers(4)]
    return BinOp(op, random_expr(gen, depth - 1), random_expr(gen, depth - 1))


def random_boxes(gen):
    out = {}
    for c in COLS:
        lo = float(np.round(gen.uniform(-10, 10), 2))
        out[c] = RangeBounds(lo, lo + float(np.round(gen.exponential(3.0), 2)))
    return out


def sample_points(gen, boxes, k=48):
    """Random interior points plus every corner of the box."""
    corners = np.array(list(itertools.product(*[(boxes[c].a, boxes[c].b) for c in COLS])))
    inner = np.column_stack([gen.uniform(boxes[c].a, boxes[c].b, k) for c in COLS])
    pts = np.vstack([corners, inner])
    return {c: pts[:, i] for i, c in enumerate(COLS)}


def fuzz_soundness(cases, seed=0):
    """(violations, checked, rejected) over ``cases`` random expressions."""
    gen = np.random.default_rng(seed)
    violations = checked = rejected = 0
    with np.errstate(all="ignore"):
        for _ in range(cases):
            e = random_expr(gen)
            boxes = random_boxes(gen)
            try:
                r = derive_range(e, boxes)
            except ExprRangeError:
                rejected += 1
                continue
            vals = np.asarray(e.evaluate(sample_points(gen, boxes)), dtype=float)
            vals = vals[np.isfinite(vals)]
            tol = 1e-9 * max(1.0, abs(r.lo), abs(r.hi))
            checked += 1
            if vals.size and (vals.min() < r.lo - tol or vals.max() > r.hi + tol):
                violations += 1
    return violations, checked, rejected
