"""Arithmetic expressions over numeric columns and sound range derivation.

``derive_range`` encloses the image of an expression over the box formed by
per-column catalog ranges.  It tries, in order:

1. per-column monotonicity (syntactic sign analysis) -> two corner evaluations;
2. convexity/concavity (syntactic curvature rules) -> exact corner enumeration
   on the hard side, interval arithmetic on the other;
3. plain interval arithmetic.

Powers are evaluated by repeated multiplication everywhere, so the float
evaluation of an expression is monotone wherever the real one is, and the
corner/interval results stay sound in floating point.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .bounders import RangeBounds

MAX_CORNER_COLUMNS = 20


class ExprError(ValueError):
    pass


class ExprRangeError(ExprError):
    """No finite range can be derived (e.g. denominator box contains 0)."""


class Expr:
    def columns(self) -> frozenset:
        raise NotImplementedError

    def evaluate(self, env: Mapping):
        raise NotImplementedError

    def __str__(self):
        return self.to_sql()


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def columns(self):
        return frozenset()

    def evaluate(self, env):
        return float(self.value)

    def to_sql(self):
        v = float(self.value)
        return str(int(v)) if v.is_integer() else repr(v)


@dataclass(frozen=True)
class Col(Expr):
    name: str

    def columns(self):
        return frozenset([self.name])

    def evaluate(self, env):
        return env[self.name]

    def to_sql(self):
        return self.name


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr

    def columns(self):
        return self.arg.columns()

    def evaluate(self, env):
        return -self.arg.evaluate(env)

    def to_sql(self):
        return f"-{_wrap(self.arg)}"


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def __post_init__(self):
        if self.op not in "+-*/" or len(self.op) != 1:
            raise ExprError(f"unsupported operator {self.op!r}")

    def columns(self):
        return self.left.columns() | self.right.columns()

    def evaluate(self, env):
        x, y = self.left.evaluate(env), self.right.evaluate(env)
        if self.op == "+":
            return x + y
        if self.op == "-":
            return x - y
        if self.op == "*":
            return x * y
        return x / y

    def to_sql(self):
        return f"({self.left.to_sql()} {self.op} {self.right.to_sql()})"


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exp: int

    def __post_init__(self):
        if not isinstance(self.exp, int) or self.exp < 0:
            raise ExprError("exponents must be non-negative integers")

    def columns(self):
        return self.base.columns()

    def evaluate(self, env):
        return ipow(self.base.evaluate(env), self.exp)

    def to_sql(self):
        return f"{_wrap(self.base)}^{self.exp}"


def _wrap(e: Expr) -> str:
    s = e.to_sql()
    return s if isinstance(e, (Const, Col)) or s.startswith("(") else f"({s})"


def ipow(x, n: int):
    """x**n by left-to-right multiplication (monotone in |x| under rounding)."""
    if n == 0:
        return np.ones_like(x, dtype=float) if isinstance(x, np.ndarray) else 1.0
    p = x
    for _ in range(n - 1):
        p = p * x
    return p


# -- interval arithmetic -----------------------------------------------------


def _box(boxes, name):
    if name not in boxes:
        raise ExprRangeError(f"no range bounds for column {name!r}")
    b = boxes[name]
    return (b.a, b.b) if isinstance(b, RangeBounds) else (float(b[0]), float(b[1]))


def interval_eval(expr: Expr, boxes: Mapping) -> tuple[float, float]:
    if isinstance(expr, Const):
        return expr.value, expr.value
    if isinstance(expr, Col):
        return _box(boxes, expr.name)
    if isinstance(expr, Neg):
        lo, hi = interval_eval(expr.arg, boxes)
        return -hi, -lo
    if isinstance(expr, Pow):
        lo, hi = interval_eval(expr.base, boxes)
        n = expr.exp
        if n == 0:
            return 1.0, 1.0
        plo, phi = ipow(lo, n), ipow(hi, n)
        if n % 2 == 1:
            return plo, phi
        if lo >= 0:
            return plo, phi
        if hi <= 0:
            return phi, plo
        return 0.0, max(plo, phi)
    if isinstance(expr, BinOp):
        a, b = interval_eval(expr.left, boxes)
        c, d = interval_eval(expr.right, boxes)
        if expr.op == "+":
            return a + c, b + d
        if expr.op == "-":
            return a - d, b - c
        if expr.op == "*":
            ps = (a * c, a * d, b * c, b * d)
            return min(ps), max(ps)
        if c <= 0.0 <= d:
            raise ExprRangeError(f"denominator {expr.right.to_sql()} may be zero over [{c}, {d}]")
        qs = (a / c, a / d, b / c, b / d)
        return min(qs), max(qs)
    raise ExprError(f"unknown expression node {expr!r}")


def _sign(expr, boxes) -> Optional[int]:
    lo, hi = interval_eval(expr, boxes)
    if lo >= 0:
        return 1
    if hi <= 0:
        return -1
    return None


# -- monotonicity ------------------------------------------------------------


def _merge_signs(left: dict, right: dict) -> Optional[dict]:
    out = dict(left)
    for c, s in right.items():
        if c in out and out[c] != s:
            return None
        out[c] = s
    return out


def _mono(expr: Expr, boxes) -> Optional[dict]:
    if isinstance(expr, Const):
        return {}
    if isinstance(expr, Col):
        return {expr.name: 1}
    if isinstance(expr, Neg):
        sig = _mono(expr.arg, boxes)
        return None if sig is None else {c: -s for c, s in sig.items()}
    if isinstance(expr, Pow):
        sig = _mono(expr.base, boxes)
        if sig is None or expr.exp == 0:
            return None if sig is None else {}
        if expr.exp % 2 == 1 or not sig:
            return sig
        g = _sign(expr.base, boxes) if boxes is not None else None
        return None if g is None else {c: s * g for c, s in sig.items()}
    if isinstance(expr, BinOp):
        sl, sr = _mono(expr.left, boxes), _mono(expr.right, boxes)
        if sl is None or sr is None:
            return None
        if expr.op == "+":
            return _merge_signs(sl, sr)
        if expr.op == "-":
            return _merge_signs(sl, {c: -s for c, s in sr.items()})
        if boxes is None and sl and sr:
            return None
        gl = _const_or_sign(expr.left, boxes) if sr else None
        gr = _const_or_sign(expr.right, boxes) if sl else None
        if (sl and gr is None) or (sr and gl is None):
            return None
        if expr.op == "*":
            t1 = {c: s * gr for c, s in sl.items()}
            t2 = {c: s * gl for c, s in sr.items()}
        else:
            t1 = {c: s * gr for c, s in sl.items()}
            t2 = {c: -s * gl for c, s in sr.items()}
        return _merge_signs(t1, t2)
    raise ExprError(f"unknown expression node {expr!r}")


def _const_or_sign(expr, boxes) -> Optional[int]:
    if isinstance(expr, Const):
        return 1 if expr.value >= 0 else -1
    if boxes is None:
        return None
    return _sign(expr, boxes)


def certify_monotone(expr: Expr, boxes: Optional[Mapping] = None) -> Optional[dict]:
    """Per-column direction (+1 / -1, 0 if unused) or None when not certifiable.

    Never claims monotonicity that does not hold; it may miss some.
    """
    sig = _mono(expr, boxes)
    if sig is None:
        return None
    return {c: sig.get(c, 0) for c in sorted(expr.columns())}


# -- curvature ---------------------------------------------------------------

_FLIP = {"convex": "concave", "concave": "convex", "affine": "affine", "const": "const"}


def _add_curv(x, y):
    if x is None or y is None:
        return None
    if x == "const":
        return y
    if y == "const":
        return x
    if x == "affine":
        return y
    if y == "affine" or x == y:
        return x
    return None


def _scale_curv(c, k):
    if c is None or k == 0:
        return "const" if k == 0 else None
    return c if k > 0 else _FLIP[c]


def curvature(expr: Expr, boxes: Mapping) -> Optional[str]:
    """'const', 'affine', 'convex', 'concave', or None if not certified."""
    if isinstance(expr, Const):
        return "const"
    if isinstance(expr, Col):
        return "affine"
    if isinstance(expr, Neg):
        c = curvature(expr.arg, boxes)
        return None if c is None else _FLIP[c]
    if isinstance(expr, BinOp):
        cl, cr = curvature(expr.left, boxes), curvature(expr.right, boxes)
        if expr.op == "+":
            return _add_curv(cl, cr)
        if expr.op == "-":
            return _add_curv(cl, None if cr is None else _FLIP[cr])
        if expr.op == "*":
            if cl == "const" and cr == "const":
                return "const"
            if cl == "const":
                return _scale_curv(cr, interval_eval(expr.left, boxes)[0])
            if cr == "const":
                return _scale_curv(cl, interval_eval(expr.right, boxes)[0])
            return None
        if cr == "const":
            k = interval_eval(expr.right, boxes)[0]
            if k == 0:
                raise ExprRangeError("division by constant zero")
            return "const" if cl == "const" else _scale_curv(cl, 1.0 / k)
        return None
    if isinstance(expr, Pow):
        cb = curvature(expr.base, boxes)
        n = expr.exp
        if n == 0 or cb == "const":
            return "const"
        if n == 1 or cb is None:
            return cb
        g = _sign(expr.base, boxes)
        if n % 2 == 0:
            if cb == "affine":
                return "convex"
            if (cb == "convex" and g == 1) or (cb == "concave" and g == -1):
                return "convex"
            return None
        if g == 1 and cb in ("affine", "convex"):
            return "convex"
        if g == -1 and cb in ("affine", "concave"):
            return "concave"
        return None
    raise ExprError(f"unknown expression node {expr!r}")


# -- derived ranges ----------------------------------------------------------


@dataclass(frozen=True)
class DerivedRange:
    lo: float
    hi: float
    method: str

    def as_bounds(self) -> RangeBounds:
        return RangeBounds(self.lo, self.hi)


def _eval_point(expr: Expr, point: Mapping[str, float]) -> float:
    return float(expr.evaluate(point))


def _corner_values(expr: Expr, cols: list, boxes) -> np.ndarray:
    grids = [_box(boxes, c) for c in cols]
    corners = np.array(list(itertools.product(*grids)), dtype=float).reshape(-1, len(cols))
    env = {c: corners[:, i] for i, c in enumerate(cols)}
    out = expr.evaluate(env)
    return np.broadcast_to(np.asarray(out, dtype=float), (corners.shape[0],))


def derive_range(expr: Expr, boxes: Mapping) -> DerivedRange:
    cols = sorted(expr.columns())
    for c in cols:
        _box(boxes, c)
    ia_lo, ia_hi = interval_eval(expr, boxes)

    signs = certify_monotone(expr, boxes)
    if signs is not None:
        low_pt = {c: _box(boxes, c)[0 if s >= 0 else 1] for c, s in signs.items()}
        high_pt = {c: _box(boxes, c)[1 if s >= 0 else 0] for c, s in signs.items()}
        return DerivedRange(_eval_point(expr, low_pt), _eval_point(expr, high_pt), "monotone")

    if len(cols) <= MAX_CORNER_COLUMNS:
        curv = curvature(expr, boxes)
        if curv == "convex":
            return DerivedRange(ia_lo, float(_corner_values(expr, cols, boxes).max()), "convex-corner")
        if curv == "concave":
            return DerivedRange(float(_corner_values(expr, cols, boxes).min()), ia_hi, "convex-corner")

    return DerivedRange(ia_lo, ia_hi, "interval-arithmetic")
