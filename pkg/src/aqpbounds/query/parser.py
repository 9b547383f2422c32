"""Tokenizer and recursive-descent parser for the mini-SQL dialect.

    query  := SELECT sel {"," sel} FROM ident [WHERE atom {AND atom}]
              [GROUP BY ident] [HAVING fn "(" expr ")" cmp number]
    sel    := ident | fn "(" expr ")" | COUNT "(" "*" ")"
    atom   := ident cmp literal
    expr   := arithmetic over idents and numbers with + - * / ^ and parentheses

Every error carries the character span it refers to.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from ..expr import BinOp, Col, Const, Expr, Neg, Pow

FUNCTIONS = ("AVG", "SUM", "COUNT")
KEYWORDS = {"SELECT", "FROM", "WHERE", "AND", "GROUP", "BY", "HAVING"}
COMPARATORS = ("=", "!=", "<", "<=", ">", ">=")


class QuerySyntaxError(ValueError):
    def __init__(self, message: str, span: tuple, text: str = ""):
        self.message = message
        self.span = span
        self.text = text
        super().__init__(self._render())

    def _render(self) -> str:
        s, e = self.span
        out = f"{self.message} at {s}:{e}"
        if self.text:
            out += f"\n  {self.text}\n  {' ' * s}{'^' * max(1, e - s)}"
        return out


@dataclass(frozen=True)
class Token:
    kind: str  # ident, number, string, op, eof
    text: str
    start: int
    end: int

    @property
    def upper(self) -> str:
        return self.text.upper()


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>'[^']*'|"[^"]*")
  | (?P<op><=|>=|!=|<>|[(),*+\-/^=<>])
    """,
    re.VERBOSE,
)


def tokenize(text: str) -> list:
    toks, pos = [], 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise QuerySyntaxError(f"unexpected character {text[pos]!r}", (pos, pos + 1), text)
        kind = m.lastgroup
        if kind != "ws":
            val = m.group()
            if kind == "op" and val == "<>":
                val = "!="
            if kind == "number" and m.end() < len(text) and text[m.end()].isalpha():
                raise QuerySyntaxError(f"malformed literal {text[pos:m.end() + 1]!r}", (pos, m.end() + 1), text)
            toks.append(Token(kind, val, m.start(), m.end()))
        pos = m.end()
    toks.append(Token("eof", "", len(text), len(text)))
    return toks


@dataclass(frozen=True)
class Aggregate:
    fn: str
    expr: Optional[Expr]  # None for COUNT(*)
    span: tuple = field(default=(0, 0), compare=False)

    @property
    def label(self) -> str:
        inner = "*" if self.expr is None else _strip_parens(self.expr.to_sql())
        return f"{self.fn}({inner})"

    def columns(self) -> frozenset:
        return frozenset() if self.expr is None else self.expr.columns()


def _strip_parens(s: str) -> str:
    if s.startswith("(") and s.endswith(")"):
        depth = 0
        for i, ch in enumerate(s):
            depth += ch == "("
            depth -= ch == ")"
            if depth == 0 and i < len(s) - 1:
                return s
        return s[1:-1]
    return s


@dataclass(frozen=True)
class Atom:
    column: str
    op: str
    text: str  # literal as written (strings unquoted)
    number: Optional[float]
    span: tuple = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class HavingClause:
    aggregate: Aggregate
    cmp: str
    value: float


@dataclass(frozen=True)
class Query:
    aggregates: tuple
    table: str
    filters: tuple = ()
    group_by: Optional[str] = None
    having: Optional[HavingClause] = None
    select_columns: tuple = ()
    text: str = field(default="", compare=False)

    def columns(self) -> frozenset:
        cols = set()
        for a in self.aggregates:
            cols |= a.columns()
        cols |= {f.column for f in self.filters}
        if self.group_by:
            cols.add(self.group_by)
        if self.having:
            cols |= self.having.aggregate.columns()
        return frozenset(cols)


class _Parser:
    def __init__(self, text: str, columns=None):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0
        self.columns = None if columns is None else set(columns)

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return QuerySyntaxError(msg, (tok.start, max(tok.end, tok.start + 1)), self.text)

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def accept_kw(self, word) -> bool:
        if self.tok.kind == "ident" and self.tok.upper == word:
            self.i += 1
            return True
        return False

    def expect_kw(self, word):
        if not self.accept_kw(word):
            raise self.error(f"expected {word}")

    def accept_op(self, op) -> bool:
        if self.tok.kind == "op" and self.tok.text == op:
            self.i += 1
            return True
        return False

    def expect_op(self, op):
        if not self.accept_op(op):
            raise self.error(f"expected {op!r}")

    def column(self) -> Token:
        t = self.tok
        if t.kind != "ident" or t.upper in KEYWORDS:
            raise self.error("expected a column name")
        self.i += 1
        if self.columns is not None and t.text not in self.columns:
            raise self.error(f"unknown column {t.text!r}", t)
        return t

    # -- statements --

    def query(self) -> Query:
        if not self.text.strip():
            raise QuerySyntaxError("empty query", (0, 0), self.text)
        self.expect_kw("SELECT")
        aggs, plain = [], []
        while True:
            item = self.select_item()
            (aggs if isinstance(item, Aggregate) else plain).append(item)
            if not self.accept_op(","):
                break
        self.expect_kw("FROM")
        t = self.tok
        if t.kind != "ident" or t.upper in KEYWORDS:
            raise self.error("expected a table name")
        table = self.advance().text
        filters = []
        if self.accept_kw("WHERE"):
            filters.append(self.atom())
            while self.accept_kw("AND"):
                filters.append(self.atom())
        group_by = None
        if self.accept_kw("GROUP"):
            self.expect_kw("BY")
            group_by = self.column().text
        having = None
        if self.accept_kw("HAVING"):
            agg = self.aggregate()
            cmp = self.comparator()
            having = HavingClause(agg, cmp, self.number())
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.text!r}")
        if not aggs:
            raise QuerySyntaxError("query selects no aggregate", (0, len(self.text)), self.text)
        for tok in plain:
            if tok.text != group_by:
                raise QuerySyntaxError(
                    f"column {tok.text!r} must be the GROUP BY column", (tok.start, tok.end), self.text
                )
        return Query(tuple(aggs), table, tuple(filters), group_by, having, tuple(t.text for t in plain), self.text)

    def select_item(self):
        t = self.tok
        nxt = self.toks[self.i + 1]
        if t.kind == "ident" and nxt.kind == "op" and nxt.text == "(":
            return self.aggregate()
        return self.column()

    def aggregate(self) -> Aggregate:
        t = self.tok
        if t.kind != "ident":
            raise self.error("expected an aggregate function")
        fn = t.upper
        if fn not in FUNCTIONS:
            raise self.error(f"unsupported function {t.text!r}")
        self.advance()
        self.expect_op("(")
        if fn == "COUNT":
            if not self.accept_op("*"):
                raise self.error("COUNT takes '*'")
            expr = None
        else:
            expr = self.expr()
        end = self.tok
        self.expect_op(")")
        return Aggregate(fn, expr, (t.start, end.end))

    def comparator(self) -> str:
        t = self.tok
        if t.kind == "op" and t.text in COMPARATORS:
            self.advance()
            return t.text
        raise self.error("expected a comparison operator")

    def number(self) -> float:
        neg = self.accept_op("-")
        t = self.tok
        if t.kind != "number":
            raise self.error("expected a numeric literal")
        self.advance()
        v = float(t.text)
        return -v if neg else v

    def atom(self) -> Atom:
        col = self.column()
        op = self.comparator()
        start = self.tok.start
        if self.tok.kind == "string":
            t = self.advance()
            return Atom(col.text, op, t.text[1:-1], None, (col.start, t.end))
        if self.tok.kind == "ident" and self.tok.upper not in KEYWORDS:
            t = self.advance()
            return Atom(col.text, op, t.text, None, (col.start, t.end))
        v = self.number()
        text = self.text[start : self.toks[self.i - 1].end].replace(" ", "")
        return Atom(col.text, op, text, v, (col.start, self.toks[self.i - 1].end))

    # -- expressions --

    def expr(self) -> Expr:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in ("*", "/"):
            op = self.advance().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.accept_op("-"):
            return Neg(self.unary())
        if self.accept_op("+"):
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.accept_op("^"):
            t = self.tok
            if t.kind != "number" or not re.fullmatch(r"\d+", t.text):
                raise self.error("exponent must be a non-negative integer literal")
            self.advance()
            return Pow(base, int(t.text))
        return base

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "number":
            self.advance()
            return Const(float(t.text))
        if self.accept_op("("):
            e = self.expr()
            self.expect_op(")")
            return e
        if t.kind == "ident" and self.toks[self.i + 1].kind == "op" and self.toks[self.i + 1].text == "(":
            raise self.error(f"unsupported function {t.text!r}")
        if t.kind == "ident" and t.upper not in KEYWORDS:
            return Col(self.column().text)
        raise self.error("expected an expression")


def parse(text: str, columns=None) -> Query:
    """Parse ``text``; when ``columns`` is given, unknown names are errors."""
    return _Parser(text, columns).query()
