"""Index-notation equation language.

An equation assigns a sum of products to a target field::

    dmdt(i) <-   c1 * eps(i, j, k) * m(j) * H(k)
               + c2 * eps(i, j, k) * m(j)
               * eps(k, p, q) * m(p) * H(q)

Grammar (whitespace and newlines are insignificant, ``#`` starts a comment)::

    assign ::= name [ "(" idxlist ")" ] "<-" sum
    sum    ::= ["+" | "-"] term (("+" | "-") term)*
    term   ::= factor ("*" factor)*
    factor ::= number | name | name "(" idxlist ")" | "eps" "(" idx "," idx "," idx ")"

A bare ``name`` is a constant, resolved when the kernel is bound.  Indices
are single letters; every index of a term that is not on the target is
summed over 0..2.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List, Tuple, Union

from .errors import ArityError, DslSyntaxError, RankError, UnusedFreeIndex


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class FieldRef:
    name: str
    indices: Tuple[str, ...] = ()


@dataclass(frozen=True)
class Eps:
    indices: Tuple[str, str, str]


Factor = Union[Const, Num, FieldRef, Eps]


@dataclass(frozen=True)
class Term:
    sign: int
    factors: Tuple[Factor, ...]


@dataclass(frozen=True)
class Equation:
    target: FieldRef
    terms: Tuple[Term, ...]


@dataclass(frozen=True)
class IndexClassification:
    free: Tuple[str, ...]
    bound: Tuple[str, ...]


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+|\#[^\n]*)
  | (?P<nl>\n)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<arrow><-)
  | (?P<op>[-+*(),])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(source: str) -> List[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if not m:
            raise DslSyntaxError(f"unexpected character {source[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind != "ws":
            toks.append(_Tok(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, source):
        self.toks = _tokenize(source)
        self.i = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def error(self, msg, tok=None, cls=DslSyntaxError):
        tok = tok or self.tok
        found = tok.text or "end of input"
        raise cls(f"{msg}, found {found!r}", tok.line, tok.col)

    def accept(self, text):
        if self.tok.text == text and self.tok.kind in ("op", "arrow"):
            self.i += 1
            return True
        return False

    def expect(self, text):
        if not self.accept(text):
            self.error(f"expected {text!r}")

    def name(self):
        if self.tok.kind != "name":
            self.error("expected a name")
        t = self.tok
        self.i += 1
        return t

    def index(self):
        t = self.name()
        if len(t.text) != 1:
            self.error("indices must be single letters", t)
        return t.text

    def idxlist(self):
        self.expect("(")
        idx = [self.index()]
        while self.accept(","):
            idx.append(self.index())
        self.expect(")")
        return tuple(idx)

    def equation(self):
        t = self.name()
        if t.text == "eps":
            self.error("'eps' cannot be an assignment target", t)
        indices = self.idxlist() if self.tok.text == "(" else ()
        if len(set(indices)) != len(indices):
            self.error("target indices must be distinct", t)
        self.expect("<-")
        terms = [self.term(self.sign(optional=True))]
        while self.tok.text in ("+", "-"):
            terms.append(self.term(self.sign()))
        if self.tok.kind != "eof":
            self.error("expected '+', '-', '*' or end of equation")
        return Equation(FieldRef(t.text, indices), tuple(terms))

    def sign(self, optional=False):
        if self.accept("-"):
            return -1
        if not self.accept("+") and not optional:
            self.error("expected '+' or '-'")
        return 1

    def term(self, sign):
        factors = [self.factor()]
        while self.accept("*"):
            factors.append(self.factor())
        return Term(sign, tuple(factors))

    def factor(self):
        t = self.tok
        if t.kind == "number":
            self.i += 1
            return Num(float(t.text))
        name = self.name()
        if self.tok.text != "(":
            if name.text == "eps":
                self.error("'eps' needs three indices", name, ArityError)
            return Const(name.text)
        indices = self.idxlist()
        if name.text == "eps":
            if len(indices) != 3:
                raise ArityError(f"eps takes exactly 3 indices, got {len(indices)}", name.line, name.col)
            return Eps(indices)
        return FieldRef(name.text, indices)


def parse(source: str) -> Equation:
    return _Parser(source).equation()


def _format_factor(f: Factor) -> str:
    if isinstance(f, Num):
        return repr(f.value)
    if isinstance(f, Const):
        return f.name
    if isinstance(f, Eps):
        return "eps(" + ", ".join(f.indices) + ")"
    return f.name + ("(" + ", ".join(f.indices) + ")" if f.indices else "")


def format_equation(eq: Equation) -> str:
    """Render ``eq`` back into DSL source (parse(format(eq)) == eq)."""
    out = [_format_factor(eq.target), "<-"]
    for n, term in enumerate(eq.terms):
        if term.sign < 0:
            out.append("-")
        elif n:
            out.append("+")
        out.append(" * ".join(_format_factor(f) for f in term.factors))
    return " ".join(out)


def _factor_indices(f: Factor) -> Tuple[str, ...]:
    return f.indices if isinstance(f, (FieldRef, Eps)) else ()


def classify_indices(eq: Equation) -> List[IndexClassification]:
    """Split each term's indices into free (on the target) and bound (summed)."""
    if len(eq.target.indices) > 1:
        raise RankError(f"target {eq.target.name!r} has {len(eq.target.indices)} indices; fields have rank <= 1")
    free = eq.target.indices
    result = []
    for n, term in enumerate(eq.terms):
        seen = []
        for f in term.factors:
            if isinstance(f, FieldRef) and len(f.indices) > 1:
                raise RankError(f"{f.name}{f.indices} has rank {len(f.indices)}; fields have rank <= 1")
            for idx in _factor_indices(f):
                if idx not in seen:
                    seen.append(idx)
        for idx in free:
            if idx not in seen:
                raise UnusedFreeIndex(f"free index {idx!r} does not appear in term {n + 1}")
        result.append(IndexClassification(free, tuple(i for i in seen if i not in free)))
    return result
