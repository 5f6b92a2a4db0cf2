"""Dimensioned physical quantities over the seven SI base units.

Every physical input to a simulation is a :class:`Quantity`: a float stored
in SI base units together with a :class:`Dimension` (integer exponents of
m, kg, s, A, K, mol, cd).  Arithmetic propagates dimensions, addition checks
them.

>>> SI(100e-9, "m")
Quantity(1e-07 m)
>>> str(SI(6, "m") / SI(2, "s"))
'3 m s^-1'
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

from .errors import DimensionMismatch, DivisionByZero, ParseError, UnknownUnit

BASE_UNITS = ("m", "kg", "s", "A", "K", "mol", "cd")

# derived aliases, expanded to base exponents on input
_ALIASES = {
    "J": (2, 1, -2, 0, 0, 0, 0),
    "N": (1, 1, -2, 0, 0, 0, 0),
    "T": (0, 1, -2, -1, 0, 0, 0),
    "Hz": (0, 0, -1, 0, 0, 0, 0),
}


@dataclass(frozen=True)
class Dimension:
    exponents: tuple = (0,) * 7

    def __post_init__(self):
        exps = tuple(int(e) for e in self.exponents)
        if len(exps) != 7:
            raise ValueError(f"dimension needs 7 exponents, got {len(exps)}")
        object.__setattr__(self, "exponents", exps)

    @property
    def dimensionless(self) -> bool:
        return not any(self.exponents)

    def __mul__(self, other: Dimension) -> Dimension:
        return Dimension(tuple(a + b for a, b in zip(self.exponents, other.exponents)))

    def __truediv__(self, other: Dimension) -> Dimension:
        return Dimension(tuple(a - b for a, b in zip(self.exponents, other.exponents)))

    def __pow__(self, n: int) -> Dimension:
        if isinstance(n, bool) or not isinstance(n, int):
            raise TypeError("dimension exponents must be integers")
        return Dimension(tuple(a * n for a in self.exponents))

    def __str__(self):
        return format_unit(self)

    def __repr__(self):
        return f"Dimension({self.exponents})"


DIMENSIONLESS = Dimension()


def format_unit(dim: Dimension) -> str:
    """Canonical unit product: base order, positive powers before negative."""
    pos, neg = [], []
    for name, e in zip(BASE_UNITS, dim.exponents):
        if e == 0:
            continue
        part = name if e == 1 else f"{name}^{e}"
        (pos if e > 0 else neg).append(part)
    return " ".join(pos + neg)


_TOKEN = re.compile(r"\s*(?:(?P<name>[A-Za-z]+)|(?P<int>[+-]?\d+)|(?P<op>[*/^()]))")


def _tokenize(text):
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r} in unit {text!r}", 1, pos + 1)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    return tokens


class _UnitParser:
    # unit ::= term (("*" | "/" | <space>) term)*
    # term ::= (name | "1" | "(" unit ")") ("^" int)?

    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def _peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, len(self.text))

    def _fail(self, msg):
        raise ParseError(f"{msg} in unit {self.text!r}", 1, self._peek()[2] + 1)

    def parse(self):
        if not self.tokens:
            return DIMENSIONLESS
        dim = self.unit()
        if self.i != len(self.tokens):
            self._fail("trailing input")
        return dim

    def unit(self):
        dim = self.term()
        while True:
            kind, val, _ = self._peek()
            if kind == "op" and val in "*/":
                self.i += 1
                rhs = self.term()
                dim = dim * rhs if val == "*" else dim / rhs
            elif kind == "name" or (kind == "op" and val == "(") or kind == "int":
                dim = dim * self.term()
            else:
                return dim

    def term(self):
        kind, val, _ = self._peek()
        if kind == "name":
            self.i += 1
            if val in BASE_UNITS:
                dim = Dimension(tuple(int(n == val) for n in BASE_UNITS))
            elif val in _ALIASES:
                dim = Dimension(_ALIASES[val])
            else:
                raise UnknownUnit(f"unknown unit {val!r}; known: {', '.join(BASE_UNITS + tuple(_ALIASES))}")
        elif kind == "int" and val == "1":
            self.i += 1
            dim = DIMENSIONLESS
        elif kind == "op" and val == "(":
            self.i += 1
            dim = self.unit()
            if self._peek()[1] != ")":
                self._fail("expected ')'")
            self.i += 1
        else:
            self._fail("expected unit name")
        if self._peek()[1] == "^":
            self.i += 1
            kind, val, _ = self._peek()
            if kind != "int":
                self._fail("expected integer exponent")
            self.i += 1
            dim = dim ** int(val)
        return dim


def parse_unit(text: str) -> Dimension:
    return _UnitParser(text).parse()


def _format_value(value: float) -> str:
    s = repr(float(value))
    return s[:-2] if s.endswith(".0") else s


@dataclass(frozen=True)
class Quantity:
    value: float
    dim: Dimension = DIMENSIONLESS

    def __post_init__(self):
        v = float(self.value)
        if not math.isfinite(v):
            raise ValueError(f"quantity value must be finite, got {self.value!r}")
        object.__setattr__(self, "value", v)

    @property
    def unit(self) -> str:
        return format_unit(self.dim)

    def __mul__(self, other: Union[Quantity, float]) -> Quantity:
        other = _as_quantity(other)
        return Quantity(self.value * other.value, self.dim * other.dim)

    __rmul__ = __mul__

    def __truediv__(self, other: Union[Quantity, float]) -> Quantity:
        other = _as_quantity(other)
        if other.value == 0:
            raise DivisionByZero("quantity division by zero")
        return Quantity(self.value / other.value, self.dim / other.dim)

    def __rtruediv__(self, other: float) -> Quantity:
        return _as_quantity(other) / self

    def __pow__(self, n: int) -> Quantity:
        return Quantity(self.value ** n, self.dim ** n)

    def __add__(self, other: Quantity) -> Quantity:
        other = _as_quantity(other)
        if self.dim != other.dim:
            raise DimensionMismatch(
                f"cannot add {self.dim.exponents} and {other.dim.exponents}"
            )
        return Quantity(self.value + other.value, self.dim)

    __radd__ = __add__

    def __neg__(self) -> Quantity:
        return Quantity(-self.value, self.dim)

    def __sub__(self, other: Quantity) -> Quantity:
        return self + (-_as_quantity(other))

    def __float__(self):
        return self.value

    def in_units(self, unit_expr: str) -> float:
        """Value as a plain float after checking the dimension matches."""
        expected = parse_unit(unit_expr)
        if expected != self.dim:
            raise DimensionMismatch(
                f"expected {unit_expr!r} {expected.exponents}, got {self.dim.exponents}"
            )
        return self.value

    def __str__(self):
        return quantity_format(self)

    def __repr__(self):
        return f"Quantity({quantity_format(self)})"


def _as_quantity(x) -> Quantity:
    if isinstance(x, Quantity):
        return x
    if isinstance(x, (int, float)):
        return Quantity(x)
    raise TypeError(f"cannot combine Quantity with {type(x).__name__}")


def quantity_new(value: float, unit_expr: str = "") -> Quantity:
    return Quantity(value, parse_unit(unit_expr))


SI = quantity_new


def quantity_format(q: Quantity) -> str:
    unit = format_unit(q.dim)
    return f"{_format_value(q.value)} {unit}" if unit else _format_value(q.value)


def parse_quantity(text: str, components: int = 1):
    """Parse ``"<number>... <unit>"``, e.g. ``"8e5 A/m"`` or ``"0 0 1e5 A/m"``.

    Returns a Quantity for one component, otherwise a (values, Dimension) pair.
    """
    parts = text.split()
    try:
        values = [float(tok) for tok in parts[:components]]
    except ValueError:
        values = []
    if len(values) != components:
        raise ParseError(f"expected {components} number(s) before the unit in {text!r}")
    unit = " ".join(parts[components:])
    dim = parse_unit(unit)
    if components == 1:
        return Quantity(values[0], dim)
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite value in {text!r}")
    return tuple(values), dim
