"""Exact rational helpers: parsing, formatting and a Gauss-Jordan solver."""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Sequence

from .errors import DegenerateBasis, ParseError

_RATIONAL_RE = re.compile(r"^\s*(-?\d+)(?:\s*/\s*(\d+))?\s*$")


def parse_rational(text, where=None) -> Fraction:
    """Parse ``"p/q"`` or an integer string. Decimal strings are rejected."""
    if not isinstance(text, str):
        raise ParseError(f"expected a rational string like '11/10', got {text!r}", where)
    m = _RATIONAL_RE.match(text)
    if m is None:
        raise ParseError(f"not a rational string: {text!r}", where)
    num = int(m.group(1))
    den = int(m.group(2)) if m.group(2) is not None else 1
    if den == 0:
        raise ParseError(f"zero denominator in {text!r}", where)
    return Fraction(num, den)


def format_rational(value: Fraction) -> str:
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def format_decimal(value) -> str:
    return repr(float(value))


def solve(matrix: Sequence[Sequence[Fraction]], rhs: Sequence[Fraction]) -> list[Fraction]:
    """Solve a square system exactly.

    Raises DegenerateBasis if the matrix is singular.
    """
    n = len(matrix)
    aug = [list(map(Fraction, row)) + [Fraction(b)] for row, b in zip(matrix, rhs)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if pivot is None:
            raise DegenerateBasis(f"singular matrix at column {col}")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        pv = aug[col][col]
        if pv != 1:
            aug[col] = [v / pv for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    return [aug[r][n] for r in range(n)]
