"""Global working-precision configuration and small numeric helpers.

All real quantities in the toolkit are mpmath binary floats at a global,
configurable precision (default 256 bits of mantissa).  Stored results must
be finite: NaN/inf are raised as errors instead of being propagated.
"""

from __future__ import annotations

from contextlib import contextmanager
from fractions import Fraction

import mpmath
from mpmath import mp, mpf

DEFAULT_PRECISION = 256

# Public jet-order cap for derivative scans and user-facing jet evaluation.
# Internal machinery (flow transport) may exceed it.
JET_ORDER_CAP = 16


class PrecisionError(ArithmeticError):
    """A stored result came out non-finite (overflow/NaN)."""


def set_precision(bits: int) -> None:
    if bits < 2:
        raise ValueError("precision must be at least 2 bits")
    mp.prec = bits


def get_precision() -> int:
    return mp.prec


@contextmanager
def working_precision(bits: int):
    old = mp.prec
    mp.prec = bits
    try:
        yield
    finally:
        mp.prec = old


def R(x) -> mpf:
    """Convert to an mpf at the current precision (Fractions exactly-rounded)."""
    if isinstance(x, mpf):
        return x
    if isinstance(x, Fraction):
        return mpf(x.numerator) / mpf(x.denominator)
    if isinstance(x, str):
        return mpf(x)
    return mpf(x)


def require_finite(x: mpf, what: str = "value") -> mpf:
    if not mpmath.isfinite(x):
        raise PrecisionError(f"non-finite {what}: {x}")
    return x


def to_fraction(x: mpf) -> Fraction:
    """Exact rational value of a binary float."""
    sign, man, exp, _ = mpmath.mpf(x)._mpf_
    fr = Fraction(int(man) if sign == 0 else -int(man))
    return fr * Fraction(2) ** exp


def rel_err(approx, exact) -> mpf:
    """|approx - exact| / max(|exact|, floor); floor guards exact == 0."""
    a, e = R(approx), R(exact)
    denom = abs(e)
    if denom == 0:
        return abs(a)
    return abs(a - e) / denom


def machine_rel_tol(slack_bits: int = 16) -> mpf:
    return mpf(2) ** (slack_bits - mp.prec)


def series_rel_tol() -> mpf:
    """Default stopping tolerance for limit/series iterations: 2^-(prec/2)."""
    return mpf(2) ** (-(mp.prec // 2))


def default_flow_tol() -> mpf:
    """Default local error target for flow integration."""
    return mpf(2) ** (-(mp.prec // 2) - 24)


def nstr30(x) -> str:
    """Decimal rendering at 30 significant digits (CSV contract)."""
    return mpmath.nstr(R(x), 30, strip_zeros=False)


# install the package default once at import
if mp.prec < DEFAULT_PRECISION:
    mp.prec = DEFAULT_PRECISION
