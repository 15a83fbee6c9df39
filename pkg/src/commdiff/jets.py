"""Truncated Taylor (jet) arithmetic over arbitrary-precision reals.

A jet of order K at a base point stores the K+1 Taylor coefficients
c[n] = D^n f(base)/n!.  Coefficients (not raw derivatives) keep the
recurrences overflow-resistant near flat points, where D^n f can be huge
while f - id is tiny.  All operations are pure; jets are immutable.
"""

from __future__ import annotations

import mpmath
from mpmath import mpf

from .precision import R, require_finite


class JetError(ArithmeticError):
    pass


class JetMismatchError(JetError):
    """Binary operation on jets with different base point or order."""


class JetDomainError(JetError):
    """Domain violation: division by zero constant term, log of <= 0, ..."""


def _factorials(n: int) -> list[mpf]:
    out = [mpf(1)]
    for i in range(1, n + 1):
        out.append(out[-1] * i)
    return out


class Jet:
    __slots__ = ("base", "coeffs")

    def __init__(self, base, coeffs, check=True):
        self.base = R(base)
        cs = tuple(R(c) for c in coeffs)
        if not cs:
            raise JetError("jet needs at least the constant coefficient")
        if check:
            for c in cs:
                require_finite(c, "jet coefficient")
        self.coeffs = cs

    # -- constructors ---------------------------------------------------

    @staticmethod
    def constant(value, base, order: int) -> "Jet":
        return Jet(base, (R(value),) + (mpf(0),) * order)

    @staticmethod
    def variable(x, order: int) -> "Jet":
        """Jet of the identity map at x."""
        x = R(x)
        if order == 0:
            return Jet(x, (x,))
        return Jet(x, (x, mpf(1)) + (mpf(0),) * (order - 1))

    identity = variable

    @staticmethod
    def zero(base, order: int) -> "Jet":
        return Jet(base, (mpf(0),) * (order + 1))

    # -- basic accessors -------------------------------------------------

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def value(self) -> mpf:
        return self.coeffs[0]

    def derivative(self, n: int) -> mpf:
        """D^n f(base) = n! * coeffs[n]."""
        if n > self.order:
            raise JetError(f"derivative order {n} exceeds jet order {self.order}")
        return self.coeffs[n] * _factorials(n)[n]

    def derivatives(self) -> list[mpf]:
        facts = _factorials(self.order)
        return [c * facts[n] for n, c in enumerate(self.coeffs)]

    @staticmethod
    def from_derivatives(base, derivs) -> "Jet":
        facts = _factorials(len(derivs) - 1)
        return Jet(base, [R(d) / facts[n] for n, d in enumerate(derivs)])

    def truncate(self, order: int) -> "Jet":
        if order >= self.order:
            return self
        return Jet(self.base, self.coeffs[: order + 1], check=False)

    def derivative_jet(self) -> "Jet":
        """Jet of Df at the same base, one order lower."""
        if self.order == 0:
            raise JetError("cannot differentiate an order-0 jet")
        cs = [self.coeffs[n + 1] * (n + 1) for n in range(self.order)]
        return Jet(self.base, cs, check=False)

    def antiderivative_jet(self, value_at_base) -> "Jet":
        """Jet (one order higher) of the antiderivative with given base value."""
        cs = [R(value_at_base)] + [self.coeffs[n] / (n + 1) for n in range(self.order + 1)]
        return Jet(self.base, cs)

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coeffs)

    def max_abs_coeff(self) -> mpf:
        return max(abs(c) for c in self.coeffs)

    def __repr__(self):
        cs = ", ".join(mpmath.nstr(c, 8) for c in self.coeffs)
        return f"Jet(base={mpmath.nstr(self.base, 8)}, [{cs}])"

    # -- arithmetic -------------------------------------------------------

    def _check_compat(self, other: "Jet"):
        if self.base != other.base:
            raise JetMismatchError("jets have different base points")
        if self.order != other.order:
            raise JetMismatchError("jets have different orders")

    def _lift(self, other):
        if isinstance(other, Jet):
            return other
        return Jet.constant(other, self.base, self.order)

    def __neg__(self):
        return Jet(self.base, [-c for c in self.coeffs], check=False)

    def __add__(self, other):
        other = self._lift(other)
        self._check_compat(other)
        return Jet(self.base, [a + b for a, b in zip(self.coeffs, other.coeffs)])

    __radd__ = __add__

    def __sub__(self, other):
        other = self._lift(other)
        self._check_compat(other)
        return Jet(self.base, [a - b for a, b in zip(self.coeffs, other.coeffs)])

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            c = R(other)
            return Jet(self.base, [a * c for a in self.coeffs])
        self._check_compat(other)
        a, b = self.coeffs, other.coeffs
        n = len(a)
        out = []
        for m in range(n):
            s = mpf(0)
            for k in range(m + 1):
                s += a[k] * b[m - k]
            out.append(s)
        return Jet(self.base, out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            c = R(other)
            if c == 0:
                raise JetDomainError("division by zero scalar")
            return Jet(self.base, [a / c for a in self.coeffs])
        self._check_compat(other)
        a, b = self.coeffs, other.coeffs
        if b[0] == 0:
            raise JetDomainError("division by a jet with zero constant term")
        n = len(a)
        out: list[mpf] = []
        for m in range(n):
            s = a[m]
            for k in range(m):
                s -= out[k] * b[m - k]
            out.append(s / b[0])
        return Jet(self.base, out)

    def __rtruediv__(self, other):
        return self._lift(other) / self

    # -- elementary functions ---------------------------------------------

    def exp(self) -> "Jet":
        a = self.coeffs
        n = len(a)
        out = [mpmath.exp(a[0])]
        for m in range(1, n):
            s = mpf(0)
            for k in range(1, m + 1):
                s += k * a[k] * out[m - k]
            out.append(s / m)
        return Jet(self.base, out)

    def log(self) -> "Jet":
        a = self.coeffs
        if a[0] <= 0:
            raise JetDomainError("log of a jet with non-positive constant term")
        n = len(a)
        out = [mpmath.log(a[0])]
        for m in range(1, n):
            s = m * a[m]
            for k in range(1, m):
                s -= k * out[k] * a[m - k]
            out.append(s / (m * a[0]))
        return Jet(self.base, out)

    def sin_cos(self) -> tuple["Jet", "Jet"]:
        a = self.coeffs
        n = len(a)
        s = [mpmath.sin(a[0])]
        c = [mpmath.cos(a[0])]
        for m in range(1, n):
            ss = mpf(0)
            cc = mpf(0)
            for k in range(1, m + 1):
                ss += k * a[k] * c[m - k]
                cc += k * a[k] * s[m - k]
            s.append(ss / m)
            c.append(-cc / m)
        return Jet(self.base, s), Jet(self.base, c)

    def sin(self) -> "Jet":
        return self.sin_cos()[0]

    def cos(self) -> "Jet":
        return self.sin_cos()[1]

    def power(self, r) -> "Jet":
        """Jet of a(x)^r for real exponent r; needs a positive constant term."""
        a = self.coeffs
        r = R(r)
        if a[0] <= 0:
            raise JetDomainError("power with non-integer exponent needs positive constant term")
        n = len(a)
        out = [a[0] ** r]
        for m in range(1, n):
            s = mpf(0)
            for k in range(1, m + 1):
                s += ((r + 1) * k - m) * a[k] * out[m - k]
            out.append(s / (m * a[0]))
        return Jet(self.base, out)

    def pow_int(self, m: int) -> "Jet":
        """Integer power by repeated multiplication (works with zero constant term)."""
        if m < 0:
            return Jet.constant(1, self.base, self.order) / self.pow_int(-m)
        result = Jet.constant(1, self.base, self.order)
        b = self
        k = m
        while k:
            if k & 1:
                result = result * b
            k >>= 1
            if k:
                b = b * b
        return result


def jet_compose(outer: Jet, inner: Jet) -> Jet:
    """Jet of outer∘inner at inner.base; outer must be expanded at inner's value.

    An ulp-level offset between outer.base and the inner value (from domain
    clamping or root solves) is absorbed by evaluating outer's polynomial at
    the true offset instead of rejecting it.
    """
    delta = inner.coeffs[0] - outer.base
    if delta != 0:
        scale = max(abs(outer.base), abs(inner.coeffs[0]), mpf(1))
        if abs(delta) > scale * mpf(2) ** (48 - mpmath.mp.prec):
            raise JetMismatchError(
                "composition base mismatch: outer jet not expanded at inner value"
            )
    if outer.order != inner.order:
        raise JetMismatchError("composition requires equal orders")
    h = Jet(inner.base, (delta,) + inner.coeffs[1:], check=False)
    res = Jet.constant(outer.coeffs[-1], inner.base, inner.order)
    for j in range(outer.order - 1, -1, -1):
        res = res * h + outer.coeffs[j]
    return res


def _poly_mul_trunc(a: list[mpf], b: list[mpf], n: int) -> list[mpf]:
    out = [mpf(0)] * (n + 1)
    for i, ai in enumerate(a):
        if ai == 0 or i > n:
            continue
        for j, bj in enumerate(b):
            if i + j > n:
                break
            if bj != 0:
                out[i + j] += ai * bj
    return out


def jet_invert(a: Jet) -> Jet:
    """Jet of the local functional inverse: compose(a, jet_invert(a)) = id.

    The result is based at a.value with constant coefficient a.base.
    """
    if a.order < 1 or a.coeffs[1] == 0:
        raise JetDomainError("inversion needs a nonzero linear coefficient")
    K = a.order
    c = a.coeffs
    d: list[mpf] = [mpf(0), 1 / c[1]]
    for n in range(2, K + 1):
        # s^n coefficient of sum_{k>=2} c_k G(s)^k depends on d_1..d_{n-1} only
        g = d + [mpf(0)] * (n + 1 - len(d))
        gpow = g[: n + 1]
        acc = mpf(0)
        for k in range(2, n + 1):
            gpow = _poly_mul_trunc(gpow, g, n)
            acc += c[k] * gpow[n]
        d.append(-acc / c[1])
    return Jet(c[0], [a.base] + d[1:])
