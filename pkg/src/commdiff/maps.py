"""Smooth maps, vector fields, and orientation-preserving interval diffeomorphisms.

A SmoothMap is an expression-tree--defined function on a closed interval with
jet evaluation and *declared* flatness at endpoints.  Infinite tangency is a
structural attribute (the flat(.) primitive and endpoint flags), never a
numerical inference.

Diffeo is the common interface for the various concrete diffeomorphism kinds
the toolkit manipulates: parsed expressions, flow time-t maps, compositions,
powers, inverses, linear blends with the identity, and affine conjugates.
All are immutable and safe for concurrent evaluation.
"""

from __future__ import annotations

import mpmath
from mpmath import mpf

from . import parser
from .jets import Jet, jet_compose, jet_invert
from .parser import Node, parse_expression
from .precision import JET_ORDER_CAP, R


class DomainError(ValueError):
    pass


class InvalidDiffeoError(ValueError):
    pass


FLAT_NONE: frozenset = frozenset()


def _check_domain(domain) -> tuple[mpf, mpf]:
    a, b = R(domain[0]), R(domain[1])
    if not a < b:
        raise DomainError("domain must be a nondegenerate closed interval")
    return a, b


def clamp_to_domain(x, domain) -> mpf:
    """Snap x to the interval, tolerating ulp-level overshoot from composition."""
    x = R(x)
    a, b = domain
    if a <= x <= b:
        return x
    slack = (b - a) * mpf(2) ** (24 - mpmath.mp.prec)
    if a - slack <= x < a:
        return a
    if b < x <= b + slack:
        return b
    raise DomainError(f"{mpmath.nstr(x, 12)} outside domain")


class SmoothMap:
    """Expression-backed smooth function on [a, b].

    declared_flat_at: subset of {"left", "right"}; flat_kind says whether the
    function itself ("zero") or its displacement from the identity
    ("identity") is declared infinitely flat there.
    """

    def __init__(self, expr: Node, domain, declared_flat_at=FLAT_NONE,
                 flat_kind: str = "zero", displacement_expr: Node | None = None):
        self.expr = expr
        self.domain = _check_domain(domain)
        self.declared_flat_at = frozenset(declared_flat_at)
        if self.declared_flat_at - {"left", "right"}:
            raise ValueError("flat declarations must be subset of {left, right}")
        if flat_kind not in ("zero", "identity"):
            raise ValueError("flat_kind must be 'zero' or 'identity'")
        self.flat_kind = flat_kind
        self.displacement_expr = displacement_expr

    # endpoints declared flat, as concrete abscissae
    def _flat_points(self):
        a, b = self.domain
        pts = []
        if "left" in self.declared_flat_at:
            pts.append(a)
        if "right" in self.declared_flat_at:
            pts.append(b)
        return pts

    def contains(self, x) -> bool:
        a, b = self.domain
        return a <= x <= b

    def eval(self, x) -> mpf:
        x = clamp_to_domain(x, self.domain)
        if x in self._flat_points():
            return mpf(0) if self.flat_kind == "zero" else x
        return self.expr.eval(x)

    def eval_jet(self, x, order: int) -> Jet:
        x = clamp_to_domain(x, self.domain)
        if x in self._flat_points():
            if self.flat_kind == "zero":
                return Jet.zero(x, order)
            return Jet.variable(x, order)
        return self.expr.eval_jet(x, order)

    def displacement(self, x) -> mpf:
        """map(x) - x, using the dedicated displacement expression if any."""
        x = R(x)
        if x in self._flat_points() and self.flat_kind == "identity":
            return mpf(0)
        if self.displacement_expr is not None:
            return self.displacement_expr.eval(x)
        return self.eval(x) - x

    def __str__(self):
        return str(self.expr)


def parse_map(source: str, domain, declared_flat_at=FLAT_NONE,
              flat_kind: str = "zero") -> SmoothMap:
    """Parse an expression into a SmoothMap (syntax errors carry a position)."""
    expr = parse_expression(source)
    return SmoothMap(expr, domain, declared_flat_at, flat_kind)


# ---------------------------------------------------------------------------
# vector fields


class VectorField:
    """Interface: a field on an interval, evaluable with jets."""

    domain: tuple[mpf, mpf]
    zero_set_hint: tuple = ()

    def eval(self, x) -> mpf:
        raise NotImplementedError

    def eval_jet(self, x, order: int) -> Jet:
        raise NotImplementedError

    value = eval

    @property
    def declared_flat_at(self):
        return FLAT_NONE

    def barriers(self) -> tuple:
        """Interior points where piecewise analytic branches may switch."""
        return ()

    def local_ast(self, x, direction: int) -> Node | None:
        """Expression valid near x on the side of `direction`; None = black box."""
        return None


class ExprField(VectorField):
    def __init__(self, smooth_map: SmoothMap, zero_set_hint=()):
        self.map = smooth_map
        self.domain = smooth_map.domain
        self.zero_set_hint = tuple(
            (R(z), m) for z, m in zero_set_hint
        )

    def eval(self, x):
        return self.map.eval(x)

    value = eval

    def eval_jet(self, x, order):
        return self.map.eval_jet(x, order)

    @property
    def declared_flat_at(self):
        return self.map.declared_flat_at

    def local_ast(self, x, direction):
        return self.map.expr

    def __str__(self):
        return str(self.map)


class ScaledField(VectorField):
    """c * xi, sharing the base field's structure."""

    def __init__(self, base: VectorField, c):
        self.base = base
        self.c = R(c)
        self.domain = base.domain
        self.zero_set_hint = base.zero_set_hint

    def eval(self, x):
        return self.c * self.base.eval(x)

    value = eval

    def eval_jet(self, x, order):
        return self.base.eval_jet(x, order) * self.c

    @property
    def declared_flat_at(self):
        return self.base.declared_flat_at

    def barriers(self):
        return self.base.barriers()

    def local_ast(self, x, direction):
        ast = self.base.local_ast(x, direction)
        if ast is None:
            return None
        return parser.Bin("*", parser.num(self.c), ast)


# ---------------------------------------------------------------------------
# diffeomorphisms


class Diffeo:
    """Orientation-preserving diffeomorphism of a closed interval."""

    domain: tuple[mpf, mpf]
    # interior points where the map is declared infinitely tangent to id
    declared_flat_interior: tuple = ()

    def eval(self, x) -> mpf:
        raise NotImplementedError

    def eval_jet(self, x, order: int) -> Jet:
        raise NotImplementedError

    def displacement(self, x) -> mpf:
        return self.eval(x) - R(x)

    def inverse(self) -> "Diffeo":
        return InverseDiffeo(self)

    def inverse_value(self, y) -> mpf:
        raise NotImplementedError

    def inverse_jet(self, y, order: int) -> Jet:
        """Jet of f^{-1} at y."""
        y = R(y)
        x = self.inverse_value(y)
        fj = self.eval_jet(x, order)
        inv = jet_invert(fj)
        # anchor exactly at y; the root solve leaves an ulp-level offset
        return Jet(y, inv.coeffs, check=False)

    @property
    def declared_flat_at(self) -> frozenset:
        return FLAT_NONE

    def power_value(self, x, i: int) -> mpf:
        """f^i(x); subclasses may have faster long-time routes."""
        y = R(x)
        if i >= 0:
            for _ in range(i):
                y = self.eval(y)
        else:
            for _ in range(-i):
                y = self.inverse_value(y)
        return y

    def endpoint_check(self, tol=None) -> mpf:
        from .precision import machine_rel_tol

        tol = machine_rel_tol(32) if tol is None else R(tol)
        a, b = self.domain
        err = max(abs(self.eval(a) - a), abs(self.eval(b) - b))
        if err > tol * max(mpf(1), abs(b - a)):
            raise InvalidDiffeoError(f"endpoints not fixed (error {mpmath.nstr(err, 5)})")
        return err

    def orientation_check(self, samples: int = 1024) -> mpf:
        """Sampled minimum of the derivative over the open interval."""
        a, b = self.domain
        lo = mpf(1)
        for j in range(1, samples + 1):
            x = a + (b - a) * j / (samples + 1)
            d = self.eval_jet(x, 1).coeffs[1]
            if d < lo:
                lo = d
            if lo <= 0:
                raise InvalidDiffeoError("derivative not positive on sample grid")
        return lo


class IdentityDiffeo(Diffeo):
    def __init__(self, domain):
        self.domain = _check_domain(domain)

    def eval(self, x):
        return R(x)

    def eval_jet(self, x, order):
        return Jet.variable(R(x), order)

    def displacement(self, x):
        return mpf(0)

    def inverse(self):
        return self

    def inverse_value(self, y):
        return R(y)

    def power_value(self, x, i):
        return R(x)


class ExprDiffeo(Diffeo):
    """Diffeomorphism given by an expression tree (plus optional inverse/displacement)."""

    def __init__(self, smooth_map: SmoothMap, inverse_map: SmoothMap | None = None,
                 check: bool = True, orientation_samples: int = 1024):
        self.map = smooth_map
        self.domain = smooth_map.domain
        self._inverse_map = inverse_map
        if check:
            self.endpoint_check()
            self.orientation_min = self.orientation_check(orientation_samples)
        else:
            self.orientation_min = None

    @property
    def declared_flat_at(self):
        return self.map.declared_flat_at

    def eval(self, x):
        return self.map.eval(x)

    def eval_jet(self, x, order):
        return self.map.eval_jet(x, order)

    def displacement(self, x):
        return self.map.displacement(x)

    def inverse(self):
        if self._inverse_map is not None:
            return ExprDiffeo(self._inverse_map, self.map, check=False)
        return InverseDiffeo(self)

    def inverse_value(self, y):
        if self._inverse_map is not None:
            return self._inverse_map.eval(y)
        return invert_monotone(self.eval, self.domain, R(y))

    def inverse_jet(self, y, order):
        if self._inverse_map is not None:
            return self._inverse_map.eval_jet(R(y), order)
        return super().inverse_jet(y, order)


class ComposeDiffeo(Diffeo):
    """outer ∘ inner."""

    def __init__(self, outer: Diffeo, inner: Diffeo):
        self.outer = outer
        self.inner = inner
        self.domain = inner.domain

    def eval(self, x):
        return self.outer.eval(self.inner.eval(x))

    def eval_jet(self, x, order):
        gj = self.inner.eval_jet(x, order)
        fj = self.outer.eval_jet(gj.value, order)
        return jet_compose(fj, gj)

    def inverse_value(self, y):
        return self.inner.inverse_value(self.outer.inverse_value(y))

    def inverse(self):
        return ComposeDiffeo(self.inner.inverse(), self.outer.inverse())


class PowerDiffeo(Diffeo):
    """h^n for integer n (negative powers via the inverse)."""

    def __init__(self, base: Diffeo, n: int):
        self.base = base
        self.n = n
        self.domain = base.domain

    def eval(self, x):
        return self.base.power_value(x, self.n)

    def eval_jet(self, x, order):
        n = self.n
        if n == 0:
            return Jet.variable(R(x), order)
        y = R(x)
        jet = Jet.variable(y, order)
        for _ in range(abs(n)):
            if n > 0:
                fj = self.base.eval_jet(y, order)
                jet = jet_compose(fj, jet)
                y = jet.value
            else:
                fj = self.base.inverse_jet(y, order)
                jet = jet_compose(fj, jet)
                y = jet.value
        return jet

    def inverse_value(self, y):
        return self.base.power_value(y, -self.n)

    def inverse(self):
        return PowerDiffeo(self.base, -self.n)

    def power_value(self, x, i):
        return self.base.power_value(x, i * self.n)


class InverseDiffeo(Diffeo):
    def __init__(self, base: Diffeo):
        self.base = base
        self.domain = base.domain

    @property
    def declared_flat_at(self):
        return self.base.declared_flat_at

    def eval(self, x):
        return self.base.inverse_value(x)

    def eval_jet(self, x, order):
        return self.base.inverse_jet(x, order)

    def displacement(self, x):
        # f^{-1}(x) - x = -(f(y) - y) at y = f^{-1}(x)
        y = self.base.inverse_value(x)
        return -self.base.displacement(y)

    def inverse(self):
        return self.base

    def inverse_value(self, y):
        return self.base.eval(y)

    def inverse_jet(self, y, order):
        return self.base.eval_jet(y, order)

    def power_value(self, x, i):
        return self.base.power_value(x, -i)


class BlendDiffeo(Diffeo):
    """(1-t)·id + t·h — a diffeomorphism whenever (1-t) + t·Dh > 0."""

    def __init__(self, h: Diffeo, t):
        self.h = h
        self.t = R(t)
        self.domain = h.domain

    def eval(self, x):
        x = R(x)
        return (1 - self.t) * x + self.t * self.h.eval(x)

    def eval_jet(self, x, order):
        x = R(x)
        idj = Jet.variable(x, order)
        return idj * (1 - self.t) + self.h.eval_jet(x, order) * self.t

    def displacement(self, x):
        return self.t * self.h.displacement(x)

    def inverse_value(self, y):
        return invert_monotone(self.eval, self.domain, R(y))


class AffineConjDiffeo(Diffeo):
    """h_b^{-1} ∘ f ∘ h_b with h_b(y) = (1-b)y + b mapping [0,1] -> [b,1]."""

    def __init__(self, base: Diffeo, b):
        self.base = base
        self.b = R(b)
        if not (0 < self.b < 1):
            raise ValueError("affine conjugation parameter must be in (0,1)")
        self.domain = (mpf(0), mpf(1))

    def _hb(self, y):
        return (1 - self.b) * y + self.b

    def _hb_inv(self, z):
        return (z - self.b) / (1 - self.b)

    def eval(self, x):
        return self._hb_inv(self.base.eval(self._hb(R(x))))

    def eval_jet(self, x, order):
        x = R(x)
        z = self._hb(x)
        inner = Jet(x, (z, 1 - self.b) + (mpf(0),) * max(order - 1, 0))
        fj = self.base.eval_jet(z, order)
        out = jet_compose(fj, inner.truncate(order))
        return (out - self.b) / (1 - self.b)

    def displacement(self, x):
        return self.base.displacement(self._hb(R(x))) / (1 - self.b)

    def inverse_value(self, y):
        return self._hb_inv(self.base.inverse_value(self._hb(R(y))))


# ---------------------------------------------------------------------------
# monotone root finding (bracketing bisection + Newton polish)


def invert_monotone(fn, domain, y, *, max_iter: int = 20000) -> mpf:
    """Solve fn(x) = y for increasing fn on domain, to ~4 ulp."""
    a, b = R(domain[0]), R(domain[1])
    fa, fb = fn(a) - y, fn(b) - y
    if fa > 0 or fb < 0:
        if abs(fa) <= mpf(2) ** (8 - mpmath.mp.prec):
            return a
        if abs(fb) <= mpf(2) ** (8 - mpmath.mp.prec):
            return b
        raise DomainError("target outside the map's range")
    lo, hi = a, b
    # bisection until the bracket is tight enough for Newton on secants
    target_width = (b - a) * mpf(2) ** (-mpmath.mp.prec // 2)
    it = 0
    while hi - lo > target_width:
        it += 1
        if it > max_iter:
            raise InvalidDiffeoError("root bracketing did not converge")
        mid = (lo + hi) / 2
        fm = fn(mid) - y
        if fm == 0:
            return mid
        if fm < 0:
            lo = mid
        else:
            hi = mid
    # secant refinement to full precision
    x0, x1 = lo, hi
    f0, f1 = fn(x0) - y, fn(x1) - y
    eps = (b - a) * mpf(2) ** (2 - mpmath.mp.prec)
    for _ in range(80):
        if f1 == f0:
            break
        x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
        if not (lo <= x2 <= hi):
            x2 = (lo + hi) / 2
        f2 = fn(x2) - y
        if f2 == 0 or abs(x2 - x1) <= eps:
            return x2
        if f2 < 0:
            lo = x2
        else:
            hi = x2
        x0, f0, x1, f1 = x1, f1, x2, f2
    return (lo + hi) / 2


def validate_jet_order(order: int, cap: int = JET_ORDER_CAP):
    if order < 0:
        raise ValueError("jet order must be nonnegative")
    if order > cap:
        raise ValueError(f"jet order {order} exceeds cap {cap}")
