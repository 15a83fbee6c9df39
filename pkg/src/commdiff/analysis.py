"""Sampled C^k norms, fixed-point reports, iteration and commutation checks.

Norms here are sampled suprema over Chebyshev-distributed grids, not rigorous
bounds; every report records the grid it used.
"""

from __future__ import annotations

import mpmath
from mpmath import mpf

from .flow import FlowDiffeo
from .jets import Jet, jet_compose
from .maps import Diffeo, DomainError
from .precision import JET_ORDER_CAP, R


def cheb_grid(a, b, n: int) -> list[mpf]:
    """Chebyshev-Lobatto points on [a, b] (endpoints included), increasing."""
    a, b = R(a), R(b)
    if n < 2:
        return [(a + b) / 2]
    mid, rad = (a + b) / 2, (b - a) / 2
    return [mid - rad * mpmath.cos(mpmath.pi * j / (n - 1)) for j in range(n)]


def interior_cheb_grid(a, b, n: int) -> list[mpf]:
    """Chebyshev points of the first kind (endpoints excluded)."""
    a, b = R(a), R(b)
    mid, rad = (a + b) / 2, (b - a) / 2
    return [mid - rad * mpmath.cos(mpmath.pi * (2 * j + 1) / (2 * n)) for j in range(n)]


# ---------------------------------------------------------------------------
# jet-evaluable adapters


class MapCompose:
    """outer ∘ inner as a jet-evaluable."""

    def __init__(self, outer, inner):
        self.outer = outer
        self.inner = inner
        self.domain = inner.domain

    def eval(self, x):
        return self.outer.eval(self.inner.eval(x))

    def eval_jet(self, x, order):
        gj = self.inner.eval_jet(x, order)
        fj = self.outer.eval_jet(gj.value, order)
        return jet_compose(fj, gj)


class MapDiff:
    """a - b as a jet-evaluable."""

    def __init__(self, a, b):
        self.a = a
        self.b = b
        self.domain = a.domain

    def eval(self, x):
        return self.a.eval(x) - self.b.eval(x)

    def eval_jet(self, x, order):
        return self.a.eval_jet(x, order) - self.b.eval_jet(x, order)


class DisplacementMap:
    """f - id with cancellation-aware jets (tiny displacements stay accurate)."""

    def __init__(self, f: Diffeo):
        self.f = f
        self.domain = f.domain

    def eval(self, x):
        return self.f.displacement(x)

    def eval_jet(self, x, order):
        x = R(x)
        if isinstance(self.f, FlowDiffeo) and order >= 1:
            from .flow import integrate_flow

            res = integrate_flow(self.f.field, x, self.f.t, jet_order=order,
                                 with_logdf=True, tol=self.f.tol)
            coeffs = list(res.jet.coeffs)
            coeffs[0] = res.displacement
            coeffs[1] = mpmath.expm1(res.logdf.coeffs[0])
            return Jet(x, coeffs, check=False)
        j = self.f.eval_jet(x, order)
        coeffs = list(j.coeffs)
        coeffs[0] = self.f.displacement(x)
        if order >= 1:
            coeffs[1] = coeffs[1] - 1
        return Jet(x, coeffs, check=False)


# ---------------------------------------------------------------------------
# C^k norms


def ck_norm(m, k: int, J=None, samples: int = 129) -> mpf:
    """Sampled sup over a Chebyshev grid of |D^i m| for 0 <= i <= k."""
    if samples < 16:
        raise ValueError("need at least 16 samples")
    a, b = J if J is not None else m.domain
    a, b = R(a), R(b)
    best = mpf(0)
    for x in cheb_grid(a, b, samples):
        jet = m.eval_jet(x, k)
        for n, d in enumerate(jet.derivatives()):
            if abs(d) > best:
                best = abs(d)
    return best


def c0_norm(m, J=None, samples: int = 129) -> mpf:
    a, b = J if J is not None else m.domain
    best = mpf(0)
    for x in cheb_grid(R(a), R(b), samples):
        v = abs(m.eval(x))
        if v > best:
            best = v
    return best


def ck_dist(f, g, k: int, J=None, samples: int = 129) -> mpf:
    return ck_norm(MapDiff(f, g), k, J if J is not None else f.domain, samples)


def commutation_residual(f: Diffeo, g: Diffeo, k: int, J=None, samples: int = 129) -> mpf:
    """C^k norm of f∘g - g∘f over J."""
    fg = MapCompose(f, g)
    gf = MapCompose(g, f)
    return ck_norm(MapDiff(fg, gf), k, J if J is not None else f.domain, samples)


# ---------------------------------------------------------------------------
# iteration


def iterate(f: Diffeo, x, i: int, mode: str = "plain") -> mpf:
    """f^i(x); mode "plus" takes max(f^i, f^-i), "minus" the min."""
    x = R(x)
    if mode == "plain":
        return f.power_value(x, i)
    fwd = f.power_value(x, i)
    bwd = f.power_value(x, -i)
    if mode == "plus":
        return max(fwd, bwd)
    if mode == "minus":
        return min(fwd, bwd)
    raise ValueError(f"unknown iteration mode {mode!r}")


def invert_at(f: Diffeo, y) -> mpf:
    return f.inverse_value(R(y))


# ---------------------------------------------------------------------------
# fixed points


class FixedPointReport:
    """Zeros of f - id with contact orders, and the complementary components."""

    def __init__(self, points, components, low_confidence: bool, resolution: int):
        self.points = points          # list of (location, contact) ; contact int or "FLAT"
        self.components = components  # list of (a, b, sign)
        self.low_confidence = low_confidence
        self.resolution = resolution

    def component_of(self, x):
        x = R(x)
        for a, b, s in self.components:
            if a < x < b:
                return (a, b, s)
        return None

    def is_fixed(self, x) -> bool:
        x = R(x)
        return any(loc == x for loc, _ in self.points)

    def __repr__(self):
        pts = ", ".join(
            f"({mpmath.nstr(p, 8)}, {c})" for p, c in self.points
        )
        return (f"FixedPointReport(points=[{pts}], {len(self.components)} components, "
                f"low_confidence={self.low_confidence})")


def _displacement_fn(f: Diffeo):
    if isinstance(f, FlowDiffeo):
        # zeros of f - id are exactly the zeros of the generating field
        return f.field.eval
    return f.displacement


def _contact_jet(f: Diffeo, z, order):
    if isinstance(f, FlowDiffeo):
        # f - id vanishes to exactly the order of the field's zero
        return f.field.eval_jet(z, order)
    return DisplacementMap(f).eval_jet(z, order)


def _contact_order(f: Diffeo, z, declared_flat_here: bool):
    jet = _contact_jet(f, z, JET_ORDER_CAP)
    scale = jet.max_abs_coeff()
    if scale == 0:
        return "FLAT"
    floor = scale * mpf(2) ** (48 - mpmath.mp.prec)
    for n, c in enumerate(jet.coeffs):
        if abs(c) > floor:
            return n
    return "FLAT" if declared_flat_here else "UNRESOLVED"


def fixed_points(f: Diffeo, resolution: int = 2048) -> FixedPointReport:
    """Locate zeros of f - id by sign scanning plus bisection refinement.

    Zeros closer than the adaptive grid floor are merged and the report is
    flagged low-confidence (zeros may accumulate, e.g. toward a flat end).
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    a, b = f.domain
    disp = _displacement_fn(f)
    floor = (b - a) * mpf(2) ** (-(mpmath.mp.prec // 2))

    xs = [a + (b - a) * j / resolution for j in range(resolution + 1)]
    vals = [disp(x) for x in xs]

    if all(v == 0 for v in vals):
        # identity on the sampled grid: degenerate report, whole domain fixed
        return FixedPointReport([(a, "FLAT"), (b, "FLAT")], [], True, resolution)

    zeros: list[mpf] = []
    low_conf = False
    for j in range(resolution):
        v0, v1 = vals[j], vals[j + 1]
        if v0 == 0:
            zeros.append(xs[j])
            continue
        if v0 * v1 < 0:
            lo, hi = xs[j], xs[j + 1]
            while hi - lo > floor / 4:
                mid = (lo + hi) / 2
                vm = disp(mid)
                if vm == 0:
                    lo = hi = mid
                    break
                if (vm > 0) == (v0 > 0):
                    lo = mid
                else:
                    hi = mid
            zeros.append((lo + hi) / 2)
    if vals[-1] == 0:
        zeros.append(xs[-1])

    # even-order zeros touch without a sign change: refine dips of |f - id|
    # and accept them only when the jet's constant term vanishes to jet
    # resolution (first significant coefficient at index >= 1)
    for j in range(1, resolution):
        v = abs(vals[j])
        if v == 0 or vals[j - 1] == 0 or vals[j + 1] == 0:
            continue
        if v <= abs(vals[j - 1]) and v <= abs(vals[j + 1]) and \
                v < min(abs(vals[j - 1]), abs(vals[j + 1])) / 4:
            z = _refine_dip(disp, xs[j - 1], xs[j + 1])
            jet = _contact_jet(f, z, JET_ORDER_CAP)
            scale = jet.max_abs_coeff()
            if scale == 0:
                zeros.append(z)
                continue
            jfloor = scale * mpf(2) ** (48 - mpmath.mp.prec)
            if abs(jet.coeffs[0]) <= jfloor and any(
                    abs(c) > jfloor for c in jet.coeffs[1:]):
                zeros.append(z)
    zeros.sort()

    # endpoints are always fixed for an interval diffeomorphism
    if not zeros or zeros[0] != a:
        zeros.insert(0, a)
    if zeros[-1] != b:
        zeros.append(b)

    # merge zeros below the grid floor
    merged: list[mpf] = [zeros[0]]
    for z in zeros[1:]:
        if z - merged[-1] <= floor:
            low_conf = True
            continue
        merged.append(z)

    flats = f.declared_flat_at
    points = []
    for z in merged:
        declared = (z == a and "left" in flats) or (z == b and "right" in flats) or (
            z in f.declared_flat_interior
        )
        points.append((z, "FLAT" if declared else _contact_order(f, z, declared)))

    components = []
    for (z0, _), (z1, _) in zip(points, points[1:]):
        probe = [z0 + (z1 - z0) * t for t in (mpf("0.29"), mpf("0.5"), mpf("0.71"))]
        signs = [mpmath.sign(disp(x)) for x in probe]
        s = signs[1]
        if any(si != s or si == 0 for si in signs):
            low_conf = True
        components.append((z0, z1, int(s)))

    return FixedPointReport(points, components, low_conf, resolution)
