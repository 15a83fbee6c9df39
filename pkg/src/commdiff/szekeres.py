"""Szekeres vector fields, translation numbers, pair classification, paths.

The field generating a fixed-point-free diffeomorphism f as its time-1 map is
recovered as a normalized limit of pullbacks of the displacement field
eta_0 = (f - id) d/dx along the contracting iteration direction; its first
derivative has a companion series built from L f^{+-1} = D log D f^{+-1}, and
higher derivatives follow by an induction through the Lie-derivative
recursion, with the integer polynomial families of .polynomials.

Convergence control: iteration stops when the relative change drops below
rel_tol AND the last three changes are non-increasing, capped at k_max steps;
slow cases surface as NonConvergedError diagnostics rather than silent error.
For a diffeomorphism constructed as a flow time-t map the generating field
is the Szekeres field (uniqueness), so such fields can also run in
"generator" mode: exact evaluation, with the series machinery still exposed
for cross-validation.
"""

from __future__ import annotations

import mpmath
from mpmath import mpf

from .analysis import (FixedPointReport, commutation_residual, c0_norm,
                       cheb_grid, fixed_points)
from .flow import FlowDiffeo
from .jets import Jet, jet_compose
from .maps import (BlendDiffeo, ComposeDiffeo, Diffeo, DomainError,
                   IdentityDiffeo, PowerDiffeo, VectorField)
from .polynomials import recursion_polynomials
from .precision import R, series_rel_tol
from .quadrature import tanh_sinh

DEFAULT_K_MAX = 10_000


class NonConvergedError(ArithmeticError):
    def __init__(self, what, k, last_change, x):
        super().__init__(
            f"{what} did not converge by k={k} at x={mpmath.nstr(R(x), 12)} "
            f"(last relative change {mpmath.nstr(last_change, 5)}); "
            f"rel_tol may be too tight for this map in this region"
        )
        self.k = k
        self.last_change = last_change
        self.x = x


class InconsistentTauError(ArithmeticError):
    def __init__(self, taus):
        pretty = ", ".join(mpmath.nstr(t, 15) for t in taus)
        super().__init__(f"translation-time estimates disagree: [{pretty}]")
        self.taus = taus


class PairPreconditionError(ValueError):
    pass


def _tau_from_log_multiplier(ell) -> mpf:
    """log Df(a) / (Df(a) - 1) written stably as ell / expm1(ell)."""
    if ell == 0:
        return mpf(1)
    return ell / mpmath.expm1(ell)


def _log_df_at(f: Diffeo, x) -> mpf:
    if isinstance(f, FlowDiffeo):
        return f.logdf_jet(x, 0).coeffs[0]
    return mpmath.log(f.eval_jet(x, 1).coeffs[1])


class _Orbit:
    """Shared workspace: the contracting orbit of x with unit-step jets.

    y[i] = (f^{-+1})^i(x) marches toward the left end of the component;
    w[i] = D(f^{-+i})(x) accumulates the chain rule along it.
    """

    def __init__(self, field: "SzekeresField", x, jet_order: int):
        self.field = field
        self.f = field.source
        self.x = R(x)
        disp = self.f.displacement(self.x)
        if disp == 0:
            raise ValueError("orbit base point is fixed")
        self.forward = disp < 0  # f moves left: the contracting branch is f itself
        self.jet_order = max(jet_order, 1)
        self.y: list[mpf] = [self.x]
        self.eta: list[mpf] = [disp]
        self.step_jets: list[Jet] = []
        self.w: list[mpf] = [mpf(1)]

    def _step_jet(self, y) -> Jet:
        if self.forward:
            return self.f.eval_jet(y, self.jet_order)
        return self.f.inverse_jet(y, self.jet_order)

    def extend(self, k: int):
        while len(self.y) <= k:
            jet = self._step_jet(self.y[-1])
            self.step_jets.append(jet)
            y_next = jet.value
            self.y.append(y_next)
            self.w.append(self.w[-1] * jet.coeffs[1])
            self.eta.append(self.f.displacement(y_next))

    def ratio(self, k: int) -> mpf:
        """eta_0(y_k) / D(f^{-+k})(x): the pullback of the displacement field."""
        self.extend(k)
        return self.eta[k] / self.w[k]


def _stop_scan(changes, rel_tol) -> bool:
    """relative change below tolerance and a three-term monotone tail."""
    if len(changes) < 3:
        return False
    c1, c2, c3 = changes[-3], changes[-2], changes[-1]
    return c3 < rel_tol and c3 <= c2 <= c1


class SzekeresField(VectorField):
    """Global generating field of a diffeomorphism, per component.

    mode "series": every evaluation runs the pullback limit (the honest
    reconstruction from f alone).  mode "generator": f is known to be the
    time-t map of a concrete field, which by uniqueness *is* the field
    sought; evaluation delegates to it.  mode "auto" picks "generator" when
    available.
    """

    def __init__(self, f: Diffeo, mode: str = "auto", report: FixedPointReport | None = None,
                 k_max: int = DEFAULT_K_MAX, rel_tol=None, resolution: int = 2048):
        self.source = f
        self.domain = f.domain
        self.k_max = int(k_max)
        self.rel_tol = series_rel_tol() if rel_tol is None else R(rel_tol)
        self.generator: VectorField | None = None
        if mode not in ("auto", "series", "generator"):
            raise ValueError("mode must be auto, series or generator")
        gen, gen_t = None, None
        if isinstance(f, FlowDiffeo):
            gen, gen_t = f.field, f.t
        elif getattr(f, "generator_field", None) is not None:
            gen, gen_t = f.generator_field, f.generator_time
        if mode in ("auto", "generator") and gen is not None:
            self.generator = gen if gen_t == 1 else _scaled(gen, gen_t)
            self.mode = "generator"
        else:
            if mode == "generator":
                raise ValueError("no generating field is attached to this map")
            self.mode = "series"
        self.report = report if report is not None else fixed_points(f, resolution)
        self._tau_cache: dict = {}
        self._cache: dict = {}

    # -- component bookkeeping -------------------------------------------

    def component_at(self, x):
        comp = self.report.component_of(x)
        if comp is None:
            raise DomainError(
                f"{mpmath.nstr(R(x), 12)} is not interior to a component of the "
                "complement of the fixed-point set"
            )
        return comp

    def tau_for(self, comp) -> mpf:
        a = comp[0]
        key = a
        if key not in self._tau_cache:
            ell = _log_df_at(self.source, a)
            self._tau_cache[key] = _tau_from_log_multiplier(ell)
        return self._tau_cache[key]

    def log_multiplier(self, comp) -> mpf:
        """log Df at the left end of the component."""
        return _log_df_at(self.source, comp[0])

    # -- evaluation ---------------------------------------------------------

    def eval(self, x):
        x = R(x)
        if self.source.displacement(x) == 0:
            return mpf(0)
        if self.mode == "generator":
            return self.generator.eval(x)
        return self.value_series(x)

    value = eval

    def eval_jet(self, x, order):
        x = R(x)
        if self.mode == "generator":
            return self.generator.eval_jet(x, order)
        if self.source.displacement(x) == 0:
            return Jet.zero(R(x), order)
        return self.jet_by_pullback_limit(x, order)

    @property
    def declared_flat_at(self):
        return self.source.declared_flat_at

    def barriers(self):
        if self.generator is not None:
            return self.generator.barriers()
        return ()

    def local_ast(self, x, direction):
        if self.generator is not None:
            return self.generator.local_ast(x, direction)
        return None

    # -- series forms ------------------------------------------------------

    def value_series(self, x) -> mpf:
        """Normalized pullback limit of the displacement field at x.

        Besides the plain stop rule, the iteration may halt early when the
        *remaining* multiplicative correction is provably below tolerance:
        the log of the tail is bounded by sup |L f^{-+1}| times the distance
        left to the component end, which collapses in flat regions long
        before the per-step changes do.
        """
        x = R(x)
        if self.source.displacement(x) == 0:
            return mpf(0)
        key = ("v", x)
        if key in self._cache:
            return self._cache[key]
        comp = self.component_at(x)
        a = comp[0]
        orbit = _Orbit(self, x, 1)
        prev = orbit.ratio(0)
        changes: list[mpf] = []
        for k in range(1, self.k_max + 1):
            cur = orbit.ratio(k)
            changes.append(abs(cur - prev) / abs(cur))
            prev = cur
            if _stop_scan(changes, self.rel_tol):
                out = self.tau_for(comp) * cur
                self._cache[key] = out
                return out
            if k % 4 == 0 and self._tail_log_bound(orbit, k, a) <= self.rel_tol:
                out = self.tau_for(comp) * cur
                self._cache[key] = out
                return out
        raise NonConvergedError("pullback limit", self.k_max, changes[-1], x)

    def _tail_log_bound(self, orbit: "_Orbit", k: int, a) -> mpf:
        """Sampled bound on |sum of log-ratios| past step k: sup|Lf^{-+1}| * dist."""
        y = orbit.y[k]
        dist = abs(y - a)
        if dist == 0:
            return mpf(0)
        sup = mpf(0)
        for t in (mpf(1), mpf("0.5"), mpf("0.05")):
            u = a + dist * t
            if self.source.displacement(u) == 0:
                continue
            lj = _branch_l_value(self.source, u)
            if abs(lj) > sup:
                sup = abs(lj)
        return sup * dist

    def jet_by_pullback_limit(self, x, order: int) -> Jet:
        """Jet of the field at x by transporting jets along the same limit."""
        x = R(x)
        key = ("j", x, order)
        if key in self._cache:
            return self._cache[key]
        comp = self.component_at(x)
        orbit = _Orbit(self, x, order + 1)
        from .analysis import DisplacementMap

        eta_map = DisplacementMap(self.source)
        chain = Jet.variable(x, order + 1)
        prev = None
        changes: list[mpf] = []
        for k in range(0, self.k_max + 1):
            if k > 0:
                orbit.extend(k)
                chain = jet_compose(orbit.step_jets[k - 1], chain)
            eta_jet = eta_map.eval_jet(chain.value, order)
            num = jet_compose(eta_jet, chain.truncate(order))
            cur = num / chain.derivative_jet()
            if prev is not None:
                scale = max(cur.max_abs_coeff(), prev.max_abs_coeff())
                diff = max(abs(a - b) for a, b in zip(cur.coeffs, prev.coeffs))
                changes.append(diff / scale if scale > 0 else mpf(0))
                if _stop_scan(changes, self.rel_tol):
                    out = cur * self.tau_for(comp)
                    self._cache[key] = out
                    return out
            prev = cur
        raise NonConvergedError("pullback jet limit", self.k_max, changes[-1], x)

    def derivative_series(self, x) -> mpf:
        """First derivative of the field from its companion series."""
        data = self.series_data(x, 1)
        return data.mu[1][0]

    def higher_series(self, x, n: int, return_mu: bool = False):
        """D^n xi(x) through the derivative induction (n >= 2)."""
        if n < 2:
            raise ValueError("higher_series needs n >= 2; use derivative_series")
        data = self.series_data(x, n)
        if return_mu:
            return data.mu[n][0]
        return data.mu[n][0] / data.xi[0] ** (n - 1)

    # series internals

    def _l_jet(self, orbit: _Orbit, i: int) -> Jet:
        """Jet of L f^{-+1} = D^2 f^{-+1} / D f^{-+1} at orbit point i."""
        dj = orbit.step_jets[i].derivative_jet()
        d2j = dj.derivative_jet()
        return d2j / dj.truncate(d2j.order)

    def _l_jet_at(self, u, order: int, moves_left: bool) -> Jet:
        f = self.source
        if moves_left:
            base = f.eval_jet(u, order + 2)
        else:
            base = f.inverse_jet(u, order + 2)
        dj = base.derivative_jet()
        d2j = dj.derivative_jet()
        return d2j / dj.truncate(d2j.order)

    def series_data(self, x, n: int, grid_size: int = 81) -> "SeriesData":
        """Orbit tables mu_m, Phi_m, phi_m (m <= n) by the derivative induction.

        The orbit is marched until the remaining pullback correction is
        certified small (sup |L f^{-+1}| below times the distance left);
        past that point the unit step is the time-one map of the field, so
        the remaining sums become integrals of phi_m/|xi| along the
        component, evaluated spectrally with Euler-Maclaurin junction
        corrections.  A grid-refinement comparison gates the result; slow
        crossover regions surface as NonConvergedError.
        """
        x = R(x)
        comp = self.component_at(x)
        a = comp[0]
        sgn = comp[2]
        c1 = self.log_multiplier(comp)
        tau = self.tau_for(comp)
        moves_left = self.source.displacement(x) < 0  # contracting branch is f

        orbit = _Orbit(self, x, n + 2)
        prev = orbit.ratio(0)
        changes: list[mpf] = []
        K = None
        for k in range(1, self.k_max + 1):
            cur = orbit.ratio(k)
            changes.append(abs(cur - prev) / abs(cur))
            prev = cur
            if _stop_scan(changes, self.rel_tol):
                K = k
                break
            if k % 4 == 0 and self._tail_log_bound(orbit, k, a) <= self.rel_tol:
                K = k
                break
        if K is None:
            raise NonConvergedError(f"derivative series (depth {n})", self.k_max,
                                    changes[-1], x)
        K = max(K, 4)
        orbit.extend(K)
        limit_ratio = orbit.ratio(K)
        l_pref = [self._l_jet(orbit, i) for i in range(K)]
        xi_pref = [tau * orbit.w[i] * limit_ratio for i in range(K)]
        y_top = orbit.y[K]

        coarse = self._tail_tables(a, y_top, n, grid_size, sgn, moves_left)
        fine = self._tail_tables(a, y_top, n, (grid_size * 3) // 2, sgn, moves_left)

        phi = {}
        Phi = {}
        mu = {}
        for m in range(1, n + 1):
            if m == 1:
                terms = [-l_pref[i].coeffs[0] * xi_pref[i] for i in range(K)]
            else:
                Pm, Qm = recursion_polynomials(m)
                terms = []
                for i in range(K):
                    vals = [mu[mm][i] for mm in range(1, m)]
                    acc = mpf(0)
                    xpow = xi_pref[i]
                    for q in range(m):
                        acc += l_pref[i].derivative(q) * xpow * Qm[q].eval(vals)
                        xpow *= xi_pref[i]
                    terms.append(-acc)
            tail_c = coarse["Phi_top"][m]
            tail_f = fine["Phi_top"][m]
            suff = _suffix_sums(terms)
            total_c = (suff[0] if terms else mpf(0)) + tail_c
            total_f = (suff[0] if terms else mpf(0)) + tail_f
            scale = max(abs(total_c), abs(total_f))
            if scale > 0 and abs(total_c - total_f) > scale * mpf("3e-9"):
                raise NonConvergedError(
                    f"derivative series tail (depth {m})", K,
                    abs(total_c - total_f) / scale, x)
            phi[m] = terms
            Phi[m] = [suff[i] + tail_f for i in range(K)] if terms else []
            if m == 1:
                mu[1] = [c1 + Phi[1][i] for i in range(K)]
            else:
                Pm, _ = recursion_polynomials(m)
                mu[m] = [Phi[m][i] - Pm.eval([mu[mm][i] for mm in range(1, m)])
                         for i in range(K)]
        return SeriesData(x, n, c1, orbit.y[:K], xi_pref, phi, Phi, mu,
                          tail_top=y_top, grid=grid_size)

    def _tail_tables(self, a, y_top, n: int, N: int, sgn: int, moves_left: bool):
        """Spectral suffix sums on [a, y_top]: Phi_m at the junction point.

        On the grid, mu_m and Phi_m are carried level by level exactly as on
        the explicit orbit, but the suffix sums are integrals of phi_m/|xi|
        plus the first Euler-Maclaurin corrections.
        """
        from .analysis import cheb_grid

        if y_top == a:
            return {"Phi_top": {m: mpf(0) for m in range(1, n + 1)}}
        nodes = cheb_grid(a, y_top, N)
        c1 = None
        xi_vals = []
        l_jets = []
        for u in nodes:
            if u == a:
                xi_vals.append(mpf(0))
            else:
                xi_vals.append(self.value_series(u))
            l_jets.append(self._l_jet_at(u, max(n - 1, 0), moves_left))
        comp_c1 = self.log_multiplier((a, y_top, sgn))

        fit = _ChebFit(a, y_top)
        Phi_nodes = {}
        mu_nodes = {}
        Phi_top = {}
        for m in range(1, n + 1):
            if m == 1:
                G = [-sgn * lj.coeffs[0] for lj in l_jets]
            else:
                _, Qm = recursion_polynomials(m)
                G = []
                for j, u in enumerate(nodes):
                    vals = [mu_nodes[mm][j] for mm in range(1, m)]
                    acc = mpf(0)
                    xpow = mpf(1)
                    for q in range(m):
                        acc += l_jets[j].derivative(q) * xpow * Qm[q].eval(vals)
                        xpow *= xi_vals[j]
                    G.append(-sgn * acc)
            phi_vals = [G[j] * sgn * xi_vals[j] for j in range(N)]
            prefix = fit.cumulative(G)
            dphi = fit.derivative(phi_vals)
            Phi_m = [prefix[j] + phi_vals[j] / 2 + sgn * xi_vals[j] * dphi[j] / 12
                     for j in range(N)]
            Phi_nodes[m] = Phi_m
            Phi_top[m] = Phi_m[-1]
            if m == 1:
                mu_nodes[1] = [comp_c1 + v for v in Phi_m]
            else:
                Pm, _ = recursion_polynomials(m)
                mu_nodes[m] = [Phi_m[j] - Pm.eval([mu_nodes[mm][j] for mm in range(1, m)])
                               for j in range(N)]
        return {"Phi_top": Phi_top, "nodes": nodes, "xi": xi_vals,
                "mu": mu_nodes, "Phi": Phi_nodes}


class _ChebFit:
    """Spectral calculus on Chebyshev-Lobatto nodal values over [a, b]."""

    def __init__(self, a, b):
        self.a = R(a)
        self.b = R(b)
        self._cos = {}

    def _cos_table(self, N):
        if N not in self._cos:
            self._cos[N] = [[mpmath.cos(mpmath.pi * j * k / (N - 1))
                             for k in range(N)] for j in range(N)]
        return self._cos[N]

    def coefficients(self, vals):
        """Chebyshev coefficients from values at ascending Lobatto nodes."""
        N = len(vals)
        cmat = self._cos_table(N)
        # ascending nodes correspond to theta_j = pi - pi j/(N-1)
        coeffs = []
        for k in range(N):
            s = mpf(0)
            for j in range(N):
                w = mpf(1) if 0 < j < N - 1 else mpf("0.5")
                # T_k at node j (ascending): cos(k(pi - theta'_j)) = (-1)^k cos(k theta'_j)
                s += w * vals[j] * cmat[j][k]
            c = s * 2 / (N - 1) * (mpf(-1)) ** k
            coeffs.append(c)
        coeffs[0] /= 2
        coeffs[-1] /= 2
        return coeffs

    def _values(self, coeffs):
        N = len(coeffs)
        cmat = self._cos_table(N)
        out = []
        for j in range(N):
            s = mpf(0)
            for k in range(N):
                s += coeffs[k] * (mpf(-1)) ** k * cmat[j][k]
            out.append(s)
        return out

    def cumulative(self, vals):
        """Values of int_a^x at the nodes (spectral antiderivative)."""
        N = len(vals)
        c = self.coefficients(vals)  # plain sum: F = sum c_k T_k
        rad = (self.b - self.a) / 2
        B = [mpf(0)] * (N + 1)
        B[1] = c[0] - (c[2] / 2 if N > 2 else mpf(0))
        for m in range(2, N + 1):
            prev = c[m - 1]
            nxt = c[m + 1] if m + 1 < N else mpf(0)
            B[m] = (prev - nxt) / (2 * m)
        # anchor the antiderivative at t = -1 (x = a); T_k(-1) = (-1)^k
        anchor = mpf(0)
        for k in range(1, N + 1):
            anchor += B[k] * (mpf(-1)) ** k
        out = []
        for j in range(N):
            # T_k at ascending node j: (-1)^k cos(pi j k/(N-1))
            s = mpf(0)
            for k in range(1, N + 1):
                s += B[k] * (mpf(-1)) ** k * mpmath.cos(mpmath.pi * j * k / (N - 1))
            out.append((s - anchor) * rad)
        return out

    def derivative(self, vals):
        """Values of d/dx at the nodes."""
        N = len(vals)
        c = self.coefficients(vals)
        d = [mpf(0)] * (N + 1)
        for k in range(N - 1, 0, -1):
            d[k - 1] = (d[k + 1] if k + 1 < N else mpf(0)) + 2 * k * c[k]
        d[0] /= 2
        rad = (self.b - self.a) / 2
        return [v / rad for v in self._values(d[:N])]


class SeriesData:
    """Converged orbit tables for the derivative induction at one point."""

    __slots__ = ("x", "n", "c1", "points", "xi", "phi", "Phi", "mu",
                 "tail_top", "grid")

    def __init__(self, x, n, c1, points, xi, phi, Phi, mu, tail_top=None, grid=None):
        self.x = x
        self.n = n
        self.c1 = c1
        self.points = points
        self.xi = xi
        self.phi = phi   # phi[m][i], series terms along the explicit orbit
        self.Phi = Phi   # Phi[m][i], suffix sums including the spectral tail
        self.mu = mu     # mu[m][i]
        self.tail_top = tail_top
        self.grid = grid


def _branch_l_value(f: Diffeo, u) -> mpf:
    """Value of L f^{-+1} at a non-fixed point u."""
    disp = f.displacement(u)
    if disp < 0:
        j = f.eval_jet(u, 2)
    else:
        j = f.inverse_jet(u, 2)
    return 2 * j.coeffs[2] / j.coeffs[1]


def _suffix_sums(terms):
    out = [mpf(0)] * len(terms)
    acc = mpf(0)
    for i in range(len(terms) - 1, -1, -1):
        acc += terms[i]
        out[i] = acc
    return out


def _scaled(field, t):
    from .maps import ScaledField

    return ScaledField(field, t)


# ---------------------------------------------------------------------------
# operation-level wrappers


def szekeres_field(f: Diffeo, mode: str = "auto", **kw) -> SzekeresField:
    return SzekeresField(f, mode=mode, **kw)


def szekeres_value(field: SzekeresField, x) -> mpf:
    return field.value_series(x)


def szekeres_dvalue(field: SzekeresField, x) -> mpf:
    return field.derivative_series(x)


def szekeres_higher(field: SzekeresField, x, n: int) -> mpf:
    if n == 1:
        return field.derivative_series(x)
    return field.higher_series(x, n)


def pullback(xi, h: Diffeo, x, order: int = 0) -> Jet:
    """Jet of (h^* xi)(x) = xi(h(x)) / Dh(x)."""
    x = R(x)
    hj = h.eval_jet(x, order + 1)
    xij = xi.eval_jet(hj.value, order)
    num = jet_compose(xij, hj.truncate(order))
    return num / hj.derivative_jet()


def translation_time(field, x, y, tol=None) -> mpf:
    """Time tau with flow(field, tau, x) = y: integral of 1/field over [x, y]."""
    x, y = R(x), R(y)
    if x == y:
        return mpf(0)
    if y < x:
        return -translation_time(field, y, x, tol)
    vx, vy = field.eval(x), field.eval(y)
    if vx == 0 or vy == 0 or mpmath.sign(vx) != mpmath.sign(vy):
        raise DomainError("integration endpoints must lie in one component of the field")
    val, _err, _n = tanh_sinh(lambda u: 1 / field.eval(u), x, y, tol=tol)
    return val


# ---------------------------------------------------------------------------
# classification


class PairClassification:
    """Verdict on a commuting pair.

    variant: IDENTITY | CYCLIC | FLOW | DEGENERATE
    CYCLIC carries (h, p, q) with h^q ~ f and h^p ~ g;
    FLOW carries (field, alpha) with g ~ time-alpha of the field;
    DEGENERATE carries an interior common flat fixed point.
    """

    def __init__(self, variant: str, *, h=None, p=None, q=None, r=None, s=None,
                 field=None, alpha=None, witness=None, diagnostics=None):
        self.variant = variant
        self.h = h
        self.p = p
        self.q = q
        self.r = r
        self.s = s
        self.field = field
        self.alpha = alpha
        self.witness = witness
        self.diagnostics = dict(diagnostics or {})

    def record_line(self) -> str:
        d = self.diagnostics
        fields = [f"variant={self.variant}"]
        if self.variant == "CYCLIC":
            fields += [f"p={self.p}", f"q={self.q}", f"r={self.r}", f"s={self.s}"]
        if self.variant == "FLOW":
            fields.append(f"alpha={mpmath.nstr(self.alpha, 30)}")
        if self.variant == "DEGENERATE":
            fields.append(f"witness={mpmath.nstr(self.witness, 30)}")
        for key in sorted(d):
            fields.append(f"{key}={d[key]}")
        return ";".join(fields)

    def __repr__(self):
        return f"PairClassification({self.record_line()})"


def continued_fraction_convergents(x, q_max: int):
    """Convergents p/q of x with q <= q_max (signed x allowed)."""
    x = R(x)
    out = []
    p0, q0, p1, q1 = 1, 0, int(mpmath.floor(x)), 1
    out.append((p1, q1))
    frac = x - mpmath.floor(x)
    for _ in range(64):
        if frac == 0:
            break
        x = 1 / frac
        a = int(mpmath.floor(x))
        frac = x - a
        p0, q0, p1, q1 = p1, q1, a * p1 + p0, a * q1 + q0
        if q1 > q_max:
            break
        out.append((p1, q1))
    return out


def _bezout(a: int, b: int):
    """(g, u, v) with u*a + v*b = g."""
    old_r, r = a, b
    old_u, u = 1, 0
    old_v, v = 0, 1
    while r:
        qt = old_r // r
        old_r, r = r, old_r - qt * r
        old_u, u = u, old_u - qt * u
        old_v, v = v, old_v - qt * v
    if old_r < 0:
        return -old_r, -old_u, -old_v
    return old_r, old_u, old_v


def _is_identity(f: Diffeo, samples: int = 65) -> bool:
    a, b = f.domain
    tol = mpf(2) ** (40 - mpmath.mp.prec)
    for x in cheb_grid(a, b, samples):
        if abs(f.displacement(x)) > tol * max(mpf(1), abs(x)):
            return False
    return True


def classify_pair(f: Diffeo, g: Diffeo, tol, *, rational_tol=None, q_max: int = 64,
                  samples_per_component: int = 2, mode: str = "auto",
                  residual_samples: int = 65, k_max: int = DEFAULT_K_MAX,
                  rel_tol=None) -> PairClassification:
    """Identity / cyclic / flow / degenerate trichotomy for a commuting pair."""
    tol = R(tol)
    rational_tol = mpf("1e-9") if rational_tol is None else R(rational_tol)
    residual = commutation_residual(f, g, 0, f.domain, samples=residual_samples)
    diag = {"commutation_residual": mpmath.nstr(residual, 8),
            "residual_grid": residual_samples}
    if residual > tol:
        raise PairPreconditionError(
            f"pair does not commute within {mpmath.nstr(tol, 5)} "
            f"(residual {mpmath.nstr(residual, 5)})"
        )

    f_id = _is_identity(f)
    g_id = _is_identity(g)
    if f_id and g_id:
        return PairClassification("IDENTITY", diagnostics=diag)
    if f_id:
        return PairClassification("CYCLIC", h=g, p=1, q=0, r=0, s=1, diagnostics=diag)
    if g_id:
        return PairClassification("CYCLIC", h=f, p=0, q=1, r=1, s=0, diagnostics=diag)

    rep_f = fixed_points(f)
    rep_g = fixed_points(g)
    a_dom, b_dom = f.domain
    for loc, contact in rep_f.points:
        if contact == "FLAT" and a_dom < loc < b_dom:
            for loc_g, contact_g in rep_g.points:
                if contact_g == "FLAT" and abs(loc_g - loc) <= mpf(2) ** (-mpmath.mp.prec // 2):
                    return PairClassification("DEGENERATE", witness=loc, diagnostics=diag)

    field = SzekeresField(f, mode=mode, report=rep_f, k_max=k_max, rel_tol=rel_tol)
    taus = []
    offsets = (mpf("0.37"), mpf("0.61"))
    for comp in rep_f.components:
        a, b, _sign = comp
        for t_off in offsets[:samples_per_component]:
            x = a + (b - a) * t_off
            y = g.eval(x)
            if y == x:
                taus.append(mpf(0))
            else:
                taus.append(translation_time(field, x, y))
    spread = max(taus) - min(taus)
    diag["tau_samples"] = len(taus)
    diag["tau_spread"] = mpmath.nstr(spread, 8)
    if spread > tol * max(mpf(1), abs(taus[0])):
        raise InconsistentTauError(taus)
    tau = sum(taus) / len(taus)
    diag["tau"] = mpmath.nstr(tau, 30)

    if abs(tau) <= rational_tol:
        return PairClassification("CYCLIC", h=f, p=0, q=1, r=1, s=0, diagnostics=diag)
    for p, q in continued_fraction_convergents(tau, q_max):
        if q < 1:
            continue
        if abs(tau - mpf(p) / q) < rational_tol:
            from math import gcd

            if gcd(abs(p), q) != 1:
                continue
            _g, r, s = _bezout(q, p)
            # r*q + s*p = 1
            h = _compose_power(f, r, g, s)
            diag["rational"] = f"{p}/{q}"
            return PairClassification("CYCLIC", h=h, p=p, q=q, r=r, s=s,
                                      field=field, diagnostics=diag)
    return PairClassification("FLOW", field=field, alpha=tau, diagnostics=diag)


def _compose_power(f: Diffeo, r: int, g: Diffeo, s: int) -> Diffeo:
    """f^r ∘ g^s."""
    left = PowerDiffeo(f, r) if r != 0 else None
    right = PowerDiffeo(g, s) if s != 0 else None
    if left is None and right is None:
        return IdentityDiffeo(f.domain)
    if left is None:
        return right
    if right is None:
        return left
    return ComposeDiffeo(left, right)


def path_to_identity(c: PairClassification, t) -> tuple[Diffeo, Diffeo]:
    """Point at parameter t of a commuting path from (id, id) to the pair."""
    t = R(t)
    if not (0 <= t <= 1):
        raise ValueError("path parameter must lie in [0, 1]")
    if c.variant == "IDENTITY":
        dom = (mpf(0), mpf(1))
        return IdentityDiffeo(dom), IdentityDiffeo(dom)
    if c.variant == "CYCLIC":
        h_t = BlendDiffeo(c.h, t) if t != 1 else c.h
        if t == 0:
            ident = IdentityDiffeo(c.h.domain)
            return ident, ident
        return PowerDiffeo(h_t, c.q), PowerDiffeo(h_t, c.p)
    if c.variant == "FLOW":
        return (FlowDiffeo(c.field, t), FlowDiffeo(c.field, t * c.alpha))
    raise ValueError("degenerate pairs admit no canonical commuting path here")
