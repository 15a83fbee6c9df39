"""Empirical verification of the derivative estimates near a flat endpoint.

Each check walks a geometric sequence of abscissae toward 0, measures the
quantities of one estimate, and grades the run (bounds hold / exponents meet
their target with a fixed slack).  These are sampled verdicts over recorded
grids, not proofs; negative controls (a deliberately stricter exponent)
must fail, which the acceptance suite exercises.
"""

from __future__ import annotations

import mpmath
from mpmath import mpf

from .analysis import cheb_grid
from .flow import FlowDiffeo
from .jets import Jet
from .maps import Diffeo, SmoothMap
from .polynomials import recursion_polynomials
from .precision import R, nstr30
from .szekeres import SzekeresField

EXPONENT_SLACK = mpf("0.2")


class EstimateReport:
    def __init__(self, lemma_id: str, columns, rows, verdict: bool, meta=None):
        self.lemma_id = lemma_id
        self.columns = list(columns)
        self.rows = [list(r) for r in rows]
        self.verdict = verdict
        self.meta = dict(meta or {})

    def as_csv(self) -> str:
        out = [",".join(self.columns)]
        for row in self.rows:
            out.append(",".join(_cell(v) for v in row))
        return "\n".join(out) + "\n"

    def summary_line(self) -> str:
        extra = "".join(f" {k}={v}" for k, v in sorted(self.meta.items()))
        return f"{self.lemma_id}: {'PASS' if self.verdict else 'FAIL'}{extra}"

    def column(self, name):
        i = self.columns.index(name)
        return [row[i] for row in self.rows]

    def __repr__(self):
        return f"EstimateReport({self.summary_line()})"


def _cell(v):
    if isinstance(v, (int, bool)):
        return str(v)
    if isinstance(v, str):
        return v
    return nstr30(v)


def default_abscissae(j_max: int = 10, base=mpf("0.2")):
    base = R(base)
    return [base * mpf(2) ** (-j) for j in range(j_max + 1)]


def _df0_is_one(f: Diffeo) -> bool:
    if isinstance(f, FlowDiffeo):
        return f.logdf_jet(f.domain[0], 0).coeffs[0] == 0
    d = f.eval_jet(f.domain[0], 1).coeffs[1]
    return abs(d - 1) <= mpf(2) ** (40 - mpmath.mp.prec)


def _d2f0_is_zero(f: Diffeo) -> bool:
    j = f.eval_jet(f.domain[0], 2)
    scale = max(mpf(1), j.max_abs_coeff())
    return abs(j.coeffs[2]) <= scale * mpf(2) ** (40 - mpmath.mp.prec)


def _sup_displacement(f: Diffeo, x, samples: int = 33) -> mpf:
    """||f - id||_{0,[0,x]} sampled."""
    best = mpf(0)
    for u in cheb_grid(0, x, max(samples, 16)):
        v = abs(f.displacement(u))
        if v > best:
            best = v
    return best


def _contracting_branch_l_jet(f: Diffeo, x, order: int) -> Jet:
    """Jet of L f^{-+1} at x (the branch moving toward the left end)."""
    disp = f.displacement(x)
    if disp == 0:
        raise ValueError("L-branch undefined at a fixed point")
    if disp < 0:
        j = f.eval_jet(x, order + 2)
    else:
        j = f.inverse_jet(x, order + 2)
    dj = j.derivative_jet()
    d2j = dj.derivative_jet()
    return d2j / dj.truncate(d2j.order)


# ---------------------------------------------------------------------------
# pointwise derivative data


def mu_phi_values(f: Diffeo, xi, n: int, x):
    """(mu_n, Phi_n, phi_n) at x from jets, plus a recursion cross-check.

    mu_n = xi^{n-1} D^n xi;  Phi_n iterates the Lie derivative on D xi;
    phi_n comes from the closed form with the integer polynomial families.
    The returned dict also carries the relative residual of
    mu_{n+1} = L mu_n - (n-1) mu_1 mu_n evaluated one order up.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    x = R(x)
    depth = 2 * n + 4
    xij = xi.eval_jet(x, depth)
    xival = xij.coeffs[0]

    def mu_jet(m: int) -> Jet:
        # jet of xi^{m-1} D^m xi at reduced order
        dm = xij
        for _ in range(m):
            dm = dm.derivative_jet()
        out = dm
        pw = xij.truncate(dm.order)
        for _ in range(m - 1):
            out = out * pw
        return out

    def lie(jet: Jet) -> Jet:
        d = jet.derivative_jet()
        return d * xij.truncate(d.order)

    mu_vals = [None] + [mu_jet(m).coeffs[0] for m in range(1, n + 2)]
    phi_jet = xij.derivative_jet()
    for _ in range(n - 1):
        phi_jet = lie(phi_jet)
    Phi_n = phi_jet.coeffs[0]

    P, Qs = recursion_polynomials(n)
    lj = _contracting_branch_l_jet(f, x, max(n - 1, 0))
    acc = mpf(0)
    xpow = xival
    vals = [mu_vals[m] for m in range(1, n)]
    for q in range(n):
        acc += lj.derivative(q) * xpow * Qs[q].eval(vals)
        xpow *= xival
    phi_n = -acc

    # relation check one order up: mu_{n+1} = L mu_n - (n-1) mu_1 mu_n
    lhs = mu_vals[n + 1]
    rhs = lie(mu_jet(n)).coeffs[0] - (n - 1) * mu_vals[1] * mu_vals[n]
    scale = max(abs(lhs), abs(rhs))
    residual = abs(lhs - rhs) / scale if scale > 0 else mpf(0)

    # Lemma-form identity at this point: mu_n = Phi_n - P_n(mu_1..mu_{n-1})
    pn = P.eval(vals) if n >= 2 else 0
    identity_resid = abs(mu_vals[n] - (Phi_n - pn))
    iscale = max(abs(mu_vals[n]), abs(Phi_n), abs(pn))
    if iscale > 0:
        identity_resid = identity_resid / iscale

    return {
        "mu_n": mu_vals[n],
        "Phi_n": Phi_n,
        "phi_n": phi_n,
        "mu_chain": mu_vals,
        "recursion_residual": residual,
        "identity_residual": identity_resid,
        "xi": xival,
    }


# ---------------------------------------------------------------------------
# the lemma checks


def check_ratio_lemma(f: Diffeo, xs=None, samples: int = 256) -> EstimateReport:
    """sup over [x, f^{+-2}(x)] of |(f(y)-y)/(f(x)-x) - 1|, per abscissa."""
    if not _df0_is_one(f):
        raise ValueError("ratio lemma needs Df = 1 at the left endpoint")
    xs = default_abscissae() if xs is None else [R(x) for x in xs]
    rows = []
    values = []
    from .smoothing import iterate_signed

    for x in xs:
        dx = f.displacement(x)
        if dx == 0:
            raise ValueError(f"abscissa {mpmath.nstr(x, 8)} is a fixed point")
        hi = iterate_signed(f, x, 2, +1)
        sup = mpf(0)
        for y in cheb_grid(x, hi, samples):
            r = abs(f.displacement(y) / dx - 1)
            if r > sup:
                sup = r
        rows.append([x, sup])
        values.append(sup)
    noise = mpf("1e-6")
    tail = values[len(values) // 2:]
    monotone = all(b <= a + noise for a, b in zip(tail, tail[1:]))
    verdict = values[-1] < mpf("0.5") and monotone
    return EstimateReport("displacement-ratio", ["x", "sup_ratio"], rows, verdict,
                          {"grid": samples, "final": mpmath.nstr(values[-1], 8)})


def check_equivalence_lemma(f: Diffeo, xi, xs=None,
                            norm_samples: int = 33) -> EstimateReport:
    """log |xi/(f-id)| against its three-factor bound, per abscissa."""
    xs = default_abscissae() if xs is None else [R(x) for x in xs]
    rows = []
    ok = True
    finals = []
    for x in xs:
        dx = f.displacement(x)
        if dx == 0:
            raise ValueError(f"abscissa {mpmath.nstr(x, 8)} is a fixed point")
        ratio = xi.eval(x) / dx
        measured = abs(mpmath.log(abs(ratio)))
        cx = _sup_log_df(f, x, norm_samples)
        mx = _m_bound(cx)
        lnorm = _sup_l_branch(f, x, norm_samples)
        bound = mx + lnorm * x
        rows.append([x, measured, mx, lnorm, bound])
        finals.append(measured)
        if measured > bound * (1 + mpf("1e-10")) + mpf(2) ** (32 - mpmath.mp.prec):
            ok = False
    tends_to_zero = None
    if _df0_is_one(f) and _d2f0_is_zero(f):
        tends_to_zero = finals[-1] <= mpf("0.01")
        ok = ok and tends_to_zero
    return EstimateReport(
        "field-displacement-equivalence",
        ["x", "abs_log_ratio", "M_x", "L_norm", "bound"],
        rows, ok,
        {"grid": norm_samples,
         "limit_clause": "n/a" if tends_to_zero is None else str(tends_to_zero)})


def _sup_log_df(f: Diffeo, x, samples: int) -> mpf:
    best = mpf(0)
    for u in cheb_grid(0, x, max(samples, 16)):
        if isinstance(f, FlowDiffeo):
            v = abs(f.logdf_jet(u, 0).coeffs[0])
        else:
            v = abs(mpmath.log(f.eval_jet(u, 1).coeffs[1]))
        if v > best:
            best = v
    return best


def _m_bound(c) -> mpf:
    """sup over 0 < |y| <= c of |log(y/(e^y - 1))| = log((e^c - 1)/c)."""
    if c == 0:
        return mpf(0)
    return mpmath.log(mpmath.expm1(c) / c)


def _sup_l_branch(f: Diffeo, x, samples: int) -> mpf:
    best = mpf(0)
    for u in cheb_grid(0, x, max(samples, 16))[1:]:
        if f.displacement(u) == 0:
            continue
        v = abs(_contracting_branch_l_jet(f, u, 0).coeffs[0])
        if v > best:
            best = v
    return best


def check_En_exponent(f: Diffeo, xi, n: int, xs=None, target=None,
                      slack=EXPONENT_SLACK) -> EstimateReport:
    """Empirical exponent of xi^{n-1} D^n xi against ||f-id||_{0,[0,x]}."""
    if "left" not in f.declared_flat_at:
        raise ValueError("exponent estimate needs a map declared flat at 0")
    xs = default_abscissae(24) if xs is None else [R(x) for x in xs]
    target = mpf(n) if target is None else R(target)
    rows = []
    exps = []
    for x in xs:
        jet = xi.eval_jet(x, n)
        mu = jet.derivative(n) * jet.coeffs[0] ** (n - 1)
        sup = _sup_displacement(f, x)
        if mu == 0 or sup == 0:
            rows.append([x, mu, sup, "dropped"])
            continue
        e = mpmath.log(abs(mu)) / mpmath.log(sup)
        rows.append([x, mu, sup, e])
        exps.append(e)
    tail = exps[len(exps) // 2:]
    verdict = bool(tail) and min(tail) >= target - slack
    return EstimateReport(f"derivative-exponent-n{n}",
                          ["x", "mu_n", "sup_displacement", "exponent"],
                          rows, verdict,
                          {"target": mpmath.nstr(target, 6),
                           "slack": mpmath.nstr(slack, 4)})


def check_series_phi(f: Diffeo, xi: SzekeresField, n: int, x,
                     match_tol=mpf("1e-8")) -> dict:
    """Orbit series for the n-th level against the jet route, plus tail shape."""
    x = R(x)
    data = xi.series_data(x, n)
    series_val = data.Phi[n][0] + (data.c1 if n == 1 else 0)
    oracle = mu_phi_values(f, xi, n, x)["Phi_n"]
    scale = max(abs(series_val), abs(oracle))
    agree = abs(series_val - oracle) / scale if scale > 0 else mpf(0)

    # summand domination by telescoping differences: fit on the first half,
    # check the rest against twice the fitted constant
    pts = data.points
    terms = data.phi[n]
    ratios = []
    for i in range(len(terms) - 1):
        gap = abs(pts[i] - pts[i + 1])
        if gap > 0:
            ratios.append(abs(terms[i]) / gap)
    half = max(1, len(ratios) // 2)
    fitted = max(ratios[:half]) if ratios[:half] else mpf(0)
    tail_ok = all(r <= 2 * fitted + mpf(2) ** (-mpmath.mp.prec) for r in ratios[half:])
    return {
        "series": series_val,
        "oracle": oracle,
        "relative_agreement": agree,
        "pass": agree <= match_tol and tail_ok,
        "tail_constant": fitted,
        "tail_ok": tail_ok,
        "terms_used": len(terms),
    }


def check_flat_norm_lemma(g, n: int, xs=None, slack=EXPONENT_SLACK,
                          samples: int = 33, variant: str = "function") -> EstimateReport:
    """||g||_{n,[0,x]} = O(||g||_0^{1-eta}) exponents for flat g.

    variant "function": g is a map flat at 0 (norms of g itself);
    variant "log-derivative": g is a diffeomorphism infinitely tangent to the
    identity at 0; measures log Df and log Df^{-1} instead.
    """
    xs = default_abscissae(16) if xs is None else [R(x) for x in xs]
    rows = []
    exps = []
    for x in xs:
        if variant == "function":
            if "left" not in g.declared_flat_at:
                raise ValueError("flat-norm estimate needs flatness at 0")
            num = _ck_norm_on(g, n, x, samples)
            den = _ck_norm_on(g, 0, x, samples)
        else:
            if "left" not in g.declared_flat_at:
                raise ValueError("log-derivative variant needs an ITI map")
            num = max(_logdf_norm_on(g, n, x, samples, +1),
                      _logdf_norm_on(g, n, x, samples, -1))
            den = _sup_displacement(g, x)
        if num == 0 or den == 0:
            rows.append([x, num, den, "dropped"])
            continue
        e = mpmath.log(num) / mpmath.log(den)
        rows.append([x, num, den, e])
        exps.append(e)
    tail = exps[len(exps) // 2:]
    verdict = bool(tail) and min(tail) >= 1 - slack
    return EstimateReport(f"flat-norm-exponent-n{n}-{variant}",
                          ["x", "norm_n", "norm_0", "exponent"],
                          rows, verdict, {"slack": mpmath.nstr(slack, 4)})


def _ck_norm_on(m, k, x, samples) -> mpf:
    best = mpf(0)
    for u in cheb_grid(0, x, max(samples, 16)):
        jet = m.eval_jet(u, k)
        for d in jet.derivatives():
            if abs(d) > best:
                best = abs(d)
    return best


def _logdf_norm_on(f: Diffeo, k, x, samples, direction) -> mpf:
    best = mpf(0)
    for u in cheb_grid(0, x, max(samples, 16)):
        if isinstance(f, FlowDiffeo):
            jet = f.logdf_jet(u, k) if direction > 0 else \
                FlowDiffeo(f.field, -f.t, tol=f.tol).logdf_jet(u, k)
        else:
            base = f.eval_jet(u, k + 1) if direction > 0 else f.inverse_jet(u, k + 1)
            jet = base.derivative_jet().log()
        for d in jet.derivatives():
            if abs(d) > best:
                best = abs(d)
    return best


def theta_bound_check(f: Diffeo, xs=None, samples: int = 33) -> EstimateReport:
    """|log(eta_1/eta_0)(x)| <= ||L f^{-+1}||_{0,[0,x]} (x - f^{-+1}(x))."""
    from .smoothing import iterate_signed

    xs = default_abscissae() if xs is None else [R(x) for x in xs]
    rows = []
    ok = True
    for x in xs:
        dx = f.displacement(x)
        if dx == 0:
            continue
        x1 = iterate_signed(f, x, 1, -1)
        d1 = f.displacement(x1)
        if dx < 0:
            dfj = f.eval_jet(x, 1)
        else:
            dfj = f.inverse_jet(x, 1)
        theta = abs(mpmath.log(abs(d1 / (dfj.coeffs[1] * dx))))
        bound = _sup_l_branch(f, x, samples) * (x - x1)
        rows.append([x, theta, bound])
        if theta > bound * (1 + mpf("1e-8")) + mpf(2) ** (32 - mpmath.mp.prec):
            ok = False
    return EstimateReport("pullback-log-ratio-bound", ["x", "theta", "bound"],
                          rows, ok, {"grid": samples})


def phi_over_xi_sup_stability(f: Diffeo, xi, n: int, base_grid: int = 64,
                              region=None) -> dict:
    """Sampled sup of |phi_{n+1}/xi| is stable under grid refinement."""
    a, b = region if region is not None else f.domain
    P, Qs = recursion_polynomials(n + 1)

    def ratio_at(x):
        if f.displacement(x) == 0:
            return None
        jet = xi.eval_jet(x, n + 1)
        xival = jet.coeffs[0]
        mus = []
        for m in range(1, n + 1):
            dm = jet
            for _ in range(m):
                dm = dm.derivative_jet()
            mus.append(dm.coeffs[0] * xival ** (m - 1))
        lj = _contracting_branch_l_jet(f, x, n)
        acc = mpf(0)
        xpow = mpf(1)
        for q in range(n + 1):
            acc += lj.derivative(q) * xpow * Qs[q].eval(mus)
            xpow *= xival
        return abs(acc)

    sups = []
    for ngrid in (base_grid, 2 * base_grid):
        best = mpf(0)
        for x in cheb_grid(a, b, ngrid)[1:-1]:
            v = ratio_at(x)
            if v is not None and v > best:
                best = v
        sups.append(best)
    s1, s2 = sups
    stable = s1 > 0 and abs(s2 - s1) <= mpf("0.1") * max(s1, s2)
    return {"sup_coarse": s1, "sup_fine": s2, "stable": stable,
            "grids": (base_grid, 2 * base_grid)}
