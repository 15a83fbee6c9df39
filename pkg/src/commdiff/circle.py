"""Circle maps through degree-one lifts: rotation numbers and lattice bases.

A lift is a map F on [0,1] with F(1) = F(0) + 1, extended by F(x+n) = F(x)+n.
Rotation numbers combine a Birkhoff average with continued-fraction
refinement: rational candidates are certified by the vanishing criterion for
F^q - id - p on a grid; irrational values are polished by measuring the
displacement of F^{q_k} at convergent denominators, which shrinks the error
to the order 1/(q_k q_{k+1}).

The lattice construction turns rotation-number data of a finitely generated
abelian group of circle maps into a unimodular change of basis whose last
n-1 generators have zero rotation number, in exact integer arithmetic.
"""

from __future__ import annotations

from fractions import Fraction
from math import gcd

import mpmath
from mpmath import mpf

from .maps import SmoothMap, parse_map
from .precision import R


class CircleLift:
    """Degree-one lift F: R -> R of an orientation-preserving circle map."""

    def __init__(self, smooth_map: SmoothMap, check: bool = True,
                 orientation_samples: int = 256):
        self.map = smooth_map
        a, b = smooth_map.domain
        if not (a == 0 and b == 1):
            raise ValueError("lift expressions live on [0, 1]")
        if check:
            jump = smooth_map.eval(mpf(1)) - smooth_map.eval(mpf(0)) - 1
            if abs(jump) > mpf(2) ** (32 - mpmath.mp.prec):
                raise ValueError("not a degree-one lift: F(1) != F(0) + 1")
            for j in range(1, orientation_samples):
                x = mpf(j) / orientation_samples
                if smooth_map.eval_jet(x, 1).coeffs[1] <= 0:
                    raise ValueError("lift is not increasing on the sample grid")

    def eval(self, x) -> mpf:
        x = R(x)
        n = mpmath.floor(x)
        return self.map.eval(x - n) + n

    def displacement_mod_grid(self, q: int, p: int, grid: int = 256) -> mpf:
        """min over the grid of |F^q(x) - x - p|."""
        best = None
        for j in range(grid):
            x = mpf(j) / grid
            y = self.power(x, q)
            v = abs(y - x - p)
            if best is None or v < best:
                best = v
        return best

    def power(self, x, n: int) -> mpf:
        y = R(x)
        if n < 0:
            raise ValueError("only forward iteration is needed for lifts")
        for _ in range(n):
            y = self.eval(y)
        return y


def parse_lift(source: str, check: bool = True) -> CircleLift:
    return CircleLift(parse_map(source, (0, 1)), check=check)


def conjugated_rotation_lift(alpha, wobble=mpf("0.1"), check: bool = True) -> CircleLift:
    """Lift of phi ∘ R_alpha ∘ phi^{-1} with phi(x) = x + wobble·sin(2 pi x)/(2 pi)."""
    from . import parser

    alpha = R(alpha)
    wobble = R(wobble)
    if abs(wobble) >= 1:
        raise ValueError("wobble must keep phi increasing")
    two_pi = 2 * mpmath.pi

    class _Conj:
        domain = (mpf(0), mpf(1))
        declared_flat_at = frozenset()

        @staticmethod
        def _phi(x):
            return x + wobble * mpmath.sin(two_pi * x) / two_pi

        @staticmethod
        def _phi_inv(y):
            x = y
            for _ in range(200):
                step = (_Conj._phi(x) - y) / (1 + wobble * mpmath.cos(two_pi * x))
                x = x - step
                if abs(step) <= abs(y) * mpf(2) ** (8 - mpmath.mp.prec) + mpf(2) ** (-mpmath.mp.prec):
                    break
            return x

        @staticmethod
        def eval(x):
            return _Conj._phi(_Conj._phi_inv(R(x)) + alpha)

        @staticmethod
        def eval_jet(x, order):
            from .jets import Jet, jet_compose, jet_invert

            x = R(x)
            u = _Conj._phi_inv(x)
            phi_jet_u = _phi_jet(u, order)
            inv_jet = jet_invert(phi_jet_u)
            inv_jet = Jet(x, inv_jet.coeffs, check=False)
            shifted = Jet(x, (inv_jet.coeffs[0] + alpha,) + inv_jet.coeffs[1:],
                          check=False)
            outer = _phi_jet(shifted.coeffs[0], order)
            return jet_compose(outer, shifted)

    def _phi_jet(u, order):
        from .jets import Jet

        uj = Jet.variable(u, order)
        return uj + (uj * two_pi).sin() * (wobble / two_pi)

    class _LiftMap(SmoothMap):
        def __init__(self):
            self.domain = (mpf(0), mpf(1))
            self.declared_flat_at = frozenset()
            self.flat_kind = "zero"
            self.displacement_expr = None
            self.expr = None

        def eval(self, x):
            return _Conj.eval(x)

        def eval_jet(self, x, order):
            return _Conj.eval_jet(x, order)

    return CircleLift(_LiftMap(), check=check)


# ---------------------------------------------------------------------------
# rotation number


def _continued_fraction_convergents(x, q_cap):
    x = R(x)
    out = []
    p0, q0 = 1, 0
    a = int(mpmath.floor(x))
    p1, q1 = a, 1
    out.append((p1, q1))
    frac = x - a
    for _ in range(80):
        if frac == 0:
            break
        x = 1 / frac
        a = int(mpmath.floor(x))
        frac = x - a
        p0, q0, p1, q1 = p1, q1, a * p1 + p0, a * q1 + q0
        if q1 > q_cap:
            break
        out.append((p1, q1))
    return out


def rotation_number(F: CircleLift, iterations: int = 100_000, *,
                    rational_tol=mpf("1e-9"), q_max: int = 64,
                    grid: int = 256, detail: bool = False):
    """Rotation number of a lift.

    A Birkhoff average seeds continued-fraction candidates; a rational p/q
    with q <= q_max is returned exactly when F^q - id - p vanishes somewhere
    on the grid (within rational_tol).  Otherwise the estimate is refined at
    convergent denominators up to the iteration budget.
    """
    if iterations < 1:
        raise ValueError("need at least one iteration")
    n0 = min(iterations, 4096)
    x = mpf(0)
    x = F.power(x, n0)
    est = x / n0
    uncertainty = mpf(4) / n0

    # rational certification
    for p, q in _continued_fraction_convergents(est, q_max):
        if q < 1 or gcd(abs(p), q) != 1:
            continue
        if abs(est - mpf(p) / q) > uncertainty + rational_tol:
            continue
        if F.displacement_mod_grid(q, p, grid) < rational_tol:
            value = mpf(p) / q
            if detail:
                return value, {"exact": Fraction(p, q), "method": "rational",
                               "grid": grid}
            return value

    # convergent-denominator refinement for the irrational case: at a
    # convergent denominator q the displacement of F^q - p pins q*rho - p to
    # within the oscillation of F^q - id, which is small near convergents
    budget = iterations
    used = n0
    history = [(n0, est)]
    probes = (mpf(0), mpf("0.2345"), mpf("0.5432"), mpf("0.7891"))
    last_q = 1
    while used < budget:
        convs = _continued_fraction_convergents(est, budget)
        cand = None
        for idx, (p, q) in enumerate(convs):
            if q <= last_q:
                continue
            q_next = convs[idx + 1][1] if idx + 1 < len(convs) else 3 * q
            # the enclosure must pin down the convergent p/q itself
            if mpf(q) * q_next * uncertainty < mpf("0.5") and used + len(probes) * q <= budget:
                cand = (p, q)
                break
        if cand is None:
            break
        p, q = cand
        ds = []
        for y in probes:
            ds.append(F.power(y, q) - y - p)
        used += len(probes) * q
        dmin, dmax = min(ds), max(ds)
        est = (p + (dmin + dmax) / 2) / q
        osc = dmax - dmin
        uncertainty = max(mpf("0.4") * osc / q, mpf(2) ** (8 - mpmath.mp.prec))
        last_q = q
        history.append((q, est))
    if detail:
        return est, {"exact": None, "method": "birkhoff+convergents",
                     "uncertainty": mpmath.nstr(uncertainty, 6),
                     "history": [(n, mpmath.nstr(e, 20)) for n, e in history]}
    return est


# ---------------------------------------------------------------------------
# integer lattice basis from rotation data


class LatticeBasis:
    """Columns: the new basis (f, g_2, ..., g_n); determinant +-1."""

    def __init__(self, matrix):
        self.matrix = [list(map(int, col)) for col in matrix]
        n = len(self.matrix)
        if any(len(col) != n for col in self.matrix):
            raise ValueError("basis matrix must be square")
        if abs(_det_int(self.matrix)) != 1:
            raise ValueError("basis must be unimodular")

    def columns(self):
        return [list(col) for col in self.matrix]

    def as_csv(self) -> str:
        n = len(self.matrix)
        rows = []
        for i in range(n):
            rows.append(",".join(str(self.matrix[j][i]) for j in range(n)))
        return "\n".join(rows) + "\n"


def _det_int(cols) -> int:
    """Integer determinant by fraction-free Gaussian elimination (Bareiss)."""
    n = len(cols)
    m = [[cols[j][i] for j in range(n)] for i in range(n)]
    sign = 1
    prev = 1
    for k in range(n - 1):
        if m[k][k] == 0:
            for r in range(k + 1, n):
                if m[r][k] != 0:
                    m[k], m[r] = m[r], m[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
            m[i][k] = 0
        prev = m[k][k]
    return sign * m[-1][-1]


def _ext_gcd_vector(values):
    """(g, coeffs) with sum coeffs[i]*values[i] = g = gcd(values)."""
    g = 0
    coeffs = [0] * len(values)
    for i, v in enumerate(values):
        if v == 0:
            continue
        if g == 0:
            g = abs(v)
            coeffs = [0] * len(values)
            coeffs[i] = 1 if v > 0 else -1
            continue
        # g_new = u*g + w*v
        old_r, r = g, v
        old_u, u = 1, 0
        while r:
            qt = old_r // r
            old_r, r = r, old_r - qt * r
            old_u, u = u, old_u - qt * u
        gn, un = old_r, old_u
        wn = (gn - un * g) // v
        coeffs = [c * un for c in coeffs]
        coeffs[i] += wn
        g = gn
        if g < 0:
            g = -g
            coeffs = [-c for c in coeffs]
    return g, coeffs


def _complete_primitive(vec):
    """Unimodular matrix whose first column is the primitive vector vec."""
    n = len(vec)
    g, _ = _ext_gcd_vector(vec)
    if g != 1:
        raise ValueError("vector is not primitive")
    # column operations reducing vec to e_1, tracked on an identity matrix
    cols = [list(vec)]
    basis = [[1 if i == j else 0 for i in range(n)] for j in range(n)]
    work = list(vec)
    ops = []  # (kind, i, j, m): row ops applied to 'work'
    # Euclidean sweep: make work = (g, 0, ..., 0)
    while True:
        nz = [i for i in range(1, n) if work[i] != 0]
        if not nz:
            break
        # pick the smallest nonzero pivot among all entries
        piv = 0 if work[0] != 0 else nz[0]
        for i in [0] + nz:
            if work[i] != 0 and (work[piv] == 0 or abs(work[i]) < abs(work[piv])):
                piv = i
        for i in range(n):
            if i == piv or work[i] == 0:
                continue
            m = work[i] // work[piv]
            if m:
                work[i] -= m * work[piv]
                ops.append(("sub", i, piv, m))
        nz = [i for i in range(n) if work[i] != 0]
        if len(nz) == 1:
            if nz[0] != 0:
                work[0], work[nz[0]] = work[nz[0]], work[0]
                ops.append(("swap", 0, nz[0], 0))
            break
    if work[0] < 0:
        work[0] = -work[0]
        ops.append(("neg", 0, 0, 0))
    # apply inverse ops in reverse to the identity columns: the resulting
    # matrix U satisfies U e_1 = vec / g
    mat = [[1 if i == j else 0 for i in range(n)] for j in range(n)]

    def apply_inverse(col):
        for kind, i, j, m in reversed(ops):
            if kind == "sub":
                col[i] += m * col[j]
            elif kind == "swap":
                col[i], col[j] = col[j], col[i]
            else:
                col[i] = -col[i]
        return col

    out = []
    for j in range(n):
        col = [1 if i == j else 0 for i in range(n)]
        out.append(apply_inverse(col))
    return out


def lattice_basis(rho_values) -> LatticeBasis:
    """Adapted basis from rotation numbers of the standard generators.

    rho_values: exact rationals (mod 1) of the images of e_1..e_n; they must
    generate a cyclic group (1/k)Z/Z with k the common denominator.  The
    first output vector has rotation number generating the group; the others
    have rotation number 0 (verified exactly).
    """
    fr = [Fraction(v) % 1 for v in rho_values]
    n = len(fr)
    if n < 1:
        raise ValueError("need at least one generator")
    k = 1
    for v in fr:
        k = k * v.denominator // gcd(k, v.denominator)
    if k == 1:
        return LatticeBasis([[1 if i == j else 0 for i in range(n)] for j in range(n)])
    nums = [int(v * k) for v in fr]
    g, coeffs = _ext_gcd_vector(nums + [k])
    if g != 1:
        raise ValueError(
            f"rotation numbers generate a group of order {k // g}, not {k}: "
            "inconsistent input"
        )
    h = coeffs[:n]  # rho(h) = 1/k mod 1
    gh, _ = _ext_gcd_vector(h)
    f_vec = [c // gh for c in h]
    rho_f = sum(ci * ni for ci, ni in zip(f_vec, nums)) % k  # alpha
    alpha = rho_f
    if gcd(alpha, k) != 1:
        raise ValueError("primitive direction lost the generating property")
    beta = pow(alpha, -1, k)
    cols = _complete_primitive(f_vec)
    basis = [f_vec]
    for j in range(1, n):
        h_j = cols[j]
        rho_hj = sum(ci * ni for ci, ni in zip(h_j, nums)) % k
        n_j = -beta * rho_hj
        g_j = [hc + n_j * fc for hc, fc in zip(h_j, f_vec)]
        rho_gj = sum(ci * ni for ci, ni in zip(g_j, nums)) % k
        if rho_gj != 0:
            raise AssertionError("construction failed to kill the rotation number")
        basis.append(g_j)
    return LatticeBasis(basis)
