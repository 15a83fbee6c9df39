"""Multivariate integer polynomials and the derivative-recursion families.

Dense-exponent-vector representation with exact integer coefficients; no
simplification beyond merging terms.  The polynomial families P_n and
Q_{n,q} encode how higher derivatives of a vector field propagate through
the Lie-derivative recursion mu_{n+1} = L mu_n - (n-1) mu_1 mu_n; their
single-variable collapses give the integer sequences alpha_n and beta_{n,q}.
"""

from __future__ import annotations

from functools import lru_cache


class IntPolynomial:
    """Polynomial in variables X_1..X_m with integer coefficients."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms=None):
        self.nvars = nvars
        clean = {}
        if terms:
            for expo, coeff in terms.items():
                if len(expo) != nvars:
                    raise ValueError("exponent vector length mismatch")
                if coeff:
                    clean[tuple(int(e) for e in expo)] = int(coeff)
        self.terms = clean

    @staticmethod
    def zero(nvars: int) -> "IntPolynomial":
        return IntPolynomial(nvars)

    @staticmethod
    def constant(nvars: int, c: int) -> "IntPolynomial":
        if c == 0:
            return IntPolynomial(nvars)
        return IntPolynomial(nvars, {(0,) * nvars: c})

    @staticmethod
    def variable(nvars: int, i: int) -> "IntPolynomial":
        """X_i with 1-based index i."""
        expo = [0] * nvars
        expo[i - 1] = 1
        return IntPolynomial(nvars, {tuple(expo): 1})

    def is_zero(self) -> bool:
        return not self.terms

    def widen(self, nvars: int) -> "IntPolynomial":
        """Reinterpret in a larger variable ring (new variables unused)."""
        if nvars < self.nvars:
            raise ValueError("cannot narrow a polynomial")
        pad = nvars - self.nvars
        return IntPolynomial(nvars, {e + (0,) * pad: c for e, c in self.terms.items()})

    def __eq__(self, other):
        if not isinstance(other, IntPolynomial):
            return NotImplemented
        a = {e: c for e, c in self.terms.items()}
        b = {e: c for e, c in other.terms.items()}
        na = max(self.nvars, other.nvars)
        a = {e + (0,) * (na - self.nvars): c for e, c in a.items()}
        b = {e + (0,) * (na - other.nvars): c for e, c in b.items()}
        return a == b

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __add__(self, other):
        n = max(self.nvars, other.nvars)
        a, b = self.widen(n), other.widen(n)
        out = dict(a.terms)
        for e, c in b.terms.items():
            out[e] = out.get(e, 0) + c
        return IntPolynomial(n, out)

    def __sub__(self, other):
        return self + other * -1

    def __mul__(self, other):
        if isinstance(other, int):
            return IntPolynomial(self.nvars, {e: c * other for e, c in self.terms.items()})
        n = max(self.nvars, other.nvars)
        a, b = self.widen(n), other.widen(n)
        out: dict = {}
        for ea, ca in a.terms.items():
            for eb, cb in b.terms.items():
                e = tuple(x + y for x, y in zip(ea, eb))
                out[e] = out.get(e, 0) + ca * cb
        return IntPolynomial(n, out)

    __rmul__ = __mul__

    def partial(self, i: int) -> "IntPolynomial":
        """d/dX_i (1-based)."""
        out: dict = {}
        for e, c in self.terms.items():
            if e[i - 1] == 0:
                continue
            ne = list(e)
            ne[i - 1] -= 1
            out[tuple(ne)] = out.get(tuple(ne), 0) + c * e[i - 1]
        return IntPolynomial(self.nvars, out)

    def substitute_powers(self) -> dict[int, int]:
        """Coefficients of t^d after X_i := t^i, as {degree: coeff}."""
        out: dict[int, int] = {}
        for e, c in self.terms.items():
            d = sum((i + 1) * k for i, k in enumerate(e))
            out[d] = out.get(d, 0) + c
        return {d: c for d, c in out.items() if c}

    def eval(self, values):
        """Evaluate at arbitrary ring elements (mpf, Fraction, int)."""
        if len(values) < self.nvars:
            raise ValueError("not enough values")
        total = None
        for e, c in self.terms.items():
            term = c
            for i, k in enumerate(e):
                for _ in range(k):
                    term = term * values[i]
            total = term if total is None else total + term
        if total is None:
            return 0
        return total

    def coefficients_nonnegative(self) -> bool:
        return all(c >= 0 for c in self.terms.values())

    def __str__(self):
        if not self.terms:
            return "0"
        def key(item):
            e, _ = item
            return (sum(e), tuple(-v for v in e))
        parts = []
        for e, c in sorted(self.terms.items(), key=key):
            factors = []
            for i, k in enumerate(e):
                if k == 1:
                    factors.append(f"X{i + 1}")
                elif k > 1:
                    factors.append(f"X{i + 1}^{k}")
            body = "*".join(factors) if factors else "1"
            if c == 1 and factors:
                parts.append(body)
            elif c == -1 and factors:
                parts.append(f"-{body}")
            else:
                parts.append(f"{c}*{body}" if factors else str(c))
        joined = " + ".join(parts).replace("+ -", "- ")
        return joined

    __repr__ = __str__


@lru_cache(maxsize=None)
def recursion_polynomials(n: int):
    """(P_n, (Q_{n,0}, ..., Q_{n,n-1})) in the variables X_1..X_{n-1}.

    Built by the inductive rules
        P_{n+1} = (n-1) X_1 X_n
                  + sum_i dP_n/dX_i * (X_{i+1} + (i-1) X_1 X_i)
        Q_{n+1,q} = Q_{n,q-1} + (q+1) X_1 Q_{n,q}
                  + sum_i dQ_{n,q}/dX_i * ((i-1) X_1 X_i + X_{i+1})
    with the q = 0 term dropping the shift and q = n copying Q_{n,n-1};
    base case P_1 = 0, Q_{1,0} = 1.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > 8:
        raise ValueError("recursion families are kept to n <= 8")
    if n == 1:
        return IntPolynomial.zero(0), (IntPolynomial.constant(0, 1),)
    m = n - 1  # previous level
    P_m, Q_m = recursion_polynomials(m)
    nv = n - 1  # variables X_1..X_{n-1} at level n
    X = [IntPolynomial.variable(nv, i) for i in range(1, nv + 1)]

    P_prev = P_m.widen(nv)
    P_next = (m - 1) * (X[0] * X[m - 1])
    for i in range(1, m):  # variables of level m: X_1..X_{m-1}
        dPi = P_prev.partial(i)
        if dPi.is_zero():
            continue
        shift = X[i] + (i - 1) * (X[0] * X[i - 1])
        P_next = P_next + dPi * shift

    Q_next = []
    for q in range(0, m + 1):
        acc = IntPolynomial.zero(nv)
        if q >= 1:
            acc = acc + Q_m[q - 1].widen(nv)
        if q <= m - 1:
            Qq = Q_m[q].widen(nv)
            acc = acc + (q + 1) * (X[0] * Qq)
            for i in range(1, m):
                dQi = Qq.partial(i)
                if dQi.is_zero():
                    continue
                shift = (i - 1) * (X[0] * X[i - 1]) + X[i]
                acc = acc + dQi * shift
        Q_next.append(acc)
    return P_next, tuple(Q_next)


@lru_cache(maxsize=None)
def alpha_beta(n: int):
    """(alpha_n, (beta_{n,0..n-1})) by the scalar recursions."""
    if n == 1:
        return 0, (1,)
    a, b = alpha_beta(n - 1)
    m = n - 1
    alpha = m - 1 + m * a
    beta = []
    for q in range(0, n):
        val = 0
        if q >= 1:
            val += b[q - 1]
        if q <= m - 1:
            val += m * b[q]
        beta.append(val)
    return alpha, tuple(beta)


def check_star_identity(n: int) -> dict:
    """Exact substitution X_i := t^i into P_n and Q_{n,q}.

    PASS iff P_n collapses to alpha_n t^n and Q_{n,q} to beta_{n,q} t^{n-1-q},
    with alpha/beta from the scalar recursions.
    """
    P, Qs = recursion_polynomials(n)
    alpha, betas = alpha_beta(n)
    ok = True
    details = {}
    p_sub = P.substitute_powers()
    expected = {n: alpha} if alpha else {}
    details["P"] = (p_sub, expected)
    if p_sub != expected:
        ok = False
    for q, Q in enumerate(Qs):
        q_sub = Q.substitute_powers()
        want = {n - 1 - q: betas[q]} if betas[q] else {}
        details[f"Q{q}"] = (q_sub, want)
        if q_sub != want:
            ok = False
    return {"n": n, "pass": ok, "alpha": alpha, "beta": betas, "details": details}
