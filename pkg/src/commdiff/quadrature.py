"""Tanh-sinh (double-exponential) quadrature on finite intervals.

Nodes cluster double-exponentially at the endpoints, which keeps the cost
bounded for integrands like 1/xi that blow up toward the ends of a component.
Levels are doubled until the change falls below the requested tolerance; the
tail of each level is cut once the terms themselves drop below the target,
so integrable endpoint singularities are handled without special casing.
"""

from __future__ import annotations

import mpmath
from mpmath import mpf


class QuadratureError(ArithmeticError):
    pass


def tanh_sinh(f, a, b, tol=None, max_level: int = 13):
    """Integrate f over [a, b]; returns (value, error_estimate, evaluations)."""
    a, b = mpf(a), mpf(b)
    if a == b:
        return mpf(0), mpf(0), 0
    tol = mpf(2) ** (-(mpmath.mp.prec // 2) - 8) if tol is None else mpf(tol)
    mid = (a + b) / 2
    rad = (b - a) / 2
    pi_half = mpmath.pi / 2
    evals = 0

    def sample(x):
        nonlocal evals
        p = mid + rad * x
        if not a < p < b:
            return mpf(0)
        evals += 1
        return f(p)

    def level_terms(level: int, only_odd: bool, scale_hint: mpf) -> mpf:
        h = mpf(2) ** (-level)
        acc = mpf(0)
        k = 1
        quiet = 0
        kmax = 40 * (2**level) + 40
        while k <= kmax:
            if only_odd and k % 2 == 0:
                k += 1
                continue
            t = k * h
            u = pi_half * mpmath.sinh(t)
            x = mpmath.tanh(u)
            w = pi_half * mpmath.cosh(t) / mpmath.cosh(u) ** 2
            if x == 1:
                break
            term = (sample(x) + sample(-x)) * w
            acc += term
            if abs(term) < tol * max(scale_hint, abs(acc)) * mpf(2) ** -8:
                quiet += 1
                if quiet >= 4:
                    break
            else:
                quiet = 0
            k += 1
        return acc

    total = sample(mpf(0)) * pi_half
    scale = abs(total) + mpf(1)
    total += level_terms(0, False, scale)
    last = total * rad  # h = 1 at level 0
    err = abs(last)

    for level in range(1, max_level + 1):
        h = mpf(2) ** (-level)
        total += level_terms(level, True, abs(total))
        est = total * h * rad
        err = abs(est - last)
        last = est
        floor = tol if est == 0 else abs(est)
        if err <= tol * floor:
            return est, err, evals
    raise QuadratureError(
        f"tanh-sinh did not reach tolerance {mpmath.nstr(tol, 5)} "
        f"by level {max_level} (last change {mpmath.nstr(err, 5)})"
    )
