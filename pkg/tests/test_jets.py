import random

import mpmath
import pytest
from mpmath import mpf

from commdiff.jets import (Jet, JetDomainError, JetMismatchError, jet_compose,
                           jet_invert)


def coeffs_close(jet, expected, tol=mpf("1e-70")):
    assert len(jet.coeffs) == len(expected)
    for c, e in zip(jet.coeffs, expected):
        assert abs(c - mpf(e)) <= tol, (jet.coeffs, expected)


def test_polynomial_product_exact():
    x = Jet.variable(0, 2)
    prod = x * (1 - x)
    assert prod.coeffs == (mpf(0), mpf(1), mpf(-1))


def test_geometric_series_division_exact():
    x = Jet.variable(0, 3)
    q = 1 / (1 - x)
    assert q.coeffs == (mpf(1), mpf(1), mpf(1), mpf(1))


def test_sin_times_exp_series():
    x = Jet.variable(0, 3)
    prod = x.sin() * x.exp()
    coeffs_close(prod, [0, 1, 1, mpf(1) / 3])


def test_exp_log_basic():
    x = Jet.variable(0, 3)
    coeffs_close(x.exp(), [1, 1, mpf(1) / 2, mpf(1) / 6])
    coeffs_close((1 + x).log(), [0, 1, mpf(-1) / 2, mpf(1) / 3])


def test_exp_log_roundtrip_identity():
    x = Jet.variable(0, 4)
    back = (2 + x).log().exp()
    coeffs_close(back, [2, 1, 0, 0, 0], tol=mpf(2) ** -240)


def test_log_domain_error():
    x = Jet.variable(0, 2)
    with pytest.raises(JetDomainError):
        (x - 1).log()


def test_division_by_zero_constant_term():
    x = Jet.variable(0, 2)
    with pytest.raises(JetDomainError):
        (1 + x) / x


def test_mismatched_base_and_order():
    a = Jet.variable(0, 2)
    b = Jet.variable(mpf("0.5"), 2)
    with pytest.raises(JetMismatchError):
        a + b
    with pytest.raises(JetMismatchError):
        a * Jet.variable(0, 3)


def test_compose_sin_double():
    outer = Jet.variable(0, 3).sin()
    inner = Jet(0, [0, 2, 0, 0])
    coeffs_close(jet_compose(outer, inner), [0, 2, 0, mpf(-4) / 3])


def test_compose_with_identity_is_noop():
    x = mpf("0.37")
    jet = Jet.variable(x, 5).exp() * (1 + Jet.variable(x, 5))
    ident = Jet.variable(x, 5)
    out = jet_compose(jet, ident)
    coeffs_close(out, list(jet.coeffs), tol=mpf(2) ** -240)


def test_compose_exp_of_x_plus_x2():
    outer = Jet.variable(0, 2).exp()
    inner = Jet(0, [0, 1, 1])
    coeffs_close(jet_compose(outer, inner), [1, 1, mpf(3) / 2])


def test_invert_linear_and_identity():
    half = jet_invert(Jet(0, [0, 2, 0, 0]))
    coeffs_close(half, [0, mpf(1) / 2, 0, 0])
    ident = jet_invert(Jet(0, [0, 1, 0, 0]))
    coeffs_close(ident, [0, 1, 0, 0])


def test_invert_quadratic_lagrange():
    inv = jet_invert(Jet(0, [0, 1, 1, 0]))
    coeffs_close(inv, [0, 1, -1, 2])


def test_invert_requires_nonzero_slope():
    with pytest.raises(JetDomainError):
        jet_invert(Jet(0, [0, 0, 1]))


def test_compose_invert_roundtrip_random():
    rng = random.Random(7)
    for _ in range(8):
        order = rng.randint(3, 9)
        base = mpf(rng.uniform(-0.5, 0.5))
        coeffs = [mpf(rng.uniform(-1, 1)) for _ in range(order + 1)]
        coeffs[1] = mpf(rng.choice([-1, 1])) * mpf(rng.uniform(0.5, 2.0))
        jet = Jet(base, coeffs)
        inv = jet_invert(jet)
        rid = jet_compose(jet, inv)
        ident = Jet.variable(jet.value, order)
        tol = mpf(2) ** (16 - mpmath.mp.prec) * max(1, jet.max_abs_coeff()) ** order
        for c, e in zip(rid.coeffs, ident.coeffs):
            assert abs(c - e) <= tol


def test_finite_difference_cross_check():
    # jet coefficients against central differences at tiny step
    h = mpf(2) ** -66

    def f(x):
        return mpmath.sin(x) * mpmath.exp(x) / (1 + x * x)

    x0 = mpf("0.4")
    xj = Jet.variable(x0, 3)
    jet = xj.sin() * xj.exp() / (1 + xj * xj)
    d1 = (f(x0 + h) - f(x0 - h)) / (2 * h)
    d2 = (f(x0 + h) - 2 * f(x0) + f(x0 - h)) / h**2
    assert abs(jet.derivative(1) - d1) / abs(d1) < mpf("1e-30")
    assert abs(jet.derivative(2) - d2) / abs(d2) < mpf("1e-20")


def test_power_and_pow_int():
    x = Jet.variable(0, 3)
    sqrt = (1 + x).power(mpf("0.5"))
    coeffs_close(sqrt, [1, mpf(1) / 2, mpf(-1) / 8, mpf(1) / 16])
    cube = Jet.variable(0, 4).pow_int(3)
    assert cube.coeffs == (mpf(0),) * 3 + (mpf(1), mpf(0))
    with pytest.raises(JetDomainError):
        (x - 2).power(mpf("0.5"))


def test_derivative_and_antiderivative_shift():
    x = Jet.variable(mpf("0.3"), 4)
    jet = x.sin()
    dj = jet.derivative_jet()
    coeffs_close(dj, list(x.truncate(3).cos().coeffs), tol=mpf(2) ** -240)
    back = dj.antiderivative_jet(jet.value)
    coeffs_close(back, list(jet.coeffs), tol=mpf(2) ** -240)


def test_derivatives_conversion_roundtrip():
    jet = Jet.from_derivatives(0, [1, 2, 6, 24])
    assert jet.coeffs == (mpf(1), mpf(2), mpf(3), mpf(4))
    assert jet.derivatives() == [mpf(1), mpf(2), mpf(6), mpf(24)]
