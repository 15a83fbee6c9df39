from fractions import Fraction

import pytest

from commdiff.polynomials import (IntPolynomial, alpha_beta, check_star_identity,
                                  recursion_polynomials)


def V(n, i):
    return IntPolynomial.variable(n, i)


def test_base_cases():
    P1, Q1 = recursion_polynomials(1)
    assert P1.is_zero()
    assert Q1[0] == IntPolynomial.constant(0, 1)
    a, b = alpha_beta(1)
    assert a == 0 and b == (1,)


def test_low_order_polynomials_exact():
    P2, _ = recursion_polynomials(2)
    assert P2.is_zero()
    P3, _ = recursion_polynomials(3)
    assert P3 == V(2, 1) * V(2, 2)
    P4, _ = recursion_polynomials(4)
    X1, X2, X3 = (V(3, i) for i in (1, 2, 3))
    assert P4 == 3 * (X1 * X3) + X2 * X2 + X1 * X1 * X2


def test_alpha_sequence():
    assert [alpha_beta(n)[0] for n in range(1, 7)] == [0, 0, 1, 5, 23, 119]


def test_beta_rows():
    assert alpha_beta(4)[1] == (6, 11, 6, 1)
    # the top coefficient stays 1 at every level
    for n in range(1, 9):
        assert alpha_beta(n)[1][-1] == 1


def test_q_top_constancy():
    for n in range(1, 8):
        _, Qn = recursion_polynomials(n)
        _, Qn1 = recursion_polynomials(n + 1)
        assert Qn1[n] == Qn[n - 1].widen(n)


def test_nonnegative_coefficients_through_8():
    for n in range(1, 9):
        P, Qs = recursion_polynomials(n)
        assert P.coefficients_nonnegative()
        for Q in Qs:
            assert Q.coefficients_nonnegative()


def test_star_identity_all_levels():
    for n in range(1, 9):
        res = check_star_identity(n)
        assert res["pass"], res


def test_out_of_range_rejected():
    with pytest.raises(ValueError):
        recursion_polynomials(9)
    with pytest.raises(ValueError):
        recursion_polynomials(0)


def test_polynomial_eval_fractions():
    P4, _ = recursion_polynomials(4)
    vals = [Fraction(1, 2), Fraction(1, 4), Fraction(1, 8)]
    direct = (3 * vals[0] * vals[2] + vals[1] ** 2
              + vals[0] ** 2 * vals[1])
    assert P4.eval(vals) == direct


def test_partial_derivative():
    X1, X2 = V(2, 1), V(2, 2)
    p = 3 * (X1 * X1 * X2)
    assert p.partial(1) == 6 * (X1 * X2)
    assert p.partial(2) == 3 * (X1 * X1)


def test_string_form_ascending_degree():
    P4, _ = recursion_polynomials(4)
    s = str(P4)
    assert s.index("X1*X3") < s.index("X1^2*X2")
