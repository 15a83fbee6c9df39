import mpmath
import pytest
from mpmath import mpf

from commdiff.jets import Jet
from commdiff.parser import (EvalDomainError, ParseError, ast_derivative,
                             flat_guards, parse_expression)


def ev(src, x):
    return parse_expression(src).eval(mpf(x))


def test_basic_arithmetic_and_precedence():
    assert ev("1+2*3", 0) == 7
    assert ev("(1+2)*3", 0) == 9
    assert ev("2^3/4", 0) == 2
    assert ev("x*(1-x)", "0.25") == mpf("0.1875")


def test_decimal_constants_are_exact():
    node = parse_expression("0.1")
    # held as the rational 1/10, rounded only at evaluation
    assert node.value.numerator == 1 and node.value.denominator == 10


def test_syntax_error_position_reported():
    with pytest.raises(ParseError) as err:
        parse_expression("flat(x)*sin(3.14159.../x)^2")
    assert "position" in str(err.value)


def test_no_unary_minus_in_grammar():
    with pytest.raises(ParseError):
        parse_expression("-x")


def test_unknown_identifier():
    with pytest.raises(ParseError):
        parse_expression("tan(x)")


def test_trailing_garbage():
    with pytest.raises(ParseError):
        parse_expression("x+1)")


def test_flat_values_and_jets():
    node = parse_expression("flat(x)")
    assert node.eval(mpf(0)) == 0
    assert node.eval(mpf(-1)) == 0
    half = node.eval(mpf("0.5"))
    assert abs(half - mpmath.exp(-2)) < mpf(2) ** -240
    jet = node.eval_jet(mpf("0.5"), 1)
    assert abs(jet.coeffs[0] - mpmath.exp(-2)) < mpf(2) ** -240
    assert abs(jet.coeffs[1] - 4 * mpmath.exp(-2)) < mpf(2) ** -240


def test_flat_jet_exactly_zero_at_zero_argument():
    node = parse_expression("flat(x)")
    jet = node.eval_jet(mpf(0), 8)
    assert jet.is_zero()
    # also when the argument vanishes at an interior point
    node = parse_expression("flat(x-0.5)")
    assert node.eval_jet(mpf("0.5"), 6).is_zero()
    assert node.eval_jet(mpf("0.25"), 6).is_zero()


def test_division_by_zero_raises():
    node = parse_expression("1/x")
    with pytest.raises((EvalDomainError, ZeroDivisionError)):
        node.eval(mpf(0))


def test_log_domain():
    node = parse_expression("log(x)")
    with pytest.raises(EvalDomainError):
        node.eval(mpf(-1))


def test_ast_derivative_matches_jets():
    src = "flat(x)*(1-x)^2 + sin(x)/(2+cos(x))"
    node = parse_expression(src)
    dnode = ast_derivative(node)
    for xs in ("0.2", "0.5", "0.85"):
        x = mpf(xs)
        jet = node.eval_jet(x, 1)
        assert abs(dnode.eval(x) - jet.derivative(1)) < mpf(2) ** -230


def test_ast_derivative_flat_chain_closed():
    node = parse_expression("flat(x)")
    d1 = ast_derivative(node)
    d2 = ast_derivative(d1)
    x = mpf("0.3")
    jet = node.eval_jet(x, 2)
    assert abs(d2.eval(x) - jet.derivative(2)) < mpf(2) ** -220
    # the flat short-circuit survives differentiation
    assert d2.eval(mpf(0)) == 0
    assert d2.eval(mpf(-2)) == 0


def test_flat_guards_collected():
    node = parse_expression("flat(x)*(1+flat(1-x))")
    guards = flat_guards(node)
    assert len(guards) == 2
    dnode = ast_derivative(node)
    assert len(flat_guards(dnode)) >= 2
