import mpmath
import pytest
from mpmath import mpf

from commdiff.analysis import commutation_residual, ck_dist, fixed_points
from commdiff.fixtures import fixture, logistic_time_map, logistic_value
from commdiff.maps import ExprField, IdentityDiffeo, PowerDiffeo, parse_map
from commdiff.szekeres import (NonConvergedError, PairPreconditionError,
                               SzekeresField, classify_pair, path_to_identity,
                               pullback, szekeres_dvalue, szekeres_higher,
                               szekeres_value, translation_time)

XS = [mpf("0.15"), mpf("0.3"), mpf("0.62")]


def test_value_matches_generating_field(hyperbolic_series_field):
    xi = hyperbolic_series_field
    for x in XS:
        v = szekeres_value(xi, x)
        assert abs(v - x * (1 - x)) < mpf("1e-35")


def test_value_zero_on_fixed_points(hyperbolic_series_field):
    assert szekeres_value(hyperbolic_series_field, mpf(0)) == 0
    assert szekeres_value(hyperbolic_series_field, mpf(1)) == 0


def test_field_invariance_under_pullback(hyperbolic, hyperbolic_series_field):
    # xi(f(x)) = Df(x) xi(x): the pullback of the field by f is the field
    _field, f1, _ = hyperbolic
    xi = hyperbolic_series_field
    for x in XS:
        jet = f1.eval_jet(x, 1)
        lhs = szekeres_value(xi, jet.coeffs[0])
        rhs = jet.coeffs[1] * szekeres_value(xi, x)
        assert abs(lhs - rhs) / abs(rhs) < mpf("1e-10")


def test_pullback_operation(hyperbolic):
    field, f1, _ = hyperbolic
    # linear fields are invariant under scaling charts
    lin = ExprField(parse_map("x", (0, 2)))
    two = logistic_time_map  # placeholder to keep imports tidy
    from commdiff.maps import ExprDiffeo

    h = ExprDiffeo(parse_map("2*x", (0, mpf("0.5")), flat_kind="identity"),
                   check=False)
    out = pullback(lin, h, mpf("0.2"), 0)
    assert abs(out.coeffs[0] - mpf("0.2")) < mpf("1e-70")
    # identity pullback is a no-op
    ident = IdentityDiffeo((0, 1))
    out = pullback(field, ident, mpf("0.3"), 1)
    jet = field.eval_jet(mpf("0.3"), 1)
    assert abs(out.coeffs[0] - jet.coeffs[0]) < mpf("1e-70")
    # flow invariance: pullback by the time-1 map reproduces the field
    out = pullback(field, f1, mpf("0.3"), 0)
    assert abs(out.coeffs[0] - field.eval(mpf("0.3"))) < mpf("1e-45")


def test_dvalue_matches_analytic(hyperbolic_series_field):
    xi = hyperbolic_series_field
    for x in XS:
        dv = szekeres_dvalue(xi, x)
        assert abs(dv - (1 - 2 * x)) < mpf("1e-35")


def test_dvalue_limit_at_left_end(hyperbolic_series_field):
    # toward 0 the derivative tends to log Df(0) = 1
    dv = szekeres_dvalue(hyperbolic_series_field, mpf("0.0005"))
    assert abs(dv - 1) < mpf("0.002")


def test_higher_derivatives(hyperbolic_series_field):
    xi = hyperbolic_series_field
    assert abs(szekeres_higher(xi, mpf("0.3"), 2) + 2) < mpf("1e-30")
    assert abs(szekeres_higher(xi, mpf("0.5"), 3)) < mpf("1e-30")
    assert abs(szekeres_higher(xi, mpf("0.3"), 4)) < mpf("1e-25")


def test_higher_agrees_with_jet_transport_oracle(hyperbolic_series_field):
    xi = hyperbolic_series_field
    x = mpf("0.37")
    oracle = xi.jet_by_pullback_limit(x, 4)
    for n in (2, 3, 4):
        series = szekeres_higher(xi, x, n)
        ref = oracle.derivative(n)
        scale = max(abs(ref), mpf(1))
        assert abs(series - ref) / scale < mpf("1e-6")


def test_flat_fixture_series_values(flat_boundary, flat_series_field):
    field, f1, _ = flat_boundary
    xi = flat_series_field
    x = mpf("0.01")
    v = szekeres_value(xi, x)
    assert abs(v / field.eval(x) - 1) < mpf("1e-12")
    dv = szekeres_dvalue(xi, x)
    ref = field.eval_jet(x, 1).coeffs[1]
    assert abs(dv / ref - 1) < mpf("1e-8")


def test_dvalue_matches_finite_differences_flat(flat_series_field):
    xi = flat_series_field
    h = mpf(2) ** -60
    for xs in ("0.009", "0.012"):
        x = mpf(xs)
        fd = (szekeres_value(xi, x + h) - szekeres_value(xi, x - h)) / (2 * h)
        dv = szekeres_dvalue(xi, x)
        assert abs(fd - dv) / abs(dv) < mpf("1e-8")


def test_series_nonconvergence_is_diagnosed(flat_series_field):
    # crossover region: neither plain convergence nor the stall certificate
    with pytest.raises(NonConvergedError):
        flat_series_field.value_series(mpf("0.2"))


def test_time_one_reproduction_via_translation_time(hyperbolic, hyperbolic_series_field):
    _field, f1, _ = hyperbolic
    xi = hyperbolic_series_field
    for x in (mpf("0.2"), mpf("0.5")):
        tau = translation_time(xi, x, f1.eval(x))
        assert abs(tau - 1) < mpf("1e-12")


def test_translation_time_closed_form(hyperbolic_series_field):
    tau = translation_time(hyperbolic_series_field, mpf("0.25"), mpf("0.5"))
    assert abs(tau - mpmath.log(3)) < mpf("1e-30")
    assert translation_time(hyperbolic_series_field, mpf("0.3"), mpf("0.3")) == 0
    # antisymmetry
    back = translation_time(hyperbolic_series_field, mpf("0.5"), mpf("0.25"))
    assert abs(back + mpmath.log(3)) < mpf("1e-30")


def test_classification_flow(hyperbolic):
    _field, f1, fs2 = hyperbolic
    c = classify_pair(f1, fs2, mpf("1e-30"))
    assert c.variant == "FLOW"
    assert abs(c.alpha - mpmath.sqrt(2)) < mpf("1e-12")


def test_classification_reciprocity(hyperbolic):
    _field, f1, fs2 = hyperbolic
    a = classify_pair(f1, fs2, mpf("1e-30")).alpha
    b = classify_pair(fs2, f1, mpf("1e-30")).alpha
    assert abs(a * b - 1) < mpf("1e-10")


def test_classification_cyclic():
    _field, (f3, g2) = fixture("hyperbolic", times=(3, 2))
    c = classify_pair(f3, g2, mpf("1e-30"))
    assert c.variant == "CYCLIC"
    assert (c.p, c.q) == (2, 3)
    assert c.r * c.q + c.s * c.p == 1
    h3 = PowerDiffeo(c.h, 3)
    assert ck_dist(h3, f3, 0, samples=33) < mpf("1e-10")
    h2 = PowerDiffeo(c.h, 2)
    assert ck_dist(h2, g2, 0, samples=33) < mpf("1e-10")


def test_classification_identity_and_half_identity():
    ident = IdentityDiffeo((0, 1))
    c = classify_pair(ident, ident, mpf("1e-20"))
    assert c.variant == "IDENTITY"
    f = logistic_time_map(1)
    c = classify_pair(f, IdentityDiffeo((0, 1)), mpf("1e-20"))
    assert c.variant == "CYCLIC" and (c.p, c.q) == (0, 1)
    c = classify_pair(IdentityDiffeo((0, 1)), f, mpf("1e-20"))
    assert c.variant == "CYCLIC" and (c.p, c.q) == (1, 0)


def test_classification_rejects_noncommuting():
    from commdiff.maps import ExprDiffeo

    f = ExprDiffeo(parse_map("x^2", (0, 1)), check=False)
    g = ExprDiffeo(parse_map("x+x*(1-x)/2", (0, 1)), check=False)
    with pytest.raises(PairPreconditionError):
        classify_pair(f, g, mpf("1e-10"))


def test_classification_degenerate_interior_flat_point():
    from commdiff.maps import ExprDiffeo

    src = "x+flat((x-0.5)^2)*x^2*(1-x)^2/100"
    f = ExprDiffeo(parse_map(src, (0, 1), flat_kind="identity"), check=False)
    c = classify_pair(f, f, mpf("1e-20"))
    assert c.variant == "DEGENERATE"
    assert abs(c.witness - mpf("0.5")) < mpf("1e-20")


def test_tau_agreement_across_components():
    # two hyperbolic bumps: field x(1-2x)... use a two-component expression
    from commdiff.flow import FlowDiffeo

    field = ExprField(parse_map("x*(0.5-x)^2*(1-x)", (0, 1)))
    f = FlowDiffeo(field, 1, tol=mpf(2) ** -90)
    g = FlowDiffeo(field, mpmath.sqrt(2), tol=mpf(2) ** -90)
    c = classify_pair(f, g, mpf("1e-18"))
    assert c.variant == "FLOW"
    assert abs(c.alpha - mpmath.sqrt(2)) < mpf("1e-9")


def test_path_to_identity_flow(hyperbolic):
    _field, f1, fs2 = hyperbolic
    c = classify_pair(f1, fs2, mpf("1e-30"))
    for t in (mpf(0), mpf("0.25"), mpf("0.5"), mpf("0.75"), mpf(1)):
        pf, pg = path_to_identity(c, t)
        assert commutation_residual(pf, pg, 0, samples=17) < mpf("1e-12")
    pf0, pg0 = path_to_identity(c, mpf(0))
    assert pf0.displacement(mpf("0.3")) == 0
    pf1, pg1 = path_to_identity(c, mpf(1))
    assert ck_dist(pf1, f1, 0, samples=17) < mpf("1e-12")
    assert ck_dist(pg1, fs2, 0, samples=17) < mpf("1e-12")


def test_path_to_identity_cyclic():
    _field, (f3, g2) = fixture("hyperbolic", times=(3, 2))
    c = classify_pair(f3, g2, mpf("1e-30"))
    for t in (mpf(0), mpf("0.5"), mpf(1)):
        pf, pg = path_to_identity(c, t)
        assert commutation_residual(pf, pg, 0, samples=17) == 0
    pf1, pg1 = path_to_identity(c, mpf(1))
    assert ck_dist(pf1, f3, 0, samples=17) < mpf("1e-10")
    assert ck_dist(pg1, g2, 0, samples=17) < mpf("1e-10")


def test_classification_record_line(hyperbolic):
    _field, f1, fs2 = hyperbolic
    c = classify_pair(f1, fs2, mpf("1e-30"))
    line = c.record_line()
    assert line.startswith("variant=FLOW")
    assert "alpha=" in line and "tau_spread" in line
