import mpmath
import pytest
from mpmath import mpf

from commdiff.analysis import (DisplacementMap, MapCompose, MapDiff, ck_norm,
                               commutation_residual, fixed_points, invert_at,
                               iterate)
from commdiff.fixtures import fixture, logistic_time_map, logistic_value
from commdiff.jets import jet_compose
from commdiff.maps import (BlendDiffeo, DomainError, ExprDiffeo, IdentityDiffeo,
                           PowerDiffeo, parse_map)


def test_parse_map_fields():
    m = parse_map("x*(1-x)", (0, 1))
    jet = m.eval_jet(mpf(0), 2)
    assert jet.coeffs == (mpf(0), mpf(1), mpf(-1))
    flat = parse_map("flat(x)*(1-x)^2", (0, 1), declared_flat_at={"left"})
    assert flat.eval_jet(mpf(0), 8).is_zero()


def test_declared_flat_identity_kind():
    m = parse_map("x", (0, 1), declared_flat_at={"left"}, flat_kind="identity")
    jet = m.eval_jet(mpf(0), 3)
    assert jet.coeffs == (mpf(0), mpf(1), mpf(0), mpf(0))


def test_domain_enforced():
    m = parse_map("x", (0, 1))
    with pytest.raises(DomainError):
        m.eval(mpf(2))


def test_identity_diffeo():
    f = IdentityDiffeo((0, 1))
    assert f.eval(mpf("0.3")) == mpf("0.3")
    assert f.displacement(mpf("0.7")) == 0
    assert iterate(f, mpf("0.5"), 10) == mpf("0.5")


def test_logistic_time_map_round_trips():
    f = logistic_time_map(1)
    x = mpf("0.25")
    assert abs(f.eval(x) - logistic_value(1, x)) < mpf(2) ** -250
    y = f.eval(x)
    assert abs(f.inverse_value(y) - x) < mpf(2) ** -248
    # endpoints fixed exactly
    assert f.eval(mpf(0)) == 0
    assert f.eval(mpf(1)) == 1


def test_invert_at_examples():
    ident = IdentityDiffeo((0, 1))
    assert invert_at(ident, mpf("0.3")) == mpf("0.3")
    f = logistic_time_map(1)
    assert abs(invert_at(f, f.eval(mpf("0.25"))) - mpf("0.25")) < mpf(2) ** -248
    sq = ExprDiffeo(parse_map("x^2", (0, 1)), check=False)
    assert abs(invert_at(sq, mpf("0.49")) - mpf("0.7")) < mpf(2) ** -248


def test_iterate_modes():
    f = logistic_time_map(1)
    x = mpf("0.25")
    assert iterate(f, x, 0) == x
    plus = iterate(f, x, 1, "plus")
    minus = iterate(f, x, 1, "minus")
    assert abs(plus - logistic_value(1, x)) < mpf("1e-60")
    assert abs(minus - logistic_value(-1, x)) < mpf("1e-60")
    assert abs(iterate(f, x, 3) - logistic_value(3, x)) < mpf("1e-55")


def test_power_and_compose_diffeos():
    f = logistic_time_map(1)
    g = logistic_time_map(2)
    h = PowerDiffeo(f, 3)
    x = mpf("0.3")
    assert abs(h.eval(x) - logistic_value(3, x)) < mpf("1e-55")
    fg = MapCompose(f, g)
    assert abs(fg.eval(x) - logistic_value(3, x)) < mpf("1e-55")
    jet = fg.eval_jet(x, 2)
    direct = logistic_time_map(3).eval_jet(x, 2)
    for a, b in zip(jet.coeffs, direct.coeffs):
        assert abs(a - b) < mpf("1e-50")


def test_blend_diffeo_between_identity_and_map():
    h = logistic_time_map(1)
    b0 = BlendDiffeo(h, 0)
    b1 = BlendDiffeo(h, 1)
    x = mpf("0.4")
    assert b0.eval(x) == x
    assert abs(b1.eval(x) - h.eval(x)) == 0
    bmid = BlendDiffeo(h, mpf("0.5"))
    assert abs(bmid.eval(x) - (x + h.eval(x)) / 2) == 0
    y = bmid.eval(x)
    assert abs(bmid.inverse_value(y) - x) < mpf(2) ** -245


def test_orientation_check():
    f = logistic_time_map(1)
    assert f.orientation_check(64) > 0


def test_ck_norm_basics():
    const = parse_map("0.5", (0, 1))
    assert ck_norm(const, 3, samples=17) == mpf("0.5")
    sq = parse_map("x^2", (0, 1))
    assert abs(ck_norm(sq, 2, samples=33) - 2) == 0
    m = parse_map("sin(x)", (0, mpmath.pi))
    assert abs(ck_norm(m, 1, samples=65) - 1) < mpf("1e-6")


def test_ck_norm_monotone_in_k_and_interval():
    m = parse_map("sin(x)*exp(x)", (0, 1))
    n1 = ck_norm(m, 1, (mpf(0), mpf("0.5")), samples=33)
    n2 = ck_norm(m, 2, (mpf(0), mpf("0.5")), samples=33)
    n3 = ck_norm(m, 2, (mpf(0), mpf(1)), samples=33)
    assert n1 <= n2 <= n3


def test_commutation_residual_flow_pair(hyperbolic):
    _field, f1, fs2 = hyperbolic
    r = commutation_residual(f1, fs2, 0, samples=17)
    assert r < mpf("1e-40")
    ident = IdentityDiffeo((0, 1))
    assert commutation_residual(ident, f1, 0, samples=17) == 0


def test_commutation_residual_detects_noncommuting():
    f = ExprDiffeo(parse_map("x^2", (0, 1)), check=False)
    g = ExprDiffeo(parse_map("x+x*(1-x)/2", (0, 1)), check=False)
    r = commutation_residual(f, g, 0, samples=33)
    assert r > mpf("0.01")


def test_fixed_points_logistic(hyperbolic):
    _field, f1, _ = hyperbolic
    rep = fixed_points(f1, resolution=256)
    assert [p for p, _c in rep.points] == [mpf(0), mpf(1)]
    assert [c for _p, c in rep.points] == [1, 1]
    assert len(rep.components) == 1
    a, b, sign = rep.components[0]
    assert (a, b, sign) == (mpf(0), mpf(1), 1)
    assert not rep.low_confidence


def test_fixed_points_identity():
    rep = fixed_points(IdentityDiffeo((0, 1)), resolution=64)
    assert rep.low_confidence  # degenerate: whole domain fixed
    assert rep.components == []


def test_fixed_points_flat_fixture(flat_boundary):
    _field, f1, _ = flat_boundary
    rep = fixed_points(f1, resolution=256)
    assert rep.points[0] == (mpf(0), "FLAT")
    assert rep.points[-1][0] == mpf(1)
    assert rep.points[-1][1] == 2


def test_fixed_points_oscillating_zero_variant():
    field, (f1,) = fixture("oscillating", lift=False, times=(1,), tol=mpf(2) ** -80)
    rep = fixed_points(f1, resolution=512)
    locs = [p for p, _ in rep.points]
    # zeros at 1/n inside the resolved range, each of contact order 2
    for n in (2, 3, 4):
        target = mpf(1) / n
        hit = min(locs, key=lambda z: abs(z - target))
        assert abs(hit - target) < mpf("1e-30")
        contact = dict(rep.points)[hit]
        assert contact == 2
    assert rep.low_confidence  # zeros accumulate at 0 below the grid floor


def test_displacement_map_accuracy(flat_boundary):
    field, f1, _ = flat_boundary
    x = mpf("0.05")
    disp = DisplacementMap(f1)
    jet = disp.eval_jet(x, 2)
    # value channel carries the tiny displacement at full relative accuracy
    assert jet.coeffs[0] > 0
    assert abs(jet.coeffs[0] / field.eval(x) - 1) < mpf("1e-3")


def test_formula_L_of_composition(hyperbolic):
    # L(h∘g) = Lh∘g · Dg + Lg, with L = D log D, checked from jets
    _field, f1, fs2 = hyperbolic

    def L_jet(dif, x):
        j = dif.eval_jet(x, 2)
        return 2 * j.coeffs[2] / j.coeffs[1]

    comp = MapCompose(f1, fs2)
    for xs in ("0.2", "0.55", "0.8"):
        x = mpf(xs)
        gx = fs2.eval(x)
        dg = fs2.eval_jet(x, 1).coeffs[1]
        lhs_jet = comp.eval_jet(x, 2)
        lhs = 2 * lhs_jet.coeffs[2] / lhs_jet.coeffs[1]
        rhs = L_jet(f1, gx) * dg + L_jet(fs2, x)
        assert abs(lhs - rhs) < mpf("1e-45")
