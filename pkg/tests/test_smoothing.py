import random

import mpmath
import pytest
from mpmath import mpf

from commdiff.analysis import cheb_grid, ck_norm
from commdiff.fixtures import fixture
from commdiff.maps import parse_map
from commdiff.smoothing import (NiceX0NotFoundError, PsiMap,
                                PsiNotMonotoneError, SmoothedField,
                                build_smoothed, find_nice_x0, iterate_signed,
                                rho_ck_norm, rho_jet, rho_value,
                                verify_smallness)
from commdiff.szekeres import SzekeresField

DELTA = mpf("0.5")


@pytest.fixture(scope="module")
def flat_setup():
    field, (f, g) = fixture("flat_boundary", tol=mpf(2) ** -90)
    xi = SzekeresField(f, rel_tol=mpf(2) ** -80)
    nice = find_nice_x0(f, xi, DELTA, 3, mpf("0.2"))
    smooth = build_smoothed(xi, f, nice.x0, 3, table_nodes=97)
    return field, f, xi, nice, smooth


def test_rho_is_a_smooth_step():
    assert rho_value(mpf(-1)) == 0
    assert rho_value(mpf(0)) == 0
    assert rho_value(mpf(2)) == 1
    assert rho_jet(mpf(0), 6).is_zero()
    mid = rho_value(mpf("0.5"))
    assert abs(mid - mpf("0.5")) < mpf("1e-70")  # symmetric step
    assert rho_value(mpf("0.2")) < rho_value(mpf("0.8"))
    assert rho_ck_norm(2) > 1


def test_find_nice_x0_flat(flat_setup):
    _field, f, xi, nice, _smooth = flat_setup
    assert nice.x0 <= mpf("0.2")
    assert nice.bound_lhs <= nice.bound_rhs
    assert f.displacement(nice.x0) != 0
    lo, hi = nice.window
    assert lo < nice.x0 < hi


def test_find_nice_x0_rejects_hyperbolic(hyperbolic):
    _field, f1, _ = hyperbolic
    xi = SzekeresField(f1)
    with pytest.raises(NiceX0NotFoundError):
        find_nice_x0(f1, xi, DELTA, 2, mpf("0.2"), j_max=12)


def test_find_nice_x0_oscillating(oscillating):
    _field, f, _g = oscillating
    xi = SzekeresField(f)
    nice = find_nice_x0(f, xi, DELTA, 3, mpf("0.05"))
    assert f.displacement(nice.x0) != 0
    assert nice.bound_lhs <= nice.bound_rhs


def test_psi_compressor_shape():
    psi = PsiMap(mpf("0.01"), mpf("0.0099"))
    assert abs(psi.eval(mpf(0)) - mpf("0.0099")) == 0
    assert psi.eval(mpf("0.01")) == mpf("0.01")
    assert psi.eval(mpf("0.5")) == mpf("0.5")  # identity above x0
    assert psi.min_slope_sampled(256) > 0
    mid = psi.eval(mpf("0.005"))
    assert mpf("0.0099") < mid < mpf("0.01")


def test_psi_rejects_wide_window():
    with pytest.raises(PsiNotMonotoneError):
        PsiMap(mpf("0.01"), mpf("0.004"))
    with pytest.raises(PsiNotMonotoneError):
        PsiMap(mpf("0.01"), mpf(0))


def test_alpha_anchors_and_seam(flat_setup):
    _field, _f, xi, nice, smooth = flat_setup
    k = smooth.k
    for i in range(k + 1):
        anchor = smooth.alpha_value(i, smooth.x0)
        ref = xi.eval_jet(smooth.x0, k).derivative(k - i)
        assert abs(anchor - ref) <= abs(ref) * mpf("1e-30") + mpf(2) ** -240
    left = smooth.local_jet(smooth.x0, k, -1)
    right = smooth.local_jet(smooth.x0, k, +1)
    scale = max(right.max_abs_coeff(), mpf(2) ** -200)
    for a, b in zip(left.coeffs, right.coeffs):
        assert abs(a - b) <= scale * mpf("1e-10")


def test_smoothed_field_flat_at_zero(flat_setup):
    *_rest, smooth = flat_setup
    assert smooth.eval_jet(mpf(0), 8).is_zero()
    assert smooth.eval(mpf(0)) == 0


def test_smoothed_equals_field_above_x0(flat_setup):
    field, _f, xi, _nice, smooth = flat_setup
    assert smooth.xi is xi
    x = smooth.x0 * mpf("1.5")
    assert smooth.eval(x) == xi.eval(x)


def test_alpha_chain_bound(flat_setup):
    # |alpha_i| <= (i+1) |f(x0)-x0|^{1-delta} on [0, x0]
    _field, _f, _xi, nice, smooth = flat_setup
    M = nice.displacement ** (1 - nice.delta)
    for x in cheb_grid(0, smooth.x0, 64):
        for i in range(smooth.k + 1):
            assert abs(smooth.alpha_value(i, x)) <= (i + 1) * M * (1 + mpf("1e-15"))


def test_smallness_report(flat_setup):
    _field, f, _xi, nice, smooth = flat_setup
    rep = verify_smallness(smooth, f, mpf("1e-6"), nice, samples=64)
    assert rep.passed
    assert rep.measured <= rep.theoretical  # the proof's bound dominates
    bad = verify_smallness(smooth, f, mpf(0), nice, samples=16)
    assert not bad.passed


def test_smallness_window_inequality(flat_setup):
    # on [x0, f^{+-2}(x0)] the new field is the old one, bounded by the
    # window inequality itself
    _field, f, xi, nice, smooth = flat_setup
    hi = iterate_signed(f, smooth.x0, 2, +1)
    measured = ck_norm(smooth, smooth.k, (smooth.x0, hi), samples=33)
    assert measured <= nice.bound_rhs * (1 + mpf("1e-10"))


def test_flow_agreement_above_window(flat_setup):
    # time-t maps of the interpolated field match the original flow there
    from commdiff.flow import flow_value

    field, f, _xi, _nice, smooth = flat_setup
    x1 = iterate_signed(f, smooth.x0, 1, +1)
    for xs in (x1 * mpf("1.1"), mpf("0.5"), mpf("0.9")):
        for t in (mpf("0.5"), mpf(1)):
            a = flow_value(smooth, t, xs, tol=mpf(2) ** -90)
            b = flow_value(field, t, xs, tol=mpf(2) ** -90)
            assert abs(a - b) < mpf("1e-20")


def test_zeros_scan_flags_flat_zero():
    # a synthetic interpolated-like field with a genuinely flat interior zero
    field, (f, _g) = fixture("flat_boundary", tol=mpf(2) ** -90)
    xi = SzekeresField(f, rel_tol=mpf(2) ** -80)
    nice = find_nice_x0(f, xi, DELTA, 2, mpf("0.2"))
    smooth = build_smoothed(xi, f, nice.x0, 2, table_nodes=65)
    zeros = smooth.zeros_below_x0(samples=128)
    assert all(c != "FLAT" for _z, c in zeros)  # the honest build has none


def test_affine_rescale_conjugation():
    from commdiff.maps import AffineConjDiffeo
    from commdiff.fixtures import logistic_time_map

    f = logistic_time_map(1)
    conj = AffineConjDiffeo(f, mpf("0.125"))
    x = mpf("0.4")
    hb = lambda y: (1 - mpf("0.125")) * y + mpf("0.125")
    assert abs(hb(conj.eval(x)) - f.eval(hb(x))) < mpf(2) ** -245
    assert abs(conj.inverse_value(conj.eval(x)) - x) < mpf(2) ** -240
    jet = conj.eval_jet(x, 2)
    h = mpf(2) ** -70
    fd = (conj.eval(x + h) - conj.eval(x - h)) / (2 * h)
    assert abs(jet.coeffs[1] - fd) < mpf("1e-30")
