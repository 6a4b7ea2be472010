import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from velint import (ExactSegment, LinearSegment, contact_order_estimate, fiber_legendre, harmonic,
                    legendre, make_family, reference_flow, to_qq)
from velint.discrete_lagrangian import derivatives_at, family_from_config
from velint.fitting import fit_loglog, geometric_grid

from conftest import tv
from strategies import beta, coord, step_size


def test_left_rectangle_value(osc):
    dl = make_family(osc, LinearSegment(0.0), "left_rectangle", a=2.0)
    assert dl.eval(0.1, tv(0.0, 1.0)) == pytest.approx(0.07, abs=1e-15)


@pytest.mark.parametrize("family", ["left_rectangle", "midpoint", "trapezoid", "exact"])
def test_every_family_vanishes_at_zero(osc, family):
    dl = make_family(osc, LinearSegment(0.0), family)
    assert dl.eval(0.0, tv(0.3, 0.2)) == 0.0
    # blown-up value is continuous with L at h = 0
    assert dl.hat(0.0, tv(0.3, 0.2)) == pytest.approx(0.5 * 0.04 - 0.5 * 0.09)


def test_exact_action_harmonic(osc):
    dl = make_family(osc, LinearSegment(0.0), "exact", tol=1e-11)
    # integral of cos(2t)/2 over [0, 0.1]
    assert dl.eval(0.1, tv(0.0, 1.0)) == pytest.approx(0.25 * np.sin(0.2), abs=1e-9)


def test_legendre_examples(osc):
    qq = to_qq(make_family(osc, LinearSegment(0.0), "left_rectangle"))
    pair = legendre(qq, 0.1, [0.1], [0.0])
    assert (pair.f_plus[0], pair.f_minus[0]) == pytest.approx((1.0, 1.0), abs=1e-13)
    qq2 = to_qq(make_family(osc, LinearSegment(0.0), "left_rectangle", a=2.0))
    pair = legendre(qq2, 0.1, [0.1], [0.0])
    assert (pair.f_plus[0], pair.f_minus[0]) == pytest.approx((1.2, 1.2), abs=1e-13)
    pair = legendre(qq, 0.1, [1.0], [1.0])
    assert (pair.f_plus[0], pair.f_minus[0]) == pytest.approx((0.0, 0.1), abs=1e-13)


def test_legendre_rejects_nonpositive_h(osc):
    qq = to_qq(make_family(osc, LinearSegment(0.0), "midpoint"))
    with pytest.raises(ValueError):
        legendre(qq, 0.0, [1.0], [1.0])


@given(st.floats(-1, 1), st.floats(-1, 1), step_size)
def test_legendre_difference_closed_form(qm, qp, h):
    from velint import curved_oscillator
    # g = 1 + q^2, V = q^2/2: f_plus - f_minus = -h V'(q-) + g'(q-) (q+ - q-)^2 / (2h)
    qq = to_qq(make_family(curved_oscillator(), LinearSegment(0.0), "left_rectangle"))
    pair = legendre(qq, h, [qp], [qm])
    expected = -h * qm + 2 * qm * (qp - qm) ** 2 / (2 * h)
    assert pair.f_plus[0] - pair.f_minus[0] == pytest.approx(expected, rel=1e-9, abs=1e-12)


@given(coord, coord, step_size, st.floats(-10, 10))
def test_a_term_shifts_legendre_by_a_h(q, v, h, a):
    from velint import curved_oscillator
    sys = curved_oscillator()
    base = make_family(sys, LinearSegment(0.0), "left_rectangle")
    x = tv(q, v)
    qp, qm = LinearSegment(0.0).boundary_plus(h, x), x.q
    p0 = legendre(to_qq(base), h, qp, qm)
    pa = legendre(to_qq(base.with_a(a)), h, qp, qm)
    assert pa.f_plus[0] - p0.f_plus[0] == pytest.approx(a * h, abs=1e-13 * (1 + abs(a)))
    assert pa.f_minus[0] - p0.f_minus[0] == pytest.approx(a * h, abs=1e-13 * (1 + abs(a)))


@given(coord, coord, beta)
def test_to_qq_composed_with_boundary_map_is_identity(q, v, b):
    osc = harmonic()
    d = LinearSegment(b)
    dl = make_family(osc, d, "trapezoid")
    x, h = tv(q, v), 0.1
    qq = to_qq(dl)
    assert qq.eval(h, d.boundary_plus(h, x), d.boundary_minus(h, x)) == pytest.approx(dl.eval(h, x), abs=1e-12)


@pytest.mark.parametrize("b", [0.0, 0.5])
def test_exact_legendre_equals_endpoint_momenta(pend, b):
    # generating-function identity: F+ is the momentum at the end of the arc, F- at its start
    d = ExactSegment(pend, 1e-12, b)
    dl = make_family(pend, d, "exact", tol=1e-12)
    x, h = tv(0.4, 0.9), 0.3
    dp, dm = derivatives_at(dl, h, x)
    start = reference_flow(pend, x, -b * h, tol=1e-13)
    end = reference_flow(pend, x, (1 - b) * h, tol=1e-13)
    assert dp[0] == pytest.approx(fiber_legendre(pend, end)[0], abs=1e-9)
    assert -dm[0] == pytest.approx(fiber_legendre(pend, start)[0], abs=1e-9)


@pytest.mark.parametrize("family", ["left_rectangle", "midpoint", "trapezoid"])
@pytest.mark.parametrize("b", [0.0, 0.5])
def test_consistency_with_h_times_lagrangian(curved, family, b):
    dl = make_family(curved, LinearSegment(b), family)
    x = tv(0.6, -0.8)
    hs = geometric_grid(0.1, 7, 0.3)
    diffs = [abs(dl.eval(h, x) - h * curved.L(x.q, x.v)) for h in hs]
    fit = fit_loglog(hs, diffs)
    # rules whose single node is the base point reproduce h L exactly
    assert (fit.degenerate and max(diffs) < 1e-15) or fit.slope >= 2 - 0.1


def test_contact_order_examples(osc):
    hs = geometric_grid(0.1, 8)
    exact = make_family(osc, LinearSegment(0.0), "exact", tol=1e-12)
    mid = make_family(osc, LinearSegment(0.0), "midpoint")
    rep = contact_order_estimate(mid, exact, [tv(0.0, 1.0)], hs)
    assert rep.slope == pytest.approx(3.0, abs=0.2)
    lr = make_family(osc, LinearSegment(0.0), "left_rectangle")
    rep = contact_order_estimate(lr, exact, [tv(1.0, 1.0)], hs)
    assert rep.slope == pytest.approx(2.0, abs=0.2) and rep.order == 1
    assert contact_order_estimate(lr, lr, [tv(1.0, 1.0)], hs).degenerate


def test_midpoint_left_rectangle_analytic_difference(osc):
    # midpoint vs exact at (0, 1): h^3/12 - h^3/3 + ..., so the ratio tends to a constant
    exact = make_family(osc, LinearSegment(0.0), "exact", tol=1e-13)
    mid = make_family(osc, LinearSegment(0.0), "midpoint")
    x = tv(0.0, 1.0)
    for h in (0.02, 0.01):
        exact_value = 0.25 * np.sin(2 * h)
        assert exact.eval(h, x) == pytest.approx(exact_value, abs=1e-13)
        mid_value = h * (0.5 - 0.5 * (h / 2) ** 2)
        assert mid.eval(h, x) == pytest.approx(mid_value, abs=1e-16)


@pytest.mark.parametrize("family, b, claimed", [
    ("left_rectangle", 0.0, 1), ("midpoint", 0.0, 1), ("midpoint", 0.5, 2), ("trapezoid", 0.5, 2),
    ("left_rectangle", 0.5, 2), ("exact", 0.0, None)])
def test_claimed_contact_order(osc, family, b, claimed):
    assert make_family(osc, LinearSegment(b), family).claimed_contact_order == claimed


def test_family_validation(osc):
    with pytest.raises(ValueError):
        make_family(osc, LinearSegment(), "simpson")
    with pytest.raises(ValueError):
        make_family(osc, LinearSegment(), "midpoint", a=1.0)
    with pytest.raises(ValueError):
        family_from_config({"family": "midpoint", "tol": 1e-3}, osc, LinearSegment())
    assert family_from_config({"family": "left_rectangle", "a": 2}, osc, LinearSegment()).a == 2.0


def test_user_family_matches_builtin(osc):
    d = LinearSegment(0.0)
    user = make_family(osc, d, "user", user_eval=lambda h, q, v: h * (0.5 * v @ v - 0.5 * q @ q))
    lr = make_family(osc, d, "left_rectangle")
    x = tv(0.3, 0.7)
    assert user.eval(0.1, x) == pytest.approx(lr.eval(0.1, x), abs=1e-15)
    np.testing.assert_allclose(user.hat_grad(0.1, x), lr.hat_grad(0.1, x), atol=1e-8)
