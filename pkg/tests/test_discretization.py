import numpy as np
import pytest
from hypothesis import given

from velint import (ExactSegment, TangentVector, LinearSegment, SegmentDiscretization, boundary_minus, boundary_plus,
                    free, harmonic, reference_flow, shooting_delta, validate_discretization)
from velint.discretization import BoundaryPair, EndpointSchedule, discretization_from_config
from velint.fitting import fit_loglog, geometric_grid

from conftest import tv
from strategies import beta, coord, step_size


def test_linear_boundary_examples():
    assert boundary_minus(LinearSegment(0.0), 0.1, tv(2.0, 3.0))[0] == 2.0
    assert boundary_plus(LinearSegment(0.0), 0.1, tv(2.0, 3.0))[0] == pytest.approx(2.3)
    assert boundary_minus(LinearSegment(0.5), 0.2, tv(1.0, 1.0))[0] == pytest.approx(0.9)


@pytest.mark.parametrize("d", [LinearSegment(0.0), LinearSegment(0.5), ExactSegment(harmonic(), 1e-10, 0.5)])
def test_boundaries_collapse_at_zero(d):
    x = tv(0.4, -2.0)
    assert boundary_minus(d, 0.0, x)[0] == 0.4
    assert boundary_plus(d, 0.0, x)[0] == 0.4


def test_negative_h_rejected():
    with pytest.raises(ValueError):
        boundary_plus(LinearSegment(), -0.1, tv(0.0, 1.0))


def test_exact_boundary_plus_follows_flow():
    d = ExactSegment(harmonic(), tol=1e-10)
    assert boundary_plus(d, 0.1, tv(0.0, 1.0))[0] == pytest.approx(np.sin(0.1), abs=1e-9)


def test_schedule_rejects_beta_outside_unit_interval():
    with pytest.raises(ValueError):
        EndpointSchedule(1.5)


@given(coord, coord, step_size, beta)
def test_linear_segment_spans_h_v(q, v, h, b):
    d = LinearSegment(b)
    x = tv(q, v)
    assert d.boundary_plus(h, x)[0] - d.boundary_minus(h, x)[0] == pytest.approx(h * v, abs=1e-15)


@given(coord, coord, step_size, beta)
def test_linear_inverse_round_trip(q, v, h, b):
    d = LinearSegment(b)
    x = tv(q, v)
    back = d.inverse(h, d.boundary_plus(h, x), d.boundary_minus(h, x))
    np.testing.assert_allclose(back.state, x.state, atol=1e-12)


@given(coord, coord, step_size)
def test_exact_shooting_round_trip(q, v, h):
    d = ExactSegment(harmonic(), tol=1e-11, beta=0.5)
    x = tv(q, v)
    back = shooting_delta(d, h, d.psi_map(h, x))
    np.testing.assert_allclose(back.state, x.state, atol=1e-8)


def test_shooting_examples():
    d = ExactSegment(harmonic(), tol=1e-11)
    out = shooting_delta(d, 0.1, BoundaryPair(q_minus=np.array([0.0]), q_plus=np.array([np.sin(0.1)])))
    np.testing.assert_allclose(out.state, [0.0, 1.0], atol=1e-8)
    out = shooting_delta(ExactSegment(free()), 0.5, BoundaryPair(np.array([0.0]), np.array([1.0])))
    np.testing.assert_allclose(out.state, [0.0, 2.0], atol=1e-10)
    out = shooting_delta(d, 0.3, BoundaryPair(np.array([0.0]), np.array([0.0])))
    np.testing.assert_allclose(out.v, [0.0], atol=1e-12)


def test_attach_places_segment_start():
    d = ExactSegment(harmonic(), tol=1e-11, beta=0.5)
    q = d.attach(0.2, [0.3], [0.8])
    assert d.boundary_minus(0.2, tv(q, 0.8))[0] == pytest.approx(0.3, abs=1e-12)


def test_validate_linear_and_exact():
    samples = [(h, tv(q, v)) for h in (0.05, 0.1) for q, v in ((0.0, 1.0), (1.0, -0.5))]
    rep = validate_discretization(LinearSegment(0.0), samples)
    assert rep.passed
    assert max(c.residual for c in rep.checks) < 1e-8
    assert validate_discretization(ExactSegment(harmonic(), 1e-10, 0.5), samples, tol=1e-6).passed


def test_validate_flags_planted_defect():
    broken = SegmentDiscretization(lambda h, t, q, v: q + t * v + h)
    rep = validate_discretization(broken, [(0.1, tv(0.0, 1.0))])
    assert not rep.passed
    assert "psi_base" in rep.failures()


def test_exact_boundaries_approach_linear_quadratically(pend):
    x = tv(0.7, 0.4)
    exact, linear = ExactSegment(pend, 1e-12, 0.0), LinearSegment(0.0)
    hs = geometric_grid(0.1, 7)
    diffs = [abs(exact.boundary_plus(h, x)[0] - linear.boundary_plus(h, x)[0]) for h in hs]
    assert fit_loglog(hs, diffs).slope >= 1.8


def test_exact_boundary_jacobian_matches_finite_differences(curved):
    d = ExactSegment(curved, 1e-12, 0.5)
    x, h = tv(0.5, 0.9), 0.2
    Dm, Dp = d.boundary_jacobians(h, x)
    s = 1e-6
    for j, e in enumerate(np.eye(2) * s):
        xp, xm = TangentVector.from_state(x.state + e), TangentVector.from_state(x.state - e)
        assert (d.boundary_plus(h, xp) - d.boundary_plus(h, xm))[0] / (2 * s) == pytest.approx(Dp[0, j], abs=1e-7)
        assert (d.boundary_minus(h, xp) - d.boundary_minus(h, xm))[0] / (2 * s) == pytest.approx(Dm[0, j], abs=1e-7)


def test_exact_psi_is_flow(curved):
    d = ExactSegment(curved, 1e-11, 0.0)
    x = tv(0.2, 1.1)
    ref = reference_flow(curved, x, 0.07, tol=1e-12)
    assert d.psi(0.1, 0.07, x)[0] == pytest.approx(ref.q[0], abs=1e-9)


def test_discretization_config(curved):
    assert isinstance(discretization_from_config({"kind": "linear", "beta": 0.5}), LinearSegment)
    d = discretization_from_config({"kind": "exact", "beta": 0.0, "tol": 1e-9}, curved)
    assert d.to_config() == {"kind": "exact", "beta": 0.0, "tol": 1e-9}
    with pytest.raises(ValueError):
        discretization_from_config({"kind": "spline"})
    with pytest.raises(ValueError):
        discretization_from_config({"kind": "exact"})
