import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from velint import (RegularityError, energy, euler_lagrange_accel, eval_lagrangian, fiber_legendre,
                    free, harmonic, mechanical_system, reference_flow)
from velint.systems import CoefficientFunction, mechanical_1d

from conftest import tv
from strategies import coord


def metric_only():
    # g(q) = 1 + q^2, V = 0
    return mechanical_1d(CoefficientFunction(poly=(1.0, 0.0, 1.0)), CoefficientFunction())


@pytest.mark.parametrize("sys_fn, x, expected", [
    (harmonic, (0.0, 0.0), 0.0),
    (harmonic, (0.0, 2.0), 2.0),
    (metric_only, (1.0, 1.0), 1.0),
])
def test_eval_lagrangian_examples(sys_fn, x, expected):
    assert eval_lagrangian(sys_fn(), tv(*x)) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("sys_fn, x, expected", [
    (harmonic, (1.0, 0.0), -1.0),
    (harmonic, (0.0, 5.0), 0.0),
    (metric_only, (1.0, 1.0), -0.5),
])
def test_accel_examples(sys_fn, x, expected):
    assert euler_lagrange_accel(sys_fn(), tv(*x))[0] == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("sys_fn, x, expected", [
    (harmonic, (0.7, 0.0), 0.0), (harmonic, (0.0, 2.0), 2.0), (metric_only, (1.0, 3.0), 6.0)])
def test_fiber_legendre_examples(sys_fn, x, expected):
    assert fiber_legendre(sys_fn(), tv(*x))[0] == pytest.approx(expected, abs=1e-14)


def test_singular_fiber_hessian_is_rejected():
    sys = mechanical_system(1, lambda q: np.array([[0.0]]), lambda q: np.zeros((1, 1, 1)),
                            lambda q: 0.0, lambda q: np.zeros(1))
    with pytest.raises(RegularityError):
        euler_lagrange_accel(sys, tv(0.0, 1.0))


@pytest.mark.parametrize("tol", [1e-6, 1e-8, 1e-10])
def test_reference_flow_harmonic_half_period(tol):
    out = reference_flow(harmonic(), tv(1.0, 0.0), np.pi, tol=tol)
    assert np.max(np.abs(out.state - [-1.0, 0.0])) <= 10 * tol


def test_reference_flow_zero_time_is_identity(curved):
    x = tv(0.3, -0.4)
    assert reference_flow(curved, x, 0.0) is x


def test_free_particle_flow_is_straight():
    out = reference_flow(free(), tv(0.0, 1.0), 2.0)
    np.testing.assert_allclose(out.state, [2.0, 1.0], atol=1e-12)


@given(coord, coord, st.floats(0.5, 10.0))
def test_energy_conserved_along_flow(q, v, t):
    from velint import curved_oscillator
    sys, tol = curved_oscillator(), 1e-9
    x = tv(q, v)
    e0 = energy(sys, x)
    assert abs(energy(sys, reference_flow(sys, x, t, tol)) - e0) <= 100 * tol * (1 + abs(e0))


@given(coord, coord, st.floats(0.1, 2.0), st.floats(0.1, 2.0))
def test_flow_composition(q, v, s, t):
    from velint import pendulum
    sys, tol = pendulum(), 1e-9
    x = tv(q, v)
    direct = reference_flow(sys, x, s + t, tol)
    composed = reference_flow(sys, reference_flow(sys, x, s, tol), t, tol)
    assert np.max(np.abs(direct.state - composed.state)) <= 100 * tol


@given(coord, coord)
def test_accel_solves_euler_lagrange(q, v):
    from velint import curved_oscillator
    sys = curved_oscillator()
    qa, va = np.array([q]), np.array([v])
    a = sys.accel(qa, va)
    resid = sys.fiber_hessian(qa, va) @ a + sys.mixed_hessian(qa, va) @ va - sys.dLdq(qa, va)
    assert np.max(np.abs(resid)) <= 1e-10 * (1 + np.max(np.abs(sys.dLdq(qa, va))))


@given(coord, coord)
def test_analytic_accel_jacobian_matches_finite_differences(q, v):
    from velint import curved_oscillator
    sys = curved_oscillator()
    qa, va = np.array([q]), np.array([v])
    Aq, Av = sys.accel_jacobian(qa, va)
    s = np.cbrt(np.finfo(float).eps) * max(1.0, abs(q))
    fd_q = (sys.accel(qa + s, va) - sys.accel(qa - s, va)) / (2 * s)
    s = np.cbrt(np.finfo(float).eps) * max(1.0, abs(v))
    fd_v = (sys.accel(qa, va + s) - sys.accel(qa, va - s)) / (2 * s)
    assert np.allclose(Aq, fd_q, rtol=1e-6, atol=1e-8)
    assert np.allclose(Av, fd_v, rtol=1e-6, atol=1e-8)


def test_multi_dimensional_harmonic_is_decoupled():
    sys = harmonic(omega=2.0, dim=3)
    x = tv([1.0, 0.0, -0.5], [0.0, 1.0, 0.0])
    out = reference_flow(sys, x, 0.3, tol=1e-11)
    q_exact = x.q * np.cos(0.6) + x.v / 2.0 * np.sin(0.6)
    np.testing.assert_allclose(out.q, q_exact, atol=1e-10)
