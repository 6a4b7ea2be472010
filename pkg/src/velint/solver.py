"""Discrete Euler-Lagrange solvers.

:func:`step` advances a tangent vector by solving the discrete Euler-Lagrange
equations in ``Q x Q`` coordinates and mapping the answer back through the
inverse boundary map.  :func:`step_tq` solves the same critical-point problem
directly on ``TQ x TQ`` with Lagrange multipliers for the joining constraint;
it is independent of the inverse boundary map and serves as a cross-check.
:func:`step_blownup` solves the desingularized principle, which stays
regular through ``h = 0``.

Newton unknowns are always velocity-scaled (``(q2 - q1) / h`` rather than
``q2``) and residuals momentum-scaled, so that a fixed absolute tolerance
means the same thing for every step size.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import null_space

from .discrete_lagrangian import DiscreteLagrangianQQ, DiscreteLagrangianTQ, derivatives_at, to_qq
from .lagrangian import Array, RegularityError, TangentVector

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """Newton iteration failed; typically ``h`` is outside the existence neighborhood."""


@dataclass(frozen=True)
class NewtonSettings:
    tol: float = 1e-11
    max_iter: int = 50
    damping: float = 0.5
    max_halvings: int = 30

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("newton tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0.0 < self.damping < 1.0:
            raise ValueError("damping must lie in (0, 1)")

    @classmethod
    def from_config(cls, cfg: dict) -> "NewtonSettings":
        return cls(tol=float(cfg.get("newton_tol", 1e-11)), max_iter=int(cfg.get("max_iter", 50)),
                   damping=float(cfg.get("damping", 0.5)))

    def to_config(self) -> dict:
        return {"newton_tol": self.tol, "max_iter": self.max_iter, "damping": self.damping}


DEFAULT_SETTINGS = NewtonSettings()


@dataclass
class CriticalTriple:
    h: float
    v: TangentVector
    v_tilde: TangentVector
    residual_norm: float
    iterations: int = 0


@dataclass
class BlownUpSolution:
    h: float
    q_bar: Array
    z: Array
    v: TangentVector
    v_tilde: TangentVector
    residual_norm: float
    multipliers: Array
    iterations: int = 0

    @property
    def gap(self) -> float:
        """``|v - v_tilde|`` on the concatenated ``[q, v]`` states."""
        return float(np.linalg.norm(self.v.state - self.v_tilde.state))


def _fd_jac(F: Callable[[Array], Array], x: Array, f0: Optional[Array] = None) -> Array:
    cols = []
    for j in range(x.size):
        s = 1e-7 * max(1.0, abs(x[j]))
        e = np.zeros_like(x)
        e[j] = s
        cols.append((F(x + e) - F(x - e)) / (2 * s))
    return np.column_stack(cols)


def newton(F: Callable[[Array], Array], x0: Array, settings: NewtonSettings,
           floor: float = 0.0, what: str = "Newton") -> tuple[Array, float, int]:
    """Damped Newton with backtracking and a finite-difference Jacobian.

    Converged when ``|F| <= settings.tol``.  ``floor`` is the residual level
    below which noise in ``F`` (e.g. from flow tolerances) makes further
    progress impossible; once backtracking stalls there, the iterate is
    accepted.
    """
    x = np.array(x0, dtype=float)
    f = F(x)
    r = float(np.linalg.norm(f))
    for it in range(settings.max_iter):
        if r <= settings.tol:
            return x, r, it
        J = _fd_jac(F, x)
        try:
            if np.linalg.cond(J) > 1e14:
                raise np.linalg.LinAlgError("ill-conditioned")
            dx = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError as exc:
            raise RegularityError(f"{what}: singular Newton matrix ({exc})") from exc
        lam = 1.0
        for _ in range(settings.max_halvings):
            x_new = x + lam * dx
            f_new = F(x_new)
            r_new = float(np.linalg.norm(f_new))
            if r_new < (1 - 1e-4 * lam) * r:
                break
            lam *= settings.damping
        else:
            if r <= max(floor, settings.tol):
                return x, r, it
            raise ConvergenceError(f"{what}: line search stalled at residual {r:.3e}")
        x, f, r = x_new, f_new, r_new
        if r > settings.tol and r <= floor and np.linalg.norm(lam * dx) <= 1e-14 * (1 + np.linalg.norm(x)):
            return x, r, it + 1
    if r <= max(floor, settings.tol):
        return x, r, settings.max_iter
    raise ConvergenceError(f"{what}: no convergence in {settings.max_iter} iterations "
                           f"(residual {r:.3e}); outside existence neighborhood, reduce h")


def _noise_floor(dl: DiscreteLagrangianTQ) -> float:
    # residual level set by flow/quadrature tolerances of flow-based constructions
    if dl.family == "exact" or dl.discretization.kind == "exact":
        return 1e3 * dl.tol
    return 0.0


def del_residual(dlqq: DiscreteLagrangianQQ, h: float, q0, q1, q2) -> Array:
    """``F- L_h(q2, q1) - F+ L_h(q1, q0)``; zero iff ``(q0, q1, q2)`` is critical."""
    if h <= 0:
        raise ValueError("the discrete Euler-Lagrange equations need h > 0")
    q0, q1, q2 = (np.atleast_1d(np.asarray(q, dtype=float)) for q in (q0, q1, q2))
    return -dlqq.d_minus(h, q2, q1) - dlqq.d_plus(h, q1, q0)


def _solve_del(left: DiscreteLagrangianQQ, momentum: Array, h: float, q1: Array,
               w_guess: Array, settings: NewtonSettings, floor: float) -> tuple[Array, float, int]:
    """Solve ``F- L_h(q1 + h w, q1) = momentum`` for ``w``."""

    def F(w):
        return -left.d_minus(h, q1 + h * w, q1) - momentum

    w, r, it = newton(F, w_guess, settings, floor, what="discrete Euler-Lagrange")
    return q1 + h * w, r, it


def _check_h(h: float) -> None:
    if h <= 0:
        raise ValueError("step needs h > 0; use step_blownup for h = 0")


def step(dl: DiscreteLagrangianTQ, h: float, v: TangentVector,
         settings: NewtonSettings = DEFAULT_SETTINGS) -> CriticalTriple:
    """Discrete evolution ``v -> v_tilde`` via the ``Q x Q`` discrete Euler-Lagrange equations.

    The Newton iteration is seeded at the identity (``v_tilde = v``), which is
    the exact solution of the blown-up problem at ``h = 0``.
    """
    _check_h(h)
    d = dl.discretization
    q1 = d.boundary_plus(h, v)
    p_plus, _ = derivatives_at(dl, h, v)
    q2, r, it = _solve_del(to_qq(dl), p_plus, h, q1, v.v.copy(), settings, _noise_floor(dl))
    return CriticalTriple(h, v, d.inverse(h, q2, q1), r, it)


def step_qq(dlqq: DiscreteLagrangianQQ, h: float, q1, q0,
            settings: NewtonSettings = DEFAULT_SETTINGS, floor: float = 0.0) -> Array:
    """Standard ``Q x Q`` evolution ``(q1, q0) -> q2``."""
    _check_h(h)
    q0 = np.atleast_1d(np.asarray(q0, dtype=float))
    q1 = np.atleast_1d(np.asarray(q1, dtype=float))
    p_plus = dlqq.d_plus(h, q1, q0)
    q2, _, _ = _solve_del(dlqq, p_plus, h, q1, (q1 - q0) / h, settings, floor)
    return q2


def step_tq(dl: DiscreteLagrangianTQ, h: float, v: TangentVector,
            settings: NewtonSettings = DEFAULT_SETTINGS) -> CriticalTriple:
    """Discrete evolution from the constrained principle on ``TQ x TQ``.

    With multipliers ``lam_m, mu, lam_p`` the critical point satisfies
    ``dL_h(v) = lam_m dB-(v) + mu dB+(v)``,
    ``dL_h(v~) = lam_p dB+(v~) - mu dB-(v~)`` and ``B+(v) = B-(v~)``.
    The first equation fixes ``mu``; Newton then solves for ``v~`` and
    ``nu = (lam_p - mu) / h``.
    """
    _check_h(h)
    d = dl.discretization
    n = v.dim
    Dm, Dp = d.boundary_jacobians(h, v)
    mult = np.linalg.solve(np.vstack([Dm, Dp]).T, dl.grad(h, v))
    mu = mult[n:]
    q_join = d.boundary_plus(h, v)

    def F(X):
        vt = TangentVector(X[:n], X[n:2 * n])
        nu = X[2 * n:]
        Dm_t, Dp_t = d.boundary_jacobians(h, vt)
        lam_p = mu + h * nu
        stationarity = (dl.grad(h, vt) + mu @ Dm_t - lam_p @ Dp_t) / h
        joining = (q_join - d.boundary_minus(h, vt)) / h
        return np.concatenate([stationarity, joining])

    q_guess = d.attach(h, q_join, v.v)
    x_guess = TangentVector(q_guess, v.v)
    X0 = np.concatenate([x_guess.state, dl.hat_grad(h, x_guess)[:n]])
    X, r, it = newton(F, X0, settings, _noise_floor(dl), what="TQ critical point")
    return CriticalTriple(h, v, TangentVector(X[:n], X[n:2 * n]), r, it)


def trajectory(dl: DiscreteLagrangianTQ, h: float, v0: TangentVector, nsteps: int,
               settings: NewtonSettings = DEFAULT_SETTINGS) -> list[CriticalTriple]:
    """Iterate :func:`step`; consecutive segments join, ``B+(v_k) = B-(v_{k+1})``."""
    if nsteps < 0:
        raise ValueError("nsteps must be non-negative")
    out: list[CriticalTriple] = []
    v = v0
    for k in range(nsteps):
        try:
            tri = step(dl, h, v, settings)
        except (ConvergenceError, RegularityError) as exc:
            raise type(exc)(f"step {k}: {exc}") from exc
        out.append(tri)
        v = tri.v_tilde
    return out


def final_state(traj: list[CriticalTriple], v0: TangentVector) -> TangentVector:
    return traj[-1].v_tilde if traj else v0


def blowup_coordinates(dl: DiscreteLagrangianTQ, h: float, v: TangentVector,
                       v_tilde: TangentVector) -> tuple[Array, Array]:
    """``(q_bar, z)`` of a pair of joined tangent vectors.

    ``q_bar`` is the midpoint of the outer endpoints and ``z`` half their
    difference divided by ``h`` (at ``h = 0``: the mean velocity).
    """
    d = dl.discretization
    if h == 0.0:
        return 0.5 * (v.q + v_tilde.q), 0.5 * (v.v + v_tilde.v)
    outer_plus, outer_minus = d.boundary_plus(h, v_tilde), d.boundary_minus(h, v)
    return 0.5 * (outer_plus + outer_minus), (outer_plus - outer_minus) / (2 * h)


def _blowup_constraints(dl: DiscreteLagrangianTQ, h: float, vv: TangentVector,
                        vt: TangentVector) -> tuple[Array, Array]:
    """Values and Jacobian (in ``[v, v~]``) of joining, ``q_bar`` and ``z`` constraints."""
    d = dl.discretization
    n = vv.dim
    if h == 0.0:
        eye, zero = np.eye(n), np.zeros((n, n))
        vals = np.concatenate([vv.q - vt.q, 0.5 * (vv.q + vt.q), 0.5 * (vv.v + vt.v)])
        J = np.block([[eye, zero, -eye, zero],
                      [0.5 * eye, zero, 0.5 * eye, zero],
                      [zero, 0.5 * eye, zero, 0.5 * eye]])
        return vals, J
    Dm_v, Dp_v = d.boundary_jacobians(h, vv)
    Dm_t, Dp_t = d.boundary_jacobians(h, vt)
    bp_v, bm_v = d.boundary_plus(h, vv), d.boundary_minus(h, vv)
    bp_t, bm_t = d.boundary_plus(h, vt), d.boundary_minus(h, vt)
    vals = np.concatenate([bp_v - bm_t, 0.5 * (bp_t + bm_v), (bp_t - bm_v) / (2 * h)])
    J = np.block([[Dp_v, -Dm_t], [0.5 * Dm_v, 0.5 * Dp_t], [-Dm_v / (2 * h), Dp_t / (2 * h)]])
    return vals, J


def step_blownup(dl: DiscreteLagrangianTQ, h: float, q_bar, z,
                 settings: NewtonSettings = DEFAULT_SETTINGS) -> BlownUpSolution:
    """Critical point of the desingularized principle at ``(h, q_bar, z)``.

    Objective ``L_h(v)/h + L_h(v~)/h`` (``L(v) + L(v~)`` at ``h = 0``) under
    ``B+(v) = B-(v~)``, ``(B+(v~) + B-(v)) / 2 = q_bar`` and
    ``(B+(v~) - B-(v)) / (2h) = z``.  At ``h = 0`` the solution is
    ``v = v~ = z`` attached at ``q_bar``.
    """
    if h < 0:
        raise ValueError("h must be non-negative")
    q_bar = np.atleast_1d(np.asarray(q_bar, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    n = q_bar.size
    target = np.concatenate([np.zeros(n), q_bar, z])

    def split(X):
        return (TangentVector(X[:n], X[n:2 * n]), TangentVector(X[2 * n:3 * n], X[3 * n:4 * n]),
                X[4 * n:])

    def F(X):
        vv, vt, lam = split(X)
        vals, J = _blowup_constraints(dl, h, vv, vt)
        grad = np.concatenate([dl.hat_grad(h, vv), dl.hat_grad(h, vt)])
        return np.concatenate([grad - J.T @ lam, vals - target])

    x0 = TangentVector(q_bar, z)
    _, J0 = _blowup_constraints(dl, h, x0, x0)
    g0 = np.concatenate([dl.hat_grad(h, x0), dl.hat_grad(h, x0)])
    lam0 = np.linalg.lstsq(J0.T, g0, rcond=None)[0]
    X0 = np.concatenate([x0.state, x0.state, lam0])
    X, r, it = newton(F, X0, settings, _noise_floor(dl), what="blown-up principle")
    vv, vt, lam = split(X)
    return BlownUpSolution(h, q_bar, z, vv, vt, r, lam, it)


def second_variation(dl: DiscreteLagrangianTQ, sol: BlownUpSolution) -> Array:
    """Hessian of the blown-up objective along the constraint set, parametrized by the velocity of ``v``.

    At ``h = 0`` this is ``F2L(v) + F2L(v~)``.
    """
    h, n = sol.h, sol.v.dim
    lam = sol.multipliers

    def lagr_grad(Y):
        vv, vt = TangentVector(Y[:n], Y[n:2 * n]), TangentVector(Y[2 * n:3 * n], Y[3 * n:])
        _, J = _blowup_constraints(dl, h, vv, vt)
        return np.concatenate([dl.hat_grad(h, vv), dl.hat_grad(h, vt)]) - J.T @ lam

    Y = np.concatenate([sol.v.state, sol.v_tilde.state])
    H = _fd_jac(lagr_grad, Y)
    H = 0.5 * (H + H.T)
    _, J = _blowup_constraints(dl, h, sol.v, sol.v_tilde)
    B = null_space(J)
    N = B @ np.linalg.inv(B[n:2 * n])
    return N.T @ H @ N
