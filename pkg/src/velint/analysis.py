"""Empirical convergence studies: error-order fits, the ``a h`` term, swap symmetry.

Every study evaluates independent ``(h, state)`` points, optionally in
parallel through joblib.  Results are assembled in grid order, so the
parallel and sequential paths give identical numbers.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from joblib import Parallel, delayed

from .discrete_lagrangian import DiscreteLagrangianTQ, derivatives_at, to_qq
from .fitting import LogLogFit, fit_loglog, geometric_grid
from .lagrangian import Array, FlowError, RegularityError, TangentVector, reference_flow
from .solver import (DEFAULT_SETTINGS, ConvergenceError, NewtonSettings, _noise_floor,
                     _solve_del, step, trajectory)

__all__ = ["OrderReport", "SymmetryReport", "ATermReport", "IdentityReport", "local_error_order",
           "global_error_order", "a_term_study", "mismatched_local_order", "symmetry_residual",
           "identity_limit", "sample_states", "fit_loglog", "geometric_grid", "DEFAULT_H_GRID"]

log = logging.getLogger(__name__)

DEFAULT_H_GRID = tuple(geometric_grid(0.1, 8))
REFERENCE_TOL = 1e-13
_STEP_FAILURES = (ConvergenceError, RegularityError, FlowError, np.linalg.LinAlgError)


def _map(fn: Callable, items: Sequence, parallel: bool) -> list:
    if not parallel or len(items) < 2:
        return [fn(x) for x in items]
    return Parallel(n_jobs=-1, prefer="processes")(delayed(fn)(x) for x in items)


def sample_states(dim: int, count: int, seed: int, q_box: float = 1.0,
                  v_box: float = 1.0) -> list[TangentVector]:
    """``count`` tangent vectors uniform in ``[-q_box, q_box]^n x [-v_box, v_box]^n``."""
    rng = np.random.default_rng(seed)
    q = rng.uniform(-q_box, q_box, size=(count, dim))
    v = rng.uniform(-v_box, v_box, size=(count, dim))
    return [TangentVector(qi, vi) for qi, vi in zip(q, v)]


@dataclass
class OrderReport:
    h_grid: Array
    errors: Array
    slope: float
    slope_ci: float
    discarded: list[int] = field(default_factory=list)
    degenerate: bool = False
    reason: str = ""
    failed: list[int] = field(default_factory=list)

    @classmethod
    def from_fit(cls, h_grid, errors, fit: LogLogFit, failed=()) -> "OrderReport":
        return cls(np.asarray(h_grid, float), np.asarray(errors, float), fit.slope, fit.ci,
                   list(fit.discarded), fit.degenerate, fit.reason, list(failed))

    def within(self, target: float, band: float) -> bool:
        return not self.degenerate and abs(self.slope - target) <= band


def _fit_errors(h_grid, errors, floor: float, failed) -> OrderReport:
    return OrderReport.from_fit(h_grid, errors, fit_loglog(h_grid, errors, floor=floor), failed)


def _error_floor(dl: DiscreteLagrangianTQ, scale: float) -> float:
    noise = _noise_floor(dl)
    return max(100 * np.finfo(float).eps * scale, 100 * dl.tol if noise else 0.0)


def _local_error(args):
    dl, h, v0, settings = args
    try:
        out = step(dl, h, v0, settings).v_tilde
    except _STEP_FAILURES as exc:
        log.warning("step failed at h=%g: %s", h, exc)
        return np.nan
    ref = reference_flow(dl.system, v0, h, tol=REFERENCE_TOL)
    return float(np.linalg.norm(out.state - ref.state))


def local_error_order(dl: DiscreteLagrangianTQ, v0: TangentVector, h_grid=DEFAULT_H_GRID,
                      settings: NewtonSettings = DEFAULT_SETTINGS,
                      parallel: bool = False) -> OrderReport:
    """One-step error ``|step(h, v0) - flow_h(v0)|`` over ``h_grid`` and its log-log slope.

    A method of order ``r`` shows slope ``r + 1``.  Errors below the noise
    floor of the construction are discarded; for the exact family all of
    them are, and the report is flagged degenerate.
    """
    h_grid = np.asarray(h_grid, dtype=float)
    errors = np.array(_map(_local_error, [(dl, h, v0, settings) for h in h_grid], parallel))
    failed = [i for i, e in enumerate(errors) if not np.isfinite(e)]
    return _fit_errors(h_grid, errors, _error_floor(dl, max(1.0, np.linalg.norm(v0.state))), failed)


def _global_error(args):
    dl, h, v0, nsteps, ref, settings = args
    try:
        traj = trajectory(dl, h, v0, nsteps, settings)
    except _STEP_FAILURES as exc:
        log.warning("trajectory failed at h=%g: %s", h, exc)
        return np.nan
    end = traj[-1].v_tilde if traj else v0
    return float(np.linalg.norm(end.state - ref.state))


def steps_for(T: float, h: float) -> int:
    n = int(round(T / h))
    if n < 1 or abs(n * h - T) > 1e-9 * max(1.0, abs(T)):
        raise ValueError(f"T={T} is not an integer multiple of h={h}")
    return n


def global_error_order(dl: DiscreteLagrangianTQ, v0: TangentVector, T: float = 1.0,
                       h_grid=DEFAULT_H_GRID, settings: NewtonSettings = DEFAULT_SETTINGS,
                       parallel: bool = False) -> OrderReport:
    """End-point error after ``T / h`` steps; slope ``r`` for an order-``r`` method.

    The rounding floor grows with the number of steps taken.
    """
    h_grid = np.asarray(h_grid, dtype=float)
    counts = [steps_for(T, h) for h in h_grid]
    ref = reference_flow(dl.system, v0, T, tol=REFERENCE_TOL)
    errors = np.array(_map(_global_error, [(dl, h, v0, n, ref, settings)
                                           for h, n in zip(h_grid, counts)], parallel))
    failed = [i for i, e in enumerate(errors) if not np.isfinite(e)]
    scale = max(1.0, np.linalg.norm(ref.state)) * max(counts)
    return _fit_errors(h_grid, errors, _error_floor(dl, scale), failed)


@dataclass
class ATermReport:
    h: float
    a_values: list[float]
    step_deviation: list[float]
    legendre_shift: list[float]
    legendre_deviation: list[float]

    @property
    def max_step_deviation(self) -> float:
        return max(self.step_deviation, default=0.0)

    @property
    def max_legendre_deviation(self) -> float:
        return max(self.legendre_deviation, default=0.0)


def a_term_study(dl: DiscreteLagrangianTQ, a_values, states: Sequence[TangentVector], h: float,
                 settings: NewtonSettings = DEFAULT_SETTINGS, parallel: bool = False) -> ATermReport:
    """Effect of the ``a h^2 sum(v)`` term on stepping and on the Legendre transforms.

    For each ``a``: ``step_deviation`` is the largest ``|v_tilde(a) - v_tilde(0)|``
    over ``states``; ``legendre_shift`` is the largest componentwise change of
    either discrete Legendre transform and ``legendre_deviation`` the largest
    departure of that change from ``a h``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if dl.family != "left_rectangle":
        raise ValueError("the a-term exists only for the left_rectangle family")
    base = dl.with_a(0.0)
    ref_steps = _map(lambda x: step(base, h, x, settings).v_tilde.state, list(states), parallel)
    ref_leg = [derivatives_at(base, h, x) for x in states]
    report = ATermReport(h, [float(a) for a in a_values], [], [], [])
    for a in report.a_values:
        dla = base.with_a(a)
        outs = _map(lambda x: step(dla, h, x, settings).v_tilde.state, list(states), parallel)
        report.step_deviation.append(max(float(np.max(np.abs(o - r))) for o, r in zip(outs, ref_steps)))
        shift, dev = 0.0, 0.0
        for x, (dp0, dm0) in zip(states, ref_leg):
            dp, dm = derivatives_at(dla, h, x)
            # F+ = d/dq+, F- = -d/dq-
            for delta in (dp - dp0, -(dm - dm0)):
                shift = max(shift, float(np.max(np.abs(delta))))
                dev = max(dev, float(np.max(np.abs(delta - a * h))))
        report.legendre_shift.append(shift)
        report.legendre_deviation.append(dev)
    return report


def _mismatched_step(dl_minus: DiscreteLagrangianTQ, dl_plus: DiscreteLagrangianTQ, h: float,
                     v: TangentVector, settings: NewtonSettings) -> TangentVector:
    # F- from dl_minus equated with F+ from dl_plus; private to the a-term study
    d = dl_minus.discretization
    q1 = d.boundary_plus(h, v)
    p_plus, _ = derivatives_at(dl_plus, h, v)
    q2, _, _ = _solve_del(to_qq(dl_minus), p_plus, h, q1, v.v.copy(), settings, _noise_floor(dl_minus))
    return d.inverse(h, q2, q1)


def mismatched_local_order(dl: DiscreteLagrangianTQ, a_plus: float, a_minus: float,
                           v0: TangentVector, h_grid=DEFAULT_H_GRID,
                           settings: NewtonSettings = DEFAULT_SETTINGS) -> OrderReport:
    """Local error order when the two Legendre transforms come from different ``a``."""
    dl_p, dl_m = dl.with_a(a_plus), dl.with_a(a_minus)
    h_grid = np.asarray(h_grid, dtype=float)
    errors = []
    for h in h_grid:
        try:
            out = _mismatched_step(dl_m, dl_p, h, v0, settings)
            ref = reference_flow(dl.system, v0, h, tol=REFERENCE_TOL)
            errors.append(float(np.linalg.norm(out.state - ref.state)))
        except _STEP_FAILURES as exc:
            log.warning("mismatched step failed at h=%g: %s", h, exc)
            errors.append(np.nan)
    failed = [i for i, e in enumerate(errors) if not np.isfinite(e)]
    return _fit_errors(h_grid, errors, _error_floor(dl, max(1.0, np.linalg.norm(v0.state))), failed)


@dataclass
class SymmetryReport:
    h_grid: Array
    residuals: Array
    slope: float
    slope_ci: float
    residual_at_zero: float
    discarded: list[int] = field(default_factory=list)
    degenerate: bool = False
    reason: str = ""


def swapped_action(dl: DiscreteLagrangianTQ, h: float, x: TangentVector, w_next: Array) -> float:
    """``(L_h(x) + L_h(x~)) / h`` where ``x~`` has velocity ``w_next`` and joins ``x``."""
    d = dl.discretization
    base_next = d.attach(h, d.boundary_plus(h, x), w_next) if h > 0 else x.q
    return dl.hat(h, x) + dl.hat(h, TangentVector(base_next, w_next))


def _swap_difference(dl, h, x, w_next) -> float:
    forward = swapped_action(dl, h, x, w_next)
    backward = swapped_action(dl, h, TangentVector(x.q, w_next), x.v)
    return abs(forward - backward)


def symmetry_residual(dl: DiscreteLagrangianTQ, states: Sequence[TangentVector],
                      h_grid=DEFAULT_H_GRID, settings: NewtonSettings = DEFAULT_SETTINGS,
                      parallel: bool = False) -> SymmetryReport:
    """Swap asymmetry of the two-segment blown-up action.

    The difference ``S(q, v, v~) - S(q, v~, v)`` is taken with ``v~`` the
    velocity that :func:`step` produces from ``(q, v)``; the largest value
    over ``states`` is fitted per ``h``.  At ``h = 0`` the step is the
    identity and the residual is exactly zero.
    """
    h_grid = np.asarray(h_grid, dtype=float)

    def at(h):
        worst = 0.0
        for x in states:
            w_next = step(dl, h, x, settings).v_tilde.v
            worst = max(worst, _swap_difference(dl, h, x, w_next))
        return worst

    residuals = np.array(_map(at, list(h_grid), parallel))
    at_zero = max(_swap_difference(dl, 0.0, x, x.v) for x in states)
    fit = fit_loglog(h_grid, residuals, floor=_error_floor(dl, 1.0))
    return SymmetryReport(h_grid, residuals, fit.slope, fit.ci, float(at_zero), fit.discarded,
                          fit.degenerate, fit.reason)


@dataclass
class IdentityReport:
    order: OrderReport
    per_state_slopes: list[float]
    constant: float


def identity_limit(dl: DiscreteLagrangianTQ, states: Sequence[TangentVector],
                   h_grid=DEFAULT_H_GRID, settings: NewtonSettings = DEFAULT_SETTINGS,
                   parallel: bool = False) -> IdentityReport:
    """``sup_states |step(h, v) - v|`` against ``h``; linear decay means the step tends to the identity.

    ``constant`` is the smallest ``C`` with ``|step(h, v) - v| <= C h`` on the samples.
    """
    h_grid = np.asarray(h_grid, dtype=float)

    def at(h):
        return [float(np.linalg.norm(step(dl, h, x, settings).v_tilde.state - x.state)) for x in states]

    table = np.array(_map(at, list(h_grid), parallel))
    sup = table.max(axis=1)
    order = _fit_errors(h_grid, sup, _error_floor(dl, 1.0), [])
    slopes = [fit_loglog(h_grid, table[:, j]).slope for j in range(table.shape[1])]
    return IdentityReport(order, slopes, float(np.max(sup / h_grid)))
