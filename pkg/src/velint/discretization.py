"""Discretizations of the tangent bundle by finite curve segments.

A discretization assigns to each tangent vector ``v_q`` and step ``h`` the
curve ``t -> psi(h, t, v_q)`` for ``t`` in ``[alpha_minus(h), alpha_plus(h)]``;
its endpoints are the boundary maps.  Endpoint schedules are linear,
``alpha_plus = (1 - beta) h`` and ``alpha_minus = -beta h``, so ``beta = 0``
gives segments on ``[0, h]`` and ``beta = 1/2`` the centred ``[-h/2, h/2]``.

Two concrete families exist: :class:`LinearSegment` (straight lines
``q + t v``) and :class:`ExactSegment` (base curves of the Euler-Lagrange
flow).  :class:`SegmentDiscretization` wraps an arbitrary ``psi`` callback,
mostly so that broken discretizations can be fed to the validator.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .lagrangian import Array, FlowSolution, LagrangianSystem, TangentVector, _fd_jacobian

# FD steps used by the axiom validator
_T_STEP = 1e-5
_H_STEP = 1e-5


class ShootingError(RuntimeError):
    """Newton shooting for the inverse boundary map did not converge."""


@dataclass(frozen=True)
class EndpointSchedule:
    beta: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")

    def alpha_plus(self, h: float) -> float:
        return (1.0 - self.beta) * h

    def alpha_minus(self, h: float) -> float:
        return -self.beta * h

    @property
    def alpha_dot_plus(self) -> float:
        return 1.0 - self.beta

    @property
    def alpha_dot_minus(self) -> float:
        return -self.beta


@dataclass(frozen=True)
class BoundaryPair:
    q_minus: Array
    q_plus: Array


class SegmentDiscretization:
    """Generic discretization from a ``psi(h, t, q, v) -> q`` callback.

    Derived quantities (boundary Jacobians, segment tangents, the inverse of
    the boundary map) use finite differences and Newton iteration.
    """

    kind = "custom"

    def __init__(self, psi: Callable[[float, float, Array, Array], Array], beta: float = 0.0):
        self._psi = psi
        self.schedule = EndpointSchedule(beta)

    @property
    def beta(self) -> float:
        return self.schedule.beta

    def psi(self, h: float, t: float, x: TangentVector) -> Array:
        return np.atleast_1d(np.asarray(self._psi(h, t, x.q, x.v), dtype=float))

    def boundary_minus(self, h: float, x: TangentVector) -> Array:
        return self.psi(h, self.schedule.alpha_minus(h), x)

    def boundary_plus(self, h: float, x: TangentVector) -> Array:
        return self.psi(h, self.schedule.alpha_plus(h), x)

    def boundary_jacobians(self, h: float, x: TangentVector) -> tuple[Array, Array]:
        """``(d boundary_minus / d[q, v], d boundary_plus / d[q, v])``, each ``n x 2n``."""
        y = x.state
        Dm = _fd_jacobian(lambda s: self.boundary_minus(h, TangentVector.from_state(s)), y)
        Dp = _fd_jacobian(lambda s: self.boundary_plus(h, TangentVector.from_state(s)), y)
        return Dm, Dp

    def curve(self, h: float, x: TangentVector, ts) -> tuple[Array, Array]:
        """Tangent lift ``(psi, dpsi/dt)`` at parameters ``ts`` and its Jacobian in ``x``.

        Returns states of shape ``(K, 2n)`` and Jacobians ``(K, 2n, 2n)``.
        """
        ts = np.atleast_1d(np.asarray(ts, dtype=float))

        def lift(y, t):
            z = TangentVector.from_state(y)
            s = _T_STEP
            dq = (self.psi(h, t + s, z) - self.psi(h, t - s, z)) / (2 * s)
            return np.concatenate([self.psi(h, t, z), dq])

        y = x.state
        states = np.array([lift(y, t) for t in ts])
        jacs = np.array([_fd_jacobian(lambda s, t=t: lift(s, t), y) for t in ts])
        return states, jacs

    def inverse(self, h: float, q_plus, q_minus, max_iter: int = 30) -> TangentVector:
        """The tangent vector whose segment runs from ``q_minus`` to ``q_plus``."""
        if h <= 0:
            raise ValueError("the boundary map is only invertible for h > 0")
        qp = np.atleast_1d(np.asarray(q_plus, dtype=float))
        qm = np.atleast_1d(np.asarray(q_minus, dtype=float))
        w = (qp - qm) / h
        y = np.concatenate([qm + self.beta * h * w, w])
        target = np.concatenate([qp, qm])
        scale = 1.0 + np.linalg.norm(y)
        for _ in range(max_iter):
            x = TangentVector.from_state(y)
            R = np.concatenate([self.boundary_plus(h, x), self.boundary_minus(h, x)]) - target
            Dm, Dp = self.boundary_jacobians(h, x)
            dy = np.linalg.solve(np.vstack([Dp, Dm]), -R)
            y = y + dy
            if np.linalg.norm(dy) <= self._inverse_tol() * scale:
                return TangentVector.from_state(y)
        raise ShootingError(f"no tangent vector joins {qm} to {qp} in time {h}")

    def _inverse_tol(self) -> float:
        return 1e-13

    def attach(self, h: float, q_minus, w, max_iter: int = 30) -> Array:
        """Base point ``q`` such that the segment of ``(q, w)`` starts at ``q_minus``."""
        qm = np.atleast_1d(np.asarray(q_minus, dtype=float))
        w = np.atleast_1d(np.asarray(w, dtype=float))
        n = qm.size
        q = qm + self.beta * h * w
        for _ in range(max_iter):
            x = TangentVector(q, w)
            Dm, _ = self.boundary_jacobians(h, x)
            dq = np.linalg.solve(Dm[:, :n], -(self.boundary_minus(h, x) - qm))
            q = q + dq
            if np.linalg.norm(dq) <= self._inverse_tol() * (1.0 + np.linalg.norm(q)):
                return q
        raise ShootingError(f"cannot attach velocity {w} at segment start {qm}")

    def psi_map(self, h: float, x: TangentVector) -> BoundaryPair:
        """``Psi_h(v) = (boundary_plus, boundary_minus)`` as a :class:`BoundaryPair`."""
        return BoundaryPair(q_minus=self.boundary_minus(h, x), q_plus=self.boundary_plus(h, x))

    def to_config(self) -> dict:
        return {"kind": self.kind, "beta": self.beta}


class LinearSegment(SegmentDiscretization):
    """Straight segments ``psi(h, t, v_q) = q + t v``."""

    kind = "linear"

    def __init__(self, beta: float = 0.0):
        self.schedule = EndpointSchedule(beta)

    def __repr__(self):
        return f"LinearSegment(beta={self.beta})"

    def psi(self, h, t, x):
        return x.q + t * x.v

    def boundary_minus(self, h, x):
        return x.q - self.beta * h * x.v

    def boundary_plus(self, h, x):
        return x.q + (1.0 - self.beta) * h * x.v

    def boundary_jacobians(self, h, x):
        eye = np.eye(x.dim)
        return (np.hstack([eye, -self.beta * h * eye]),
                np.hstack([eye, (1.0 - self.beta) * h * eye]))

    def curve(self, h, x, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        n = x.dim
        states = np.array([np.concatenate([x.q + t * x.v, x.v]) for t in ts])
        jacs = np.empty((ts.size, 2 * n, 2 * n))
        eye = np.eye(n)
        for k, t in enumerate(ts):
            jacs[k] = np.block([[eye, t * eye], [np.zeros((n, n)), eye]])
        return states, jacs

    def inverse(self, h, q_plus, q_minus, max_iter=30):
        if h <= 0:
            raise ValueError("the boundary map is only invertible for h > 0")
        qp = np.atleast_1d(np.asarray(q_plus, dtype=float))
        qm = np.atleast_1d(np.asarray(q_minus, dtype=float))
        w = (qp - qm) / h
        return TangentVector((1.0 - self.beta) * qm + self.beta * qp, w)

    def attach(self, h, q_minus, w, max_iter=30):
        w = np.atleast_1d(np.asarray(w, dtype=float))
        return np.atleast_1d(np.asarray(q_minus, dtype=float)) + self.beta * h * w


class ExactSegment(SegmentDiscretization):
    """Segments traced by the Euler-Lagrange flow, ``psi(h, t, v) = base(F_t(v))``.

    Flow evaluations use dense output at tolerance ``tol``; Jacobians come from
    the variational equations integrated alongside.  Recently used flows are
    memoized per instance.
    """

    kind = "exact"
    _CACHE_SIZE = 64

    def __init__(self, system: LagrangianSystem, tol: float = 1e-10, beta: float = 0.0):
        if tol <= 0:
            raise ValueError("tol must be positive")
        self.system = system
        self.tol = float(tol)
        self.schedule = EndpointSchedule(beta)
        self._cache: OrderedDict = OrderedDict()

    def __repr__(self):
        return f"ExactSegment({self.system.name}, tol={self.tol}, beta={self.beta})"

    def to_config(self) -> dict:
        return {"kind": self.kind, "beta": self.beta, "tol": self.tol}

    def solution(self, h: float, x: TangentVector, t_lo=None, t_hi=None) -> FlowSolution:
        """Variational flow through ``x`` covering the segment ``[alpha_minus, alpha_plus]``."""
        # always cover the whole segment so that one integration serves every query on it
        lo = self.schedule.alpha_minus(h) if t_lo is None else min(t_lo, self.schedule.alpha_minus(h))
        hi = self.schedule.alpha_plus(h) if t_hi is None else max(t_hi, self.schedule.alpha_plus(h))
        lo, hi = lo + 0.0, hi + 0.0
        key = (lo, hi, x.state.tobytes())
        sol = self._cache.get(key)
        if sol is None:
            sol = FlowSolution(self.system, x.state, lo, hi, self.tol, variational=True)
            self._cache[key] = sol
            if len(self._cache) > self._CACHE_SIZE:
                self._cache.popitem(last=False)
        return sol

    def psi(self, h, t, x):
        if t == 0.0:
            return x.q.copy()
        n = x.dim
        return self.solution(h, x, t, t)(t)[:n]

    def boundary_minus(self, h, x):
        return self.psi(h, self.schedule.alpha_minus(h), x)

    def boundary_plus(self, h, x):
        return self.psi(h, self.schedule.alpha_plus(h), x)

    def boundary_jacobians(self, h, x):
        n = x.dim
        m = 2 * n
        sol = self.solution(h, x)
        ym, yp = sol([self.schedule.alpha_minus(h), self.schedule.alpha_plus(h)])
        Phi_m = ym[m:].reshape(m, m)
        Phi_p = yp[m:].reshape(m, m)
        return Phi_m[:n], Phi_p[:n]

    def curve(self, h, x, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        m = 2 * x.dim
        Y = self.solution(h, x, ts.min(), ts.max())(ts)
        return Y[:, :m], Y[:, m:].reshape(-1, m, m)

    def _inverse_tol(self) -> float:
        return max(1e-13, 1e-2 * self.tol)


def boundary_minus(d: SegmentDiscretization, h: float, x: TangentVector) -> Array:
    if h < 0:
        raise ValueError("h must be non-negative")
    return d.boundary_minus(h, x)


def boundary_plus(d: SegmentDiscretization, h: float, x: TangentVector) -> Array:
    if h < 0:
        raise ValueError("h must be non-negative")
    return d.boundary_plus(h, x)


def shooting_delta(d: SegmentDiscretization, h: float, pair: BoundaryPair) -> TangentVector:
    """Initial velocity (with base point) whose segment joins ``pair.q_minus`` to ``pair.q_plus``."""
    if h <= 0:
        raise ValueError("shooting requires h > 0")
    return d.inverse(h, pair.q_plus, pair.q_minus)


def discretization_from_config(cfg: dict, system: LagrangianSystem | None = None) -> SegmentDiscretization:
    cfg = dict(cfg)
    kind = cfg.pop("kind", "linear")
    beta = float(cfg.pop("beta", 0.0))
    if kind == "linear":
        if cfg:
            raise ValueError(f"unknown keys {sorted(cfg)} for a linear discretization")
        return LinearSegment(beta)
    if kind == "exact":
        tol = float(cfg.pop("tol", 1e-10))
        if cfg:
            raise ValueError(f"unknown keys {sorted(cfg)} for an exact discretization")
        if system is None:
            raise ValueError("an exact discretization needs a Lagrangian system")
        return ExactSegment(system, tol=tol, beta=beta)
    raise ValueError(f"unknown discretization kind {kind!r}")


@dataclass
class AxiomCheck:
    name: str
    passed: bool
    residual: float


@dataclass
class ValidationReport:
    checks: list[AxiomCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def residual(self, name: str) -> float:
        return max(c.residual for c in self.checks if c.name == name)


def validate_discretization(d: SegmentDiscretization, samples, tol: float = 1e-8) -> ValidationReport:
    """Numerically check the discretization axioms at ``samples = [(h, x), ...]``.

    Checked: ``alpha_plus - alpha_minus = h`` with both vanishing at 0 and
    ``alpha_dot_plus - alpha_dot_minus = 1`` ("schedule"); ``psi(h, 0, x) = q``
    ("psi_base"); ``dpsi/dt(h, 0, x) = v`` ("psi_velocity"); and
    ``d/dh boundary_pm at h = 0`` equal to ``alpha_dot_pm v`` ("boundary_derivative").
    """
    sch = d.schedule
    sched_res = max(abs(sch.alpha_plus(0.0)), abs(sch.alpha_minus(0.0)),
                    abs(sch.alpha_dot_plus - sch.alpha_dot_minus - 1.0))
    base_res, vel_res, bnd_res = 0.0, 0.0, 0.0
    for h, x in samples:
        sched_res = max(sched_res, abs(sch.alpha_plus(h) - sch.alpha_minus(h) - h))
        base_res = max(base_res, float(np.max(np.abs(d.psi(h, 0.0, x) - x.q))))
        s = _T_STEP
        dpsi = (d.psi(h, s, x) - d.psi(h, -s, x)) / (2 * s)
        vel_res = max(vel_res, float(np.max(np.abs(dpsi - x.v))))
    for _, x in samples:
        s = _H_STEP
        for bmap, adot in ((d.boundary_plus, sch.alpha_dot_plus), (d.boundary_minus, sch.alpha_dot_minus)):
            deriv = (-3 * bmap(0.0, x) + 4 * bmap(s, x) - bmap(2 * s, x)) / (2 * s)
            bnd_res = max(bnd_res, float(np.max(np.abs(deriv - adot * x.v))))
    checks = [AxiomCheck("schedule", sched_res <= tol, sched_res),
              AxiomCheck("psi_base", base_res <= tol, base_res),
              AxiomCheck("psi_velocity", vel_res <= tol, vel_res),
              AxiomCheck("boundary_derivative", bnd_res <= tol, bnd_res)]
    return ValidationReport(checks)
