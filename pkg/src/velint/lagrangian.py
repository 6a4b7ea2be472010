"""Continuous Lagrangian systems on R^n and their Euler-Lagrange flow.

A :class:`LagrangianSystem` bundles ``L(q, v)`` with its first derivatives
and (optionally) the second derivatives needed to solve for accelerations.
All callbacks take and return plain numpy arrays of shape ``(n,)`` or
``(n, n)``.  :func:`reference_flow` integrates the Euler-Lagrange vector
field with an adaptive embedded Runge-Kutta pair (DOP853) and is used as the
exactness oracle throughout the package.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

Array = np.ndarray

#: condition-number guard for the fiber Hessian
REGULARITY_COND = 1e12

_FD_STEP = np.cbrt(np.finfo(float).eps)


class RegularityError(ValueError):
    """The fiber Hessian is singular (or numerically so) at a queried point."""


class FlowError(RuntimeError):
    """The Euler-Lagrange flow could not be integrated to the requested time."""


def _as_vector(x, name: str) -> Array:
    a = np.atleast_1d(np.asarray(x, dtype=float))
    if a.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


@dataclass(frozen=True, eq=False)
class TangentVector:
    """A velocity ``v`` attached at base point ``q``."""

    q: Array
    v: Array

    def __post_init__(self):
        q = _as_vector(self.q, "q")
        v = _as_vector(self.v, "v")
        if q.shape != v.shape:
            raise ValueError(f"dim(q)={q.size} != dim(v)={v.size}")
        q.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "v", v)

    @property
    def dim(self) -> int:
        return self.q.size

    @property
    def state(self) -> Array:
        """Concatenation ``[q, v]``."""
        return np.concatenate([self.q, self.v])

    @classmethod
    def from_state(cls, y) -> "TangentVector":
        y = np.asarray(y, dtype=float)
        n = y.size // 2
        return cls(y[:n], y[n:])

    def __repr__(self):
        return f"TangentVector(q={self.q.tolist()}, v={self.v.tolist()})"


@dataclass(frozen=True, eq=False)
class LagrangianSystem:
    """An autonomous Lagrangian ``L(q, v)`` on ``R^n x R^n``.

    ``dLdq`` and ``dLdv`` are required.  ``d2Ldv2`` (fiber Hessian) and
    ``d2Ldqdv`` (``[i, j] = d^2 L / dv_i dq_j``) fall back to central finite
    differences of ``dLdv`` when omitted; ``hessian_is_fd`` flags that.
    ``accel_jacobian(q, v) -> (da/dq, da/dv)`` is optional and only speeds up
    variational equations.
    """

    dim: int
    L: Callable[[Array, Array], float]
    dLdq: Callable[[Array, Array], Array]
    dLdv: Callable[[Array, Array], Array]
    d2Ldv2: Optional[Callable[[Array, Array], Array]] = None
    d2Ldqdv: Optional[Callable[[Array, Array], Array]] = None
    accel_jacobian: Optional[Callable[[Array, Array], tuple]] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def hessian_is_fd(self) -> bool:
        return self.d2Ldv2 is None or self.d2Ldqdv is None

    def fiber_hessian(self, q: Array, v: Array) -> Array:
        if self.d2Ldv2 is not None:
            return np.atleast_2d(np.asarray(self.d2Ldv2(q, v), dtype=float))
        return _fd_jacobian(lambda w: self.dLdv(q, w), v)

    def mixed_hessian(self, q: Array, v: Array) -> Array:
        if self.d2Ldqdv is not None:
            return np.atleast_2d(np.asarray(self.d2Ldqdv(q, v), dtype=float))
        return _fd_jacobian(lambda p: self.dLdv(p, v), q)

    def accel(self, q: Array, v: Array) -> Array:
        """Euler-Lagrange acceleration on raw arrays (no dimension checks)."""
        H = self.fiber_hessian(q, v)
        if np.linalg.cond(H) > REGULARITY_COND:
            raise RegularityError(f"fiber Hessian singular at q={q}, v={v}")
        rhs = np.asarray(self.dLdq(q, v), dtype=float) - self.mixed_hessian(q, v) @ v
        return np.linalg.solve(H, rhs)

    def accel_jac(self, q: Array, v: Array) -> tuple[Array, Array]:
        if self.accel_jacobian is not None:
            Aq, Av = self.accel_jacobian(q, v)
            return np.atleast_2d(Aq), np.atleast_2d(Av)
        return _fd4_jacobian(lambda p: self.accel(p, v), q), _fd4_jacobian(lambda w: self.accel(q, w), v)

    def energy(self, q: Array, v: Array) -> float:
        return float(np.dot(self.dLdv(q, v), v) - self.L(q, v))


def _fd_jacobian(f: Callable[[Array], Array], x: Array) -> Array:
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        s = _FD_STEP * max(1.0, abs(x[j]))
        e = np.zeros_like(x)
        e[j] = s
        cols.append((np.atleast_1d(f(x + e)) - np.atleast_1d(f(x - e))) / (2 * s))
    return np.column_stack(cols)


def _fd4_jacobian(f: Callable[[Array], Array], x: Array) -> Array:
    # fourth-order central stencil; truncation ~s^4, round-off ~eps/s
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        s = 1e-3 * max(1.0, abs(x[j]))
        e = np.zeros_like(x)
        e[j] = s
        fp1, fm1 = np.atleast_1d(f(x + e)), np.atleast_1d(f(x - e))
        fp2, fm2 = np.atleast_1d(f(x + 2 * e)), np.atleast_1d(f(x - 2 * e))
        cols.append((8 * (fp1 - fm1) - (fp2 - fm2)) / (12 * s))
    return np.column_stack(cols)


def _check_dim(sys: LagrangianSystem, x: TangentVector) -> None:
    if x.dim != sys.dim:
        raise ValueError(f"state has dimension {x.dim}, system has {sys.dim}")


def eval_lagrangian(sys: LagrangianSystem, x: TangentVector) -> float:
    _check_dim(sys, x)
    return float(sys.L(x.q, x.v))


def fiber_legendre(sys: LagrangianSystem, x: TangentVector) -> Array:
    """Fiber derivative ``FL(v_q) = dL/dv``."""
    _check_dim(sys, x)
    return np.atleast_1d(np.asarray(sys.dLdv(x.q, x.v), dtype=float))


def euler_lagrange_accel(sys: LagrangianSystem, x: TangentVector) -> Array:
    """Solve ``F2L a = dL/dq - d2L/dqdv v`` for the acceleration ``a``."""
    _check_dim(sys, x)
    return sys.accel(x.q, x.v)


def energy(sys: LagrangianSystem, x: TangentVector) -> float:
    _check_dim(sys, x)
    return sys.energy(x.q, x.v)


def _solver_tols(tol: float) -> tuple[float, float]:
    # tighter than `tol` so that the global error over O(10) time units stays near tol;
    # DOP853 refuses rtol below 100 eps
    rtol = max(0.1 * tol, 2.5e-14)
    return rtol, 0.1 * tol


def _el_rhs(sys: LagrangianSystem):
    n = sys.dim

    def rhs(t, y):
        return np.concatenate([y[n:], sys.accel(y[:n], y[n:])])

    return rhs


def _variational_rhs(sys: LagrangianSystem):
    n = sys.dim
    m = 2 * n

    def rhs(t, y):
        q, v = y[:n], y[n:m]
        Phi = y[m:].reshape(m, m)
        Aq, Av = sys.accel_jac(q, v)
        dPhi = np.vstack([Phi[n:], Aq @ Phi[:n] + Av @ Phi[n:]])
        return np.concatenate([v, sys.accel(q, v), dPhi.ravel()])

    return rhs


class FlowSolution:
    """Dense output of the Euler-Lagrange flow from ``x0`` over ``[t_lo, t_hi]``.

    Calling the object with a time (or array of times) returns states
    ``[q, v]``; with ``variational=True`` the flattened Jacobian
    ``d(state_t)/d(state_0)`` follows each state.
    """

    def __init__(self, sys: LagrangianSystem, y0: Array, t_lo: float, t_hi: float,
                 tol: float, variational: bool = False):
        if tol <= 0:
            raise ValueError("tol must be positive")
        self.sys = sys
        self.variational = variational
        self.t_lo, self.t_hi = float(t_lo), float(t_hi)
        m = 2 * sys.dim
        if variational:
            y0 = np.concatenate([y0, np.eye(m).ravel()])
            rhs = _variational_rhs(sys)
        else:
            rhs = _el_rhs(sys)
        self._y0 = y0
        self._pieces = []
        for t_end in (self.t_hi, self.t_lo):
            if t_end == 0.0:
                continue
            self._pieces.append((t_end, _integrate(rhs, y0, t_end, tol)))

    def __call__(self, t) -> Array:
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        ts = np.atleast_1d(t)
        out = np.empty((ts.size, self._y0.size))
        for i, ti in enumerate(ts):
            if ti == 0.0:
                out[i] = self._y0
                continue
            for t_end, sol in self._pieces:
                if (t_end > 0) == (ti > 0) and abs(ti) <= abs(t_end) * (1 + 1e-12):
                    out[i] = sol(ti)
                    break
            else:
                raise ValueError(f"t={ti} outside integrated range [{self.t_lo}, {self.t_hi}]")
        return out[0] if scalar else out


def _integrate(rhs, y0: Array, t_end: float, tol: float):
    rtol, atol = _solver_tols(tol)
    try:
        res = solve_ivp(rhs, (0.0, t_end), y0, method="DOP853", rtol=rtol, atol=atol,
                        dense_output=True)
    except RegularityError:
        raise
    except (ValueError, FloatingPointError) as exc:
        raise FlowError(str(exc)) from exc
    if res.status != 0:
        raise FlowError(f"flow integration failed at t={res.t[-1]:.6g}: {res.message}")
    return res.sol


def flow_solution(sys: LagrangianSystem, x0: TangentVector, t_lo: float, t_hi: float,
                  tol: float = 1e-10, variational: bool = False) -> FlowSolution:
    _check_dim(sys, x0)
    if not t_lo <= 0.0 <= t_hi:
        raise ValueError("the interval must contain t=0")
    return FlowSolution(sys, x0.state, t_lo, t_hi, tol, variational)


def reference_flow(sys: LagrangianSystem, x0: TangentVector, t: float,
                   tol: float = 1e-10) -> TangentVector:
    """The Euler-Lagrange flow ``F_t(x0)``; ``t`` may be negative."""
    _check_dim(sys, x0)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if t == 0:
        return x0
    y = _integrate(_el_rhs(sys), x0.state, float(t), tol)(float(t))
    return TangentVector.from_state(y)


def mechanical_system(dim: int, M: Callable, dM: Callable, V: Callable, dV: Callable,
                      name: str = "mechanical", params: Optional[dict] = None,
                      accel_jacobian: Optional[Callable] = None) -> LagrangianSystem:
    """``L = 1/2 v^T M(q) v - V(q)``.

    ``dM(q)`` returns an ``(n, n, n)`` array with ``dM[i, j, k] = dM_ij/dq_k``.
    """

    def L(q, v):
        return 0.5 * v @ np.atleast_2d(M(q)) @ v - float(V(q))

    def dLdq(q, v):
        return 0.5 * np.einsum("i,ijk,j->k", v, np.asarray(dM(q)).reshape(dim, dim, dim), v) \
            - np.atleast_1d(dV(q))

    def dLdv(q, v):
        return np.atleast_2d(M(q)) @ v

    def d2Ldv2(q, v):
        return np.atleast_2d(M(q))

    def d2Ldqdv(q, v):
        return np.einsum("ijk,j->ik", np.asarray(dM(q)).reshape(dim, dim, dim), v)

    return LagrangianSystem(dim=dim, L=L, dLdq=dLdq, dLdv=dLdv, d2Ldv2=d2Ldv2,
                            d2Ldqdv=d2Ldqdv, accel_jacobian=accel_jacobian, name=name,
                            params=dict(params or {}))
