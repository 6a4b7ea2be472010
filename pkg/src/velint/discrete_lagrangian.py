"""Discrete Lagrangians on TQ and on Q x Q, and discrete Legendre transforms.

On ``TQ`` every built-in family is a quadrature rule for the action along a
segment of the discretization, ``L_h(v) = h * sum_k c_k L(gamma(t_k))`` where
``gamma(t) = (psi, dpsi/dt)`` is the tangent lift of the segment:

=================  =============================================  =========
family             nodes ``t_k`` (weights)                        extra
=================  =============================================  =========
left_rectangle     base point ``t = 0`` (1)                       ``a h^2 sum(v)``
midpoint           segment midpoint (1)
trapezoid          both segment endpoints (1/2, 1/2)
exact              Gauss-Legendre along the Euler-Lagrange flow
=================  =============================================  =========

The blown-up Lagrangian ``L_h / h`` is evaluated directly (no division), so
it extends to ``h = 0`` as ``L`` itself.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .discretization import ExactSegment, LinearSegment, SegmentDiscretization
from .fitting import LogLogFit, fit_loglog
from .lagrangian import Array, LagrangianSystem, TangentVector

FAMILIES = ("left_rectangle", "midpoint", "trapezoid", "exact", "user")

_GL_START = 8
_GL_MAX = 256


@dataclass(frozen=True, eq=False)
class DiscreteLagrangianTQ:
    """A discrete Lagrangian ``L_h`` on the tangent bundle.

    Built by :func:`make_family`.  ``eval``/``grad`` work on
    :class:`TangentVector` inputs; gradients are returned as a single
    ``[d/dq, d/dv]`` vector of length ``2n``.
    """

    system: LagrangianSystem
    discretization: SegmentDiscretization
    family: str
    a: float = 0.0
    tol: float = 1e-10
    user_eval: Optional[Callable[[float, Array, Array], float]] = None
    flow_segment: Optional[ExactSegment] = None

    @property
    def claimed_contact_order(self) -> Optional[int]:
        """Contact order against the exact discretization (``None`` for exact)."""
        if self.family == "exact":
            return None
        centered = self.discretization.beta == 0.5
        if centered and (self.family in ("midpoint", "trapezoid")
                         or (self.family == "left_rectangle" and self.a == 0.0)):
            return 2
        return 1

    def _nodes(self, h: float, n_gl: int = _GL_START) -> tuple[Array, Array]:
        sch = self.discretization.schedule
        lo, hi = sch.alpha_minus(h), sch.alpha_plus(h)
        if self.family == "left_rectangle":
            return np.array([0.0]), np.array([1.0])
        if self.family == "midpoint":
            return np.array([0.5 * (lo + hi)]), np.array([1.0])
        if self.family == "trapezoid":
            return np.array([lo, hi]), np.array([0.5, 0.5])
        xi, wi = np.polynomial.legendre.leggauss(n_gl)
        return lo + 0.5 * h * (1.0 + xi), 0.5 * wi

    def _segment(self) -> SegmentDiscretization:
        return self.flow_segment if self.family == "exact" else self.discretization

    def _rule(self, h: float, x: TangentVector, n_gl: int, with_grad: bool):
        ts, cs = self._nodes(h, n_gl)
        states, jacs = self._segment().curve(h, x, ts)
        sys, n = self.system, x.dim
        val = 0.0
        grad = np.zeros(2 * n)
        for y, J, c in zip(states, jacs, cs):
            q, v = y[:n], y[n:]
            val += c * float(sys.L(q, v))
            if with_grad:
                dL = np.concatenate([sys.dLdq(q, v), sys.dLdv(q, v)])
                grad += c * (dL @ J)
        if self.family == "left_rectangle" and self.a != 0.0:
            val += self.a * h * float(np.sum(x.v))
            grad[n:] += self.a * h
        return val, grad

    def _quadrature(self, h: float, x: TangentVector, with_grad: bool):
        if self.family != "exact" or h == 0.0:
            return self._rule(h, x, _GL_START, with_grad)
        n_gl = _GL_START
        val, grad = self._rule(h, x, n_gl, with_grad)
        while n_gl < _GL_MAX:
            n_gl *= 2
            val2, grad2 = self._rule(h, x, n_gl, with_grad)
            change = max(abs(val2 - val), float(np.max(np.abs(grad2 - grad), initial=0.0)))
            val, grad = val2, grad2
            if change < self.tol:
                break
        return val, grad

    def hat(self, h: float, x: TangentVector) -> float:
        """``L_h(x) / h``, continuously extended by ``L(x)`` at ``h = 0``."""
        if self.family == "user":
            if h == 0.0:
                return float(self.system.L(x.q, x.v))
            return float(self.user_eval(h, x.q, x.v)) / h
        return self._quadrature(h, x, with_grad=False)[0]

    def hat_grad(self, h: float, x: TangentVector) -> Array:
        """Gradient of :meth:`hat` in ``[q, v]``."""
        if self.family == "user":
            if h == 0.0:
                return np.concatenate([self.system.dLdq(x.q, x.v), self.system.dLdv(x.q, x.v)])
            f = lambda y: self.user_eval(h, y[:x.dim], y[x.dim:]) / h  # noqa: E731
            return _fd_gradient(f, x.state)
        return self._quadrature(h, x, with_grad=True)[1]

    def eval(self, h: float, x: TangentVector) -> float:
        if h == 0.0:
            return 0.0
        if self.family == "user":
            return float(self.user_eval(h, x.q, x.v))
        return h * self.hat(h, x)

    def grad(self, h: float, x: TangentVector) -> Array:
        return h * self.hat_grad(h, x)

    def grad_q(self, h: float, x: TangentVector) -> Array:
        return self.grad(h, x)[:x.dim]

    def grad_v(self, h: float, x: TangentVector) -> Array:
        return self.grad(h, x)[x.dim:]

    def with_a(self, a: float) -> "DiscreteLagrangianTQ":
        if self.family != "left_rectangle":
            raise ValueError("only the left_rectangle family carries an a-term")
        return DiscreteLagrangianTQ(self.system, self.discretization, self.family, a=a,
                                    tol=self.tol)

    def to_config(self) -> dict:
        cfg = {"family": self.family}
        if self.family == "left_rectangle":
            cfg["a"] = self.a
        if self.family == "exact":
            cfg["tol"] = self.tol
        return cfg


def _fd_gradient(f, y: Array) -> Array:
    g = np.empty_like(y)
    for j in range(y.size):
        s = 1e-6 * max(1.0, abs(y[j]))
        e = np.zeros_like(y)
        e[j] = s
        g[j] = (f(y + e) - f(y - e)) / (2 * s)
    return g


def make_family(sys: LagrangianSystem, d: SegmentDiscretization, family: str,
                a: float = 0.0, tol: float = 1e-10,
                user_eval: Optional[Callable] = None) -> DiscreteLagrangianTQ:
    """Construct one of the built-in discrete Lagrangian families.

    ``a`` is the coefficient of the ``a h^2 sum(v)`` perturbation of
    ``left_rectangle``; ``tol`` is the flow/quadrature tolerance of ``exact``;
    ``user_eval(h, q, v)`` defines a ``user`` family.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; choose from {FAMILIES}")
    if not np.isfinite(a):
        raise ValueError("a must be finite")
    if a != 0.0 and family != "left_rectangle":
        raise ValueError("the a-term belongs to the left_rectangle family only")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if family == "user" and user_eval is None:
        raise ValueError("a user family needs user_eval")
    seg = None
    if family == "exact":
        if isinstance(d, ExactSegment) and d.system is sys:
            seg = d
            tol = min(tol, d.tol)
        else:
            seg = ExactSegment(sys, tol=tol, beta=d.beta)
    return DiscreteLagrangianTQ(sys, d, family, a=float(a), tol=float(tol),
                                user_eval=user_eval, flow_segment=seg)


def family_from_config(cfg: dict, sys: LagrangianSystem, d: SegmentDiscretization) -> DiscreteLagrangianTQ:
    cfg = dict(cfg)
    family = cfg.pop("family")
    allowed = {"left_rectangle": {"a"}, "exact": {"tol"}}.get(family, set())
    unknown = set(cfg) - allowed
    if unknown:
        raise ValueError(f"unknown keys {sorted(unknown)} for family {family!r}")
    if family == "user":
        raise ValueError("user families cannot be built from a config")
    return make_family(sys, d, family, a=float(cfg.get("a", 0.0)), tol=float(cfg.get("tol", 1e-10)))


@dataclass(frozen=True)
class LegendrePair:
    """Discrete Legendre transforms ``F+ L_h = dL_h/dq+`` and ``F- L_h = -dL_h/dq-``."""

    f_plus: Array
    f_minus: Array


@dataclass(frozen=True, eq=False)
class DiscreteLagrangianQQ:
    """A discrete Lagrangian ``L_h(q+, q-)`` on ``Q x Q``.

    ``derivatives(h, q_plus, q_minus)`` returns the pair of partials
    ``(dL/dq+, dL/dq-)`` in one call.
    """

    eval: Callable[[float, Array, Array], float]
    derivatives: Callable[[float, Array, Array], tuple]
    source: Optional[DiscreteLagrangianTQ] = None

    def d_plus(self, h, q_plus, q_minus) -> Array:
        return self.derivatives(h, q_plus, q_minus)[0]

    def d_minus(self, h, q_plus, q_minus) -> Array:
        return self.derivatives(h, q_plus, q_minus)[1]


def _vec(x) -> Array:
    return np.atleast_1d(np.asarray(x, dtype=float))


def derivatives_at(dl: DiscreteLagrangianTQ, h: float, x: TangentVector) -> tuple[Array, Array]:
    """``(dL/dq+, dL/dq-)`` of the transported Lagrangian at the segment of ``x``.

    Skips the inverse boundary map when ``x`` is already known.
    """
    d = dl.discretization
    n = x.dim
    if isinstance(d, LinearSegment):
        g = dl.hat_grad(h, x)
        gq, gv = g[:n], g[n:]
        return d.beta * h * gq + gv, (1.0 - d.beta) * h * gq - gv
    Dm, Dp = d.boundary_jacobians(h, x)
    sol = np.linalg.solve(np.vstack([Dp, Dm]).T, dl.grad(h, x))
    return sol[:n], sol[n:]


def to_qq(dl: DiscreteLagrangianTQ) -> DiscreteLagrangianQQ:
    """Transport ``dl`` to ``Q x Q`` through the inverse boundary map.

    ``L^QxQ_h(q+, q-) = L_h(Psi_h^{-1}(q+, q-))``; derivatives follow from the
    chain rule, ``[dL/dq+, dL/dq-] D Psi_h = grad L_h``.
    """
    d = dl.discretization

    def evaluate(h, qp, qm):
        return dl.eval(h, d.inverse(h, _vec(qp), _vec(qm)))

    def derivatives(h, qp, qm):
        return derivatives_at(dl, h, d.inverse(h, _vec(qp), _vec(qm)))

    return DiscreteLagrangianQQ(evaluate, derivatives, source=dl)


def legendre(dlqq: DiscreteLagrangianQQ, h: float, q_plus, q_minus) -> LegendrePair:
    if h <= 0:
        raise ValueError("discrete Legendre transforms need h > 0")
    dp, dm = dlqq.derivatives(h, _vec(q_plus), _vec(q_minus))
    return LegendrePair(f_plus=np.asarray(dp, dtype=float), f_minus=-np.asarray(dm, dtype=float))


@dataclass
class ContactReport:
    slope: float
    order: Optional[int]
    ci: float
    degenerate: bool
    differences: Array
    fits: list[LogLogFit]
    message: str = ""


def contact_order_estimate(dl1: DiscreteLagrangianTQ, dl2: DiscreteLagrangianTQ,
                           states, h_grid) -> ContactReport:
    """Slope of ``log|L2_h - L1_h|`` against ``log h``, averaged over ``states``.

    The reported contact order is ``floor(slope + 0.25) - 1``, so a slope must
    come within 0.25 of an integer ``r + 1`` to earn order ``r``.
    """
    h_grid = np.asarray(h_grid, dtype=float)
    if h_grid.size < 5:
        raise ValueError("need at least 5 step sizes")
    diffs = np.array([[abs(dl2.eval(h, x) - dl1.eval(h, x)) for h in h_grid] for x in states])
    if np.all(diffs < 1e-14):
        return ContactReport(np.nan, None, np.nan, True, diffs, [],
                             "identical to machine precision")
    fits = [fit_loglog(h_grid, row, scale=max(h_grid)) for row in diffs]
    good = [f for f in fits if not f.degenerate]
    if not good:
        return ContactReport(np.nan, None, np.nan, True, diffs, fits, fits[0].reason)
    slope = float(np.mean([f.slope for f in good]))
    ci = float(np.max([f.ci for f in good]))
    return ContactReport(slope, int(np.floor(slope + 0.25)) - 1, ci, False, diffs, fits)
