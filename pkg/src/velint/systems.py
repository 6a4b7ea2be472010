"""Built-in Lagrangian systems and their JSON descriptions.

Every built-in is a one-degree-of-freedom (or decoupled) mechanical system
``L = 1/2 g(q) v^2 - V(q)`` whose ``g`` and ``V`` are given by coefficient
tables::

    {"poly": [c0, c1, ...], "cos": [a1, a2, ...], "sin": [b1, b2, ...]}

meaning ``sum c_k q^k + sum a_k cos(k q) + sum b_k sin(k q)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lagrangian import LagrangianSystem, mechanical_system

BUILTIN_SYSTEMS = {
    "harmonic": {"omega": "float > 0 (default 1.0)", "dim": "int >= 1 (default 1)"},
    "pendulum": {"k": "float > 0, V = k (1 - cos q) (default 1.0)"},
    "free": {"dim": "int >= 1 (default 1)"},
    "mechanical_1d": {"g": "coefficient table for g(q) > 0", "V": "coefficient table for V(q)"},
}


@dataclass(frozen=True)
class CoefficientFunction:
    """Polynomial plus trigonometric series in one variable."""

    poly: tuple = ()
    cos: tuple = ()
    sin: tuple = ()

    @classmethod
    def from_config(cls, spec) -> "CoefficientFunction":
        if isinstance(spec, (int, float)):
            return cls(poly=(float(spec),))
        unknown = set(spec) - {"poly", "cos", "sin"}
        if unknown:
            raise ValueError(f"unknown coefficient keys {sorted(unknown)}")
        return cls(*(tuple(float(c) for c in spec.get(k, ())) for k in ("poly", "cos", "sin")))

    def to_config(self) -> dict:
        return {"poly": list(self.poly), "cos": list(self.cos), "sin": list(self.sin)}

    def derivative(self, order: int, q):
        q = np.asarray(q, dtype=float)
        out = np.zeros_like(q)
        for k, c in enumerate(self.poly):
            if k >= order and c != 0.0:
                coef = c * np.prod(np.arange(k - order + 1, k + 1)) if order else c
                out = out + coef * q ** (k - order)
        # d^m/dq^m cos(kq) = k^m cos(kq + m pi/2)
        for k, c in enumerate(self.cos, start=1):
            out = out + c * k ** order * np.cos(k * q + order * np.pi / 2)
        for k, c in enumerate(self.sin, start=1):
            out = out + c * k ** order * np.sin(k * q + order * np.pi / 2)
        return out

    def __call__(self, q):
        return self.derivative(0, q)


def mechanical_1d(g: CoefficientFunction, V: CoefficientFunction, name: str = "mechanical_1d",
                  params: dict | None = None) -> LagrangianSystem:
    """``L = 1/2 g(q) v^2 - V(q)`` with analytic acceleration Jacobian."""

    def M(q):
        return np.array([[g(q[0])]])

    def dM(q):
        return np.array([[[g.derivative(1, q[0])]]])

    def Vf(q):
        return V(q[0])

    def dV(q):
        return np.array([V.derivative(1, q[0])])

    def accel_jacobian(q, v):
        x, w = q[0], v[0]
        g0, g1, g2 = g(x), g.derivative(1, x), g.derivative(2, x)
        V1, V2 = V.derivative(1, x), V.derivative(2, x)
        force = V1 + 0.5 * g1 * w * w
        da_dq = -(V2 + 0.5 * g2 * w * w) / g0 + force * g1 / g0 ** 2
        da_dv = -g1 * w / g0
        return np.array([[da_dq]]), np.array([[da_dv]])

    if params is None:
        params = {"g": g.to_config(), "V": V.to_config()}
    return mechanical_system(1, M, dM, Vf, dV, name=name, params=params,
                             accel_jacobian=accel_jacobian)


def harmonic(omega: float = 1.0, dim: int = 1) -> LagrangianSystem:
    """``L = 1/2 |v|^2 - 1/2 omega^2 |q|^2``."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    params = {"omega": omega, "dim": dim}
    if dim == 1:
        return mechanical_1d(CoefficientFunction(poly=(1.0,)),
                             CoefficientFunction(poly=(0.0, 0.0, 0.5 * omega ** 2)),
                             name="harmonic", params=params)
    return _flat(dim, lambda q: 0.5 * omega ** 2 * q @ q, lambda q: omega ** 2 * q,
                 lambda q: omega ** 2 * np.eye(dim), "harmonic", params)


def free(dim: int = 1) -> LagrangianSystem:
    params = {"dim": dim}
    if dim == 1:
        return mechanical_1d(CoefficientFunction(poly=(1.0,)), CoefficientFunction(),
                             name="free", params=params)
    return _flat(dim, lambda q: 0.0, lambda q: np.zeros(dim), lambda q: np.zeros((dim, dim)),
                 "free", params)


def pendulum(k: float = 1.0) -> LagrangianSystem:
    """``L = 1/2 v^2 - k (1 - cos q)``."""
    if k <= 0:
        raise ValueError("k must be positive")
    return mechanical_1d(CoefficientFunction(poly=(1.0,)),
                         CoefficientFunction(poly=(k,), cos=(-k,)),
                         name="pendulum", params={"k": k})


def _flat(dim, V, dV, d2V, name, params):
    def accel_jacobian(q, v):
        return -d2V(q), np.zeros((dim, dim))

    return mechanical_system(dim, lambda q: np.eye(dim), lambda q: np.zeros((dim, dim, dim)),
                             V, dV, name=name, params=params, accel_jacobian=accel_jacobian)


def system_from_config(cfg: dict) -> LagrangianSystem:
    """Build a built-in system from ``{"name": ..., **params}``."""
    cfg = dict(cfg)
    name = cfg.pop("name", None)
    if name not in BUILTIN_SYSTEMS:
        raise ValueError(f"unknown system {name!r}; choose from {sorted(BUILTIN_SYSTEMS)}")
    unknown = set(cfg) - set(BUILTIN_SYSTEMS[name])
    if unknown:
        raise ValueError(f"unknown parameters {sorted(unknown)} for system {name!r}")
    if name == "harmonic":
        return harmonic(float(cfg.get("omega", 1.0)), int(cfg.get("dim", 1)))
    if name == "free":
        return free(int(cfg.get("dim", 1)))
    if name == "pendulum":
        return pendulum(float(cfg.get("k", 1.0)))
    if "g" not in cfg or "V" not in cfg:
        raise ValueError("mechanical_1d needs both 'g' and 'V' coefficient tables")
    return mechanical_1d(CoefficientFunction.from_config(cfg["g"]),
                         CoefficientFunction.from_config(cfg["V"]))


def curved_oscillator() -> LagrangianSystem:
    """``g(q) = 1 + q^2``, ``V(q) = q^2 / 2``: the position-dependent-mass test system."""
    return mechanical_1d(CoefficientFunction(poly=(1.0, 0.0, 1.0)),
                         CoefficientFunction(poly=(0.0, 0.0, 0.5)))
