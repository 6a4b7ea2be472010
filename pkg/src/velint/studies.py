"""Study runners: one resolved study config in, metrics and a data table out."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import analysis
from .config import build_study, grid_from, states_from, tangent
from .discrete_lagrangian import contact_order_estimate, derivatives_at, make_family, to_qq
from .discretization import ExactSegment
from .fitting import fit_loglog
from .lagrangian import TangentVector, energy, reference_flow
from .solver import (del_residual, second_variation, step, step_blownup,
                     step_qq, step_tq, trajectory)


@dataclass
class StudyResult:
    metrics: dict[str, Any]
    header: list[str]
    rows: list[list[float]]
    extra_tables: dict[str, tuple[list[str], list[list[float]]]] = field(default_factory=dict)


@dataclass
class Verdict:
    metric: str
    constraint: dict
    value: Any
    passed: bool

    def to_json(self) -> dict:
        return {"metric": self.metric, "constraint": self.constraint, "value": self.value,
                "passed": self.passed}


def check(metric: str, constraint: dict, metrics: dict) -> Verdict:
    """Compare ``metrics[metric]`` against ``max``/``min``/``target``+``band``/``equals``."""
    value = metrics.get(metric)
    ok = value is not None
    if ok and not isinstance(value, bool) and isinstance(value, (int, float)) and math.isnan(value):
        ok = False
    if ok and "max" in constraint:
        ok = value <= constraint["max"]
    if ok and "min" in constraint:
        ok = value >= constraint["min"]
    if ok and "target" in constraint:
        ok = abs(value - constraint["target"]) <= constraint["band"]
    if ok and "equals" in constraint:
        ok = value == constraint["equals"]
    return Verdict(metric, constraint, value, bool(ok))


def _order_metrics(rep: analysis.OrderReport) -> dict:
    return {"slope": rep.slope, "slope_ci": rep.slope_ci, "degenerate": rep.degenerate,
            "discarded": len(rep.discarded), "failed_points": len(rep.failed),
            "max_error": float(np.nanmax(rep.errors))}


def _h_error_rows(h_grid, errors) -> list[list[float]]:
    return [[float(h), float(e)] for h, e in zip(h_grid, errors)]


def run_simulate(st, obj, parallel):
    dl, s = obj.dl, obj.settings
    v0 = tangent(st["v0"], dl.system.dim)
    n = v0.dim
    e0 = energy(dl.system, v0)
    rows, drifts = [], []
    for h in st["h_grid"]:
        traj = trajectory(dl, h, v0, st["nsteps"], s)
        states = [v0] + [t.v_tilde for t in traj]
        drift = 0.0
        for k, x in enumerate(states):
            e = energy(dl.system, x)
            drift = max(drift, abs(e - e0))
            rows.append([h, k, k * h, *x.q, *x.v, e])
        drifts.append(drift / max(abs(e0), 1e-300))
    header = ["h", "step", "t", *[f"q{i}" for i in range(n)], *[f"v{i}" for i in range(n)], "energy"]
    return StudyResult({"max_relative_energy_drift": max(drifts), "steps": st["nsteps"]}, header, rows)


def run_order_local(st, obj, parallel):
    v0 = tangent(st["v0"], obj.dl.system.dim)
    rep = analysis.local_error_order(obj.dl, v0, grid_from(st["h_grid"]), obj.settings, parallel)
    return StudyResult(_order_metrics(rep), ["h", "error"], _h_error_rows(rep.h_grid, rep.errors))


def run_order_global(st, obj, parallel):
    v0 = tangent(st["v0"], obj.dl.system.dim)
    rep = analysis.global_error_order(obj.dl, v0, st["T"], grid_from(st["h_grid"]), obj.settings, parallel)
    return StudyResult(_order_metrics(rep), ["h", "error"], _h_error_rows(rep.h_grid, rep.errors))


def run_a_term(st, obj, parallel):
    dl = obj.dl
    states = states_from(st["states"], dl.system.dim)
    rep = analysis.a_term_study(dl, st["a_values"], states, st["h"], obj.settings, parallel)
    metrics = {"max_step_deviation": rep.max_step_deviation,
               "max_legendre_deviation": rep.max_legendre_deviation,
               "legendre_shift_over_h": [s / st["h"] for s in rep.legendre_shift]}
    rows = [[a, sd, ls, ld] for a, sd, ls, ld in zip(rep.a_values, rep.step_deviation,
                                                      rep.legendre_shift, rep.legendre_deviation)]
    result = StudyResult(metrics, ["a", "step_deviation", "legendre_shift", "legendre_deviation"], rows)
    mm = st.get("mismatch")
    if mm:
        v0 = tangent(mm["v0"], dl.system.dim)
        grid = grid_from(mm["h_grid"])
        matched = analysis.local_error_order(dl, v0, grid, obj.settings, parallel)
        mixed = analysis.mismatched_local_order(dl, mm["a_plus"], mm["a_minus"], v0, grid, obj.settings)
        metrics.update({"matched_slope": matched.slope, "mismatched_slope": mixed.slope,
                        "slope_drop": matched.slope - mixed.slope})
        result.extra_tables["mismatch"] = (
            ["h", "error_matched", "error_mismatched"],
            [[h, a, b] for h, a, b in zip(grid, matched.errors, mixed.errors)])
    return result


def run_symmetry(st, obj, parallel):
    states = states_from(st["states"], obj.dl.system.dim)
    rep = analysis.symmetry_residual(obj.dl, states, grid_from(st["h_grid"]), obj.settings, parallel)
    return StudyResult({"slope": rep.slope, "slope_ci": rep.slope_ci, "degenerate": rep.degenerate,
                        "residual_at_zero": rep.residual_at_zero},
                       ["h", "error"], _h_error_rows(rep.h_grid, rep.residuals))


def run_verify_exact(st, obj, parallel):
    dl, s = obj.dl, obj.settings
    d = dl.discretization
    states = states_from(st["states"], dl.system.dim)
    qq = to_qq(dl)
    rows = []
    for h in st["h_values"]:
        for j, x in enumerate(states):
            out = step(dl, h, x, s).v_tilde
            flow = reference_flow(dl.system, x, h, tol=analysis.REFERENCE_TOL)
            # criticality of (h, x, flow) in Q x Q coordinates
            q0, q1 = d.boundary_minus(h, x), d.boundary_plus(h, x)
            q2 = d.boundary_plus(h, flow)
            join = float(np.max(np.abs(d.boundary_minus(h, flow) - q1)))
            p_plus, _ = derivatives_at(dl, h, x)
            _, dm = derivatives_at(dl, h, flow)
            res_tq = float(np.max(np.abs(-dm - p_plus)))
            res_qq = float(np.max(np.abs(del_residual(qq, h, q0, q1, q2))))
            rows.append([h, j, float(np.linalg.norm(out.state - flow.state)), res_tq, res_qq, join])
    arr = np.array(rows)
    return StudyResult({"max_flow_error": float(arr[:, 2].max()),
                        "max_del_residual": float(arr[:, 3:5].max()),
                        "max_join_mismatch": float(arr[:, 5].max())},
                       ["h", "state", "flow_error", "del_residual_tq", "del_residual_qq", "join_mismatch"],
                       rows)


def run_blowup_trace(st, obj, parallel):
    dl, s = obj.dl, obj.settings
    q_bar, z = np.asarray(st["q_bar"], float), np.asarray(st["z"], float)
    if q_bar.size != dl.system.dim or z.size != dl.system.dim:
        raise ValueError("q_bar and z must match the system dimension")
    rows, gaps, hs, reparam = [], [], [], []
    sols = {}
    for h in st["h_grid"]:
        sol = step_blownup(dl, h, q_bar, z, s)
        sols[h] = sol
        rows.append([h, sol.gap, *sol.v.q, *sol.v.v, *sol.v_tilde.q, *sol.v_tilde.v])
        if h > 0:
            hs.append(h)
            gaps.append(sol.gap)
            back = step(dl, h, sol.v, s).v_tilde
            reparam.append(float(np.max(np.abs(back.state - sol.v_tilde.state))))
    gaps_arr = np.array(gaps)
    order = np.argsort(hs)[::-1]
    monotone = bool(np.all(np.diff(gaps_arr[order]) < 0)) if len(gaps) > 1 else True
    metrics = {"gap_slope": fit_loglog(hs, gaps).slope if len(hs) >= 5 else float("nan"),
               "gap_monotone": monotone, "max_reparam_error": max(reparam, default=0.0)}
    if 0.0 in sols:
        sol0 = sols[0.0]
        target = TangentVector(q_bar, z)
        metrics["zero_gap"] = float(max(np.max(np.abs(sol0.v.state - target.state)),
                                        np.max(np.abs(sol0.v_tilde.state - target.state))))
        metrics["zero_second_variation_min_eig"] = float(
            np.min(np.linalg.eigvalsh(second_variation(dl, sol0))))
    zs = st["zero_samples"]
    if zs["count"]:
        worst = 0.0
        for x in analysis.sample_states(dl.system.dim, zs["count"], zs["seed"], zs["q_box"], zs["v_box"]):
            sol = step_blownup(dl, 0.0, x.q, x.v, s)
            worst = max(worst, float(np.max(np.abs(sol.v.state - x.state))),
                        float(np.max(np.abs(sol.v_tilde.state - x.state))))
        metrics["max_zero_deviation_random"] = worst
    n = dl.system.dim
    header = ["h", "gap", *[f"v_q{i}" for i in range(n)], *[f"v_v{i}" for i in range(n)],
              *[f"vt_q{i}" for i in range(n)], *[f"vt_v{i}" for i in range(n)]]
    return StudyResult(metrics, header, rows)


def _conjugation_point(args):
    dl, h, x, s = args
    d = dl.discretization
    via_tq = step_tq(dl, h, x, s).v_tilde
    via_qq = step(dl, h, x, s).v_tilde
    q2 = step_qq(to_qq(dl), h, d.boundary_plus(h, x), d.boundary_minus(h, x), s)
    pair_tq = np.concatenate([d.boundary_plus(h, via_tq), d.boundary_minus(h, via_tq)])
    pair_qq = np.concatenate([q2, d.boundary_plus(h, x)])
    return [float(np.max(np.abs(pair_tq - pair_qq))),
            float(np.max(np.abs(via_tq.state - via_qq.state)))]


def run_conjugation(st, obj, parallel):
    dl = obj.dl
    h = st["h"]
    states = states_from(st["states"], dl.system.dim)
    diffs = analysis._map(_conjugation_point, [(dl, h, x, obj.settings) for x in states], parallel)
    rows = [[j, *x.q, *x.v, a, b] for j, (x, (a, b)) in enumerate(zip(states, diffs))]
    n = dl.system.dim
    return StudyResult({"max_qq_difference": max(r[0] for r in diffs),
                        "max_tq_difference": max(r[1] for r in diffs)},
                       ["state", *[f"q{i}" for i in range(n)], *[f"v{i}" for i in range(n)],
                        "qq_difference", "tq_difference"], rows)


def run_contact_order(st, obj, parallel):
    dl = obj.dl
    ref = make_family(dl.system, ExactSegment(dl.system, st["reference_tol"], dl.discretization.beta),
                      "exact", tol=st["reference_tol"])
    states = states_from(st["states"], dl.system.dim)
    grid = grid_from(st["h_grid"])
    rep = contact_order_estimate(dl, ref, states, grid)
    rows = [[float(h), *map(float, rep.differences[:, k])] for k, h in enumerate(grid)]
    return StudyResult({"slope": rep.slope, "order": rep.order, "degenerate": rep.degenerate,
                        "claimed_order": dl.claimed_contact_order},
                       ["h", *[f"difference_{j}" for j in range(len(states))]], rows)


def run_identity_limit(st, obj, parallel):
    states = states_from(st["states"], obj.dl.system.dim)
    rep = analysis.identity_limit(obj.dl, states, grid_from(st["h_grid"]), obj.settings, parallel)
    return StudyResult({"slope": rep.order.slope, "min_state_slope": min(rep.per_state_slopes),
                        "constant": rep.constant},
                       ["h", "error"], _h_error_rows(rep.order.h_grid, rep.order.errors))


RUNNERS: dict[str, Callable] = {
    "simulate": run_simulate, "order-local": run_order_local, "order-global": run_order_global,
    "a-term": run_a_term, "symmetry": run_symmetry, "verify-exact": run_verify_exact,
    "blowup-trace": run_blowup_trace, "conjugation": run_conjugation,
    "contact-order": run_contact_order, "identity-limit": run_identity_limit,
}


def run_study(st: dict, parallel: bool = False) -> tuple[StudyResult, list[Verdict]]:
    result = RUNNERS[st["kind"]](st, build_study(st), parallel)
    verdicts = [check(m, c, result.metrics) for m, c in st.get("expect", {}).items()]
    return result, verdicts
