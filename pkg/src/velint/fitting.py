"""Least-squares slopes on log-log data."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

EPS = np.finfo(float).eps
OUTLIER_MIN_LOG_RESIDUAL = np.log(1.05)


@dataclass
class LogLogFit:
    slope: float
    ci: float
    intercept: float
    discarded: list[int] = field(default_factory=list)
    degenerate: bool = False
    reason: str = ""
    retained: int = 0


def fit_loglog(h_grid, errors, scale: float = 1.0, floor: float | None = None,
               min_points: int = 4, outlier_z: float = 3.0) -> LogLogFit:
    """Fit ``log(error) = slope * log(h) + c``.

    Points with ``error < floor`` (default ``100 eps scale``) are discarded,
    then points whose externally studentized residual exceeds ``outlier_z``
    and that miss the line by more than 5% are dropped one at a time.  ``ci`` is the 95% half-width of the slope.  Fewer than
    ``min_points`` retained points, or errors that do not vary at all, give a
    degenerate fit with ``slope = nan``.
    """
    h = np.asarray(h_grid, dtype=float)
    e = np.asarray(errors, dtype=float)
    if h.shape != e.shape:
        raise ValueError("h_grid and errors differ in length")
    if h.size < 5:
        raise ValueError("need at least 5 grid points")
    if floor is None:
        floor = 100 * EPS * scale
    keep = [i for i in range(h.size) if np.isfinite(e[i]) and e[i] >= floor]
    discarded = [i for i in range(h.size) if i not in keep]

    def degenerate(reason):
        return LogLogFit(np.nan, np.nan, np.nan, discarded, True, reason)

    if len(keep) < min_points:
        return degenerate(f"only {len(keep)} points above the error floor {floor:.3g}")
    if np.max(e[keep]) <= np.min(e[keep]) * (1 + 1e-8):
        return degenerate("errors do not depend on h")

    while True:
        x, y = np.log(h[keep]), np.log(e[keep])
        fit = stats.linregress(x, y)
        resid = y - (fit.intercept + fit.slope * x)
        dof = len(keep) - 2
        if dof <= 1:
            break
        lev = 1.0 / len(x) + (x - x.mean()) ** 2 / np.sum((x - x.mean()) ** 2)
        # externally studentized: each point is judged against a fit without it
        with np.errstate(divide="ignore", invalid="ignore"):
            s2_del = (np.sum(resid ** 2) - resid ** 2 / (1 - lev)) / (dof - 1)
            scale_del = np.sqrt(np.maximum(s2_del, 0.0) * (1 - lev))
            tiny = 1e-12 * np.sqrt(np.sum(resid ** 2))
            z = np.where(scale_del > tiny, np.abs(resid) / np.where(scale_del > tiny, scale_del, 1.0),
                         np.where(np.abs(resid) > tiny, np.inf, 0.0))
        # smooth curvature is not an outlier: require a visible (> 5%) miss as well
        z = np.where(np.abs(resid) > OUTLIER_MIN_LOG_RESIDUAL, z, 0.0)
        worst = int(np.argmax(z))
        if z[worst] <= outlier_z or len(keep) <= min_points:
            break
        discarded.append(keep.pop(worst))
    dof = len(keep) - 2
    ci = float(stats.t.ppf(0.975, dof) * fit.stderr) if dof > 0 else np.inf
    return LogLogFit(float(fit.slope), ci, float(fit.intercept), sorted(discarded),
                     retained=len(keep))


def geometric_grid(h0: float = 0.1, count: int = 8, ratio: float = 0.5) -> np.ndarray:
    """``h0 * ratio**k`` for ``k = 0..count-1``."""
    return h0 * ratio ** np.arange(count)
