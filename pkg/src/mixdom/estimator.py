"""Maximum-likelihood fitting of theta over a compact box."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .core import Dataset, ParamBox, ThetaParams
from .likelihood import profile_loglik


@dataclass(frozen=True)
class OptimizerOptions:
    max_evals: int = 2000  # per start
    ftol: float = 1e-9
    starts: int = 4
    simplex_step: float = 0.5  # initial simplex edge in log-theta

    def __post_init__(self):
        if not 1 <= self.starts <= 4:
            raise ValueError("starts must be between 1 and 4")
        if self.max_evals < 10:
            raise ValueError("max_evals must be at least 10")


@dataclass(frozen=True, eq=False)
class EstimationResult:
    theta_hat: ThetaParams
    beta_hat: np.ndarray
    loglik: float
    n_evals: int
    converged: bool
    starts: int
    at_boundary: tuple

    def to_dict(self) -> dict:
        return {
            "theta_hat": list(self.theta_hat),
            "beta_hat": [float(b) for b in self.beta_hat],
            "loglik": self.loglik,
            "n_evals": self.n_evals,
            "converged": self.converged,
            "starts": self.starts,
            "at_boundary": list(self.at_boundary),
        }


class FitError(RuntimeError):
    pass


def _lag_cov(r: np.ndarray, k: int) -> float:
    return float(np.dot(r[:-k], r[k:]) / len(r))


def initial_guess(dataset: Dataset, box: ParamBox | None = None) -> ThetaParams:
    """Method-of-moments start from OLS residuals, clamped into the box.

    The nugget only enters the lag-0 autocovariance, so the OU part is read
    from lags 1 and k (k spans roughly unit distance, capped at n/4):
    decay = -log(ratio) / ((k - 1) * spacing) and the OU variance is the lag-1
    autocovariance extrapolated back to lag 0.
    """
    box = box or ParamBox.default()
    n = dataset.n
    if n < 4:
        raise ValueError("initial_guess needs n >= 4")
    coef, *_ = np.linalg.lstsq(dataset.x, dataset.z, rcond=None)
    r = dataset.z - dataset.x @ coef
    v = float(np.dot(r, r) / n)
    lo, hi = box.lower.as_array(), box.upper.as_array()
    if not v > 1e-300:
        return box.lower
    dx = dataset.grid.spacing
    k = int(min(max(2, round(1.0 / dx)), max(2, n // 4)))
    c1 = _lag_cov(r, 1)
    ck = _lag_cov(r, k)
    ratio = ck / c1 if c1 > 0 else 0.0
    theta3 = -math.log(min(max(ratio, 0.05), 1.0 - 1e-12)) / ((k - 1) * dx)
    theta3 = float(np.clip(theta3, lo[2], hi[2]))
    ou_var = max(c1 * math.exp(theta3 * dx), 0.1 * v) if c1 > 0 else 0.1 * v
    theta2 = ou_var * theta3
    theta1 = max(v - ou_var, 0.1 * v)
    return box.clamp(ThetaParams(theta1, theta2, theta3))


def _start_points(dataset: Dataset, box: ParamBox, opts: OptimizerOptions) -> list[np.ndarray]:
    lo = np.log(box.lower.as_array())
    hi = np.log(box.upper.as_array())
    points = [
        np.log(initial_guess(dataset, box).as_array()),
        0.5 * (lo + hi),
        lo + 0.25 * (hi - lo),
        lo + 0.75 * (hi - lo),
    ]
    return points[: opts.starts]


def fit_ml(dataset: Dataset, box: ParamBox | None = None,
           options: OptimizerOptions | None = None) -> EstimationResult:
    """Multi-start Nelder-Mead on log theta; the best start wins (ties: smaller theta)."""
    opts = options or OptimizerOptions()
    box = box or ParamBox.default()
    lo = np.log(box.lower.as_array())
    hi = np.log(box.upper.as_array())
    bounds = list(zip(lo, hi))
    evals = 0
    failures = 0

    def objective(u):
        nonlocal evals, failures
        evals += 1
        try:
            theta = ThetaParams.from_array(np.exp(np.clip(u, lo, hi)))
            return -profile_loglik(theta, dataset).loglik
        except (np.linalg.LinAlgError, ValueError, FloatingPointError):
            failures += 1
            return math.inf

    best = None
    for x0 in _start_points(dataset, box, opts):
        x0 = np.clip(x0, lo, hi)
        simplex = np.vstack([x0] + [x0 + opts.simplex_step * e for e in np.eye(3)])
        for j in range(1, 4):
            k = j - 1
            if simplex[j, k] > hi[k]:
                simplex[j, k] = x0[k] - opts.simplex_step
        res = minimize(objective, x0, method="Nelder-Mead", bounds=bounds,
                       options={"initial_simplex": simplex, "maxfev": opts.max_evals,
                                "fatol": opts.ftol, "xatol": math.inf})
        if not math.isfinite(res.fun):
            continue
        u = np.clip(res.x, lo, hi)
        cand = (-res.fun, tuple(-np.exp(u)), u, bool(res.success))
        if best is None or cand[:2] > best[:2]:
            best = cand
    if best is None:
        raise FitError(f"all {opts.starts} starts failed ({failures} failed evaluations out of {evals})")
    theta_hat = ThetaParams.from_array(np.exp(best[2]))
    ev = profile_loglik(theta_hat, dataset)
    t = theta_hat.as_array()
    span = box.upper.as_array() - box.lower.as_array()
    tol = 1e-6 * span
    at_boundary = tuple(bool(v) for v in
                        (np.abs(t - box.lower.as_array()) < tol) | (np.abs(box.upper.as_array() - t) < tol))
    return EstimationResult(theta_hat, ev.beta_hat, ev.loglik, evals, best[3], opts.starts, at_boundary)
