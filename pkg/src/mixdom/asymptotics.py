"""Closed-form large-n predictions: CLT variances, rate regimes, pseudo-true limits, expansions.

Rates are stated per parameter through the information orders
n_1 = n, n_2 = n^{(1+delta)/2}, n_3 = n^delta and the trend contamination
order n^xi.  Thresholds are half-open: a xi sitting exactly on a boundary
gets the weaker guarantee.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

from .core import ScenarioSpec, ThetaParams, TrendKind


class Mode(str, enum.Enum):
    CLT = "CLT"
    RATE_ONLY = "RateOnly"
    NO_GUARANTEE = "NoGuarantee"


@dataclass(frozen=True)
class RatePrediction:
    param_index: int
    mode: Mode
    exponent: Optional[float]
    limit_variance: Optional[float] = None

    def __post_init__(self):
        if self.param_index not in (1, 2, 3):
            raise ValueError("param_index must be 1, 2 or 3")
        if self.mode is Mode.CLT and not (self.limit_variance and self.limit_variance > 0):
            raise ValueError("CLT predictions carry a positive limit variance")
        if self.exponent is not None and self.exponent < 0:
            raise ValueError("rate exponents are nonnegative")


def _check_unit(name: str, v: float) -> float:
    v = float(v)
    if not 0.0 <= v < 1.0:
        raise ValueError(f"{name} must lie in [0, 1), got {v}")
    return v


def clt_variance(theta0: ThetaParams, param_index: int) -> float:
    t1, t2, t3 = theta0
    return {1: 2.0 * t1 * t1,
            2: 2.0 ** 2.5 * math.sqrt(t1) * t2 ** 1.5,
            3: 2.0 * t3}[param_index]


def clt_exponent(param_index: int, delta: float) -> float:
    return {1: 0.5, 2: (1.0 + delta) / 4.0, 3: delta / 2.0}[param_index]


def clt_prediction(theta0: ThetaParams, param_index: int, delta: float) -> RatePrediction:
    """Correctly specified trend with fixed p: n^r (theta_hat_i - theta0_i) -> N(0, v)."""
    delta = _check_unit("delta", delta)
    if param_index == 3 and delta == 0.0:
        return RatePrediction(3, Mode.NO_GUARANTEE, None)
    return RatePrediction(param_index, Mode.CLT, clt_exponent(param_index, delta),
                          clt_variance(theta0, param_index))


def rate_region(delta: float, xi: float, param_index: int,
                theta0: ThetaParams | None = None) -> RatePrediction:
    """Convergence mode and rate exponent r (theta_hat - theta0 = O_p(n^-r)) at (delta, xi).

    ``theta0`` only supplies the limit variance in the CLT regime; without it
    a unit placeholder is reported.
    """
    delta = _check_unit("delta", delta)
    xi = _check_unit("xi", xi)
    if param_index == 1:
        clt_below, rate_below, info = 0.5, 1.0, 1.0
    elif param_index == 2:
        info = (1.0 + delta) / 2.0
        clt_below, rate_below = info / 2.0, info
    elif param_index == 3:
        if delta == 0.0:
            return RatePrediction(3, Mode.NO_GUARANTEE, None)
        info = delta
        clt_below, rate_below = delta / 2.0, delta
    else:
        raise ValueError("param_index must be 1, 2 or 3")
    if xi < clt_below:
        var = clt_variance(theta0, param_index) if theta0 is not None else 1.0
        return RatePrediction(param_index, Mode.CLT, info / 2.0, var)
    if xi < rate_below:
        return RatePrediction(param_index, Mode.RATE_ONLY, info - xi)
    return RatePrediction(param_index, Mode.NO_GUARANTEE, None)


def risk_order(scenario: ScenarioSpec, delta: float) -> float:
    """Exponent xi with R(Theta) = O_p(n^xi) for the built-in scenarios."""
    delta = _check_unit("delta", delta)
    return {TrendKind.CORRECT: 0.0,
            TrendKind.SCALED_LINEAR: delta,
            TrendKind.GP: (1.0 + delta) / 2.0}[scenario.kind]


def predicted_rate(scenario: ScenarioSpec, theta0: ThetaParams, delta: float, param_index: int) -> RatePrediction:
    xi = risk_order(scenario, delta)
    if xi >= 1.0:
        return RatePrediction(param_index, Mode.NO_GUARANTEE, None)
    return rate_region(delta, xi, param_index, theta0)


def inconsistency_limit(scenario: ScenarioSpec, theta0: ThetaParams) -> dict:
    """Pseudo-true limits of theta_hat under the two misspecified trends.

    For the gp trend the theta3 limit is reported under two readings of its
    denominator: ``theta3_lim`` uses beta01^2 theta12/theta13 + theta02/theta03
    (the value that minimises the n^delta layer of -2 loglik once theta2 sits
    at its own limit), ``theta3_lim_alt`` the printed beta01^2 theta12/theta13 + 1.
    """
    _, t2, t3 = theta0
    out = {"theta2_lim": None, "theta3_lim": None, "theta3_lim_alt": None}
    if scenario.kind is TrendKind.CORRECT:
        raise ValueError("a correctly specified trend has no inconsistency limit")
    b1 = scenario.beta[1]
    if scenario.kind is TrendKind.SCALED_LINEAR:
        out["theta3_lim"] = 12.0 * t2 * t3 / (12.0 * t2 + b1 * b1 * t3)
        return out
    t12, t13 = scenario.gp_params
    num = t2 + b1 * b1 * t12
    out["theta2_lim"] = num
    out["theta3_lim"] = num / (b1 * b1 * t12 / t13 + t2 / t3)
    out["theta3_lim_alt"] = num / (b1 * b1 * t12 / t13 + 1.0)
    return out


def misspec_leading_term(scenario: ScenarioSpec, theta: ThetaParams, n: int, delta: float) -> float:
    """Leading order of mu0' Sigma^-1 (I - M) mu0 for the scaled linear trend: beta01^2 theta3^2 n^delta / (24 theta2)."""
    if scenario.kind is not TrendKind.SCALED_LINEAR:
        raise ValueError("leading term is only available for the scaled linear trend")
    b1 = scenario.beta[1]
    return b1 * b1 * theta.theta3 ** 2 / (24.0 * theta.theta2) * float(n) ** delta


def logdet_expansion(theta: ThetaParams, n: int, delta: float) -> float:
    """Displayed terms of log det Sigma(theta); the o(n^delta) + O(1) remainder is dropped.

    Numerically the exact log-det departs from this by (theta2/theta1) n^delta
    + (1 - delta) log n; see :func:`logdet_expansion_refined`.
    """
    t1, t2, t3 = theta
    n = float(n)
    return (n * math.log(t1)
            + math.sqrt(2.0 * t2 / t1) * n ** ((1.0 + delta) / 2.0)
            - (t2 / t1 + t3) * n ** delta
            - 0.5 * (1.0 - delta) * math.log(n))


def logdet_expansion_refined(theta: ThetaParams, n: int, delta: float) -> float:
    """Log-det expansion with the n^delta and log n terms re-derived.

    The innovation variance of the differenced process gives
    log sigma^2 = log theta1 + (2 theta2 Delta / theta1)^{1/2} - theta3 Delta + O(Delta^{3/2}),
    and the LDL pivots relax from the marginal variance towards it over about
    n^{(1-delta)/2} steps, which adds +((1 - delta)/2) log n.  The exact
    log-det minus this expansion stays O(1) at delta = 0 and o(n^delta) above.
    """
    t1, t2, t3 = theta
    n = float(n)
    return (n * math.log(t1)
            + math.sqrt(2.0 * t2 / t1) * n ** ((1.0 + delta) / 2.0)
            - t3 * n ** delta
            + 0.5 * (1.0 - delta) * math.log(n))


def trace_expansion_predictions(theta: ThetaParams, theta0: ThetaParams, n: int, delta: float) -> dict:
    """Leading-term predictions for the traces reported by ``trace_diagnostics``.

    ``tr_sigma0_sinv`` is tr(Sigma(theta0) Sigma^-1(theta)); ``tr_seta0_sinv``
    its OU part; ``tr_sinv2`` is tr(Sigma^-2(theta)).
    """
    t1, t2, t3 = theta
    s1, s2, s3 = theta0
    n = float(n)
    mid = n ** ((1.0 + delta) / 2.0)
    low = n ** delta
    seta0 = s2 / math.sqrt(2.0 * t1 * t2) * mid + s2 * (t3 * t3 - s3 * s3) / (2.0 * t2 * s3) * low
    return {
        "tr_sigma0_sinv": s1 / t1 * n - s1 / (2.0 * t1) * math.sqrt(2.0 * t2 / t1) * mid + seta0,
        "tr_seta0_sinv": seta0,
        "tr_sinv_seta_sq": math.sqrt(t2 / (8.0 * t1)) * mid,
        "tr_sinv_ds3_sq": low / t3,
        "tr_sinv2": n / (t1 * t1),
    }


def fisher_limits(theta0: ThetaParams) -> dict:
    """Limits of the normalised Fisher-information traces at theta = theta0."""
    t1, t2, t3 = theta0
    return {
        "tr_sinv2_over_2n": 1.0 / (2.0 * t1 * t1),
        "tr_sinv_seta_sq_over_2t2sq_n2": 1.0 / (2.0 ** 2.5 * math.sqrt(t1) * t2 ** 1.5),
        "tr_sinv_ds3_sq_over_2n3": 1.0 / (2.0 * t3),
    }
