"""Profile log-likelihood, GLS trend coefficients and the -2 loglik decomposition.

All quadratic forms are evaluated in whitened coordinates: with W'W = Sigma^{-1}
(see :func:`mixdom.kernel.whiten`), the GLS projector M(theta) becomes the
orthogonal projector onto span(W X), so

    Z'(I - M)' Sigma^{-1} (I - M) Z = |W Z - W X beta_hat|^2,

and no n x n matrix is ever formed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.linalg

from .core import RANK_TOL, Dataset, ParamBox, SimulationTruth, ThetaParams
from .kernel import TridiagFactor, build_factor, compensated_dot, gram, logdet_sigma, trace_diagnostics, whiten

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class LikelihoodEval:
    loglik: float
    beta_hat: np.ndarray
    logdet: float
    rss_q: float
    theta: ThetaParams


@dataclass(frozen=True)
class Neg2llDecomposition:
    """Pieces of -2 loglik: base_neg2ll0 + h_term + misspec_quad + cross_term - proj_term."""

    h_term: float
    misspec_quad: float
    cross_term: float
    proj_term: float
    base_neg2ll0: float

    def total(self) -> float:
        return self.base_neg2ll0 + self.h_term + self.misspec_quad + self.cross_term - self.proj_term


@dataclass(frozen=True, eq=False)
class _Regression:
    """GLS fit of the columns of ``y`` on X in whitened coordinates."""

    beta: np.ndarray
    resid_w: np.ndarray  # W y - W X beta
    wx: np.ndarray


def _gls(factor: TridiagFactor, x: np.ndarray, y: np.ndarray) -> _Regression:
    wx = whiten(factor, x)
    wy = whiten(factor, y)
    a = gram(wx)
    c = gram(wx, wy if wy.ndim == 2 else wy[:, None])
    ev = np.linalg.eigvalsh(a)
    if ev[0] <= 0 or math.sqrt(ev[0] / ev[-1]) < RANK_TOL:
        raise np.linalg.LinAlgError("singular GLS normal equations X' Sigma^-1 X")
    beta = scipy.linalg.solve(a, c, assume_a="pos")
    if wy.ndim == 1:
        beta = beta[:, 0]
    return _Regression(beta, wy - wx @ beta, wx)


def gls_beta(theta: ThetaParams, dataset: Dataset) -> np.ndarray:
    """beta_hat(theta) = (X' Sigma^-1 X)^-1 X' Sigma^-1 Z."""
    return _gls(build_factor(theta, dataset.grid), dataset.x, dataset.z).beta


def profile_loglik(theta: ThetaParams, dataset: Dataset) -> LikelihoodEval:
    factor = build_factor(theta, dataset.grid)
    reg = _gls(factor, dataset.x, dataset.z)
    logdet = logdet_sigma(factor)
    rss = compensated_dot(reg.resid_w, reg.resid_w)
    ll = -0.5 * (dataset.n * LOG_2PI + logdet + rss)
    return LikelihoodEval(ll, reg.beta, logdet, rss, theta)


def neg2ll(theta: ThetaParams, dataset: Dataset) -> float:
    return -2.0 * profile_loglik(theta, dataset).loglik


def misspec_quad(theta: ThetaParams, truth: SimulationTruth, design: np.ndarray) -> float:
    """mu0' Sigma^-1 (I - M) mu0: the GLS residual quadratic form of the true trend."""
    reg = _gls(build_factor(theta, truth.grid), np.asarray(design, dtype=float), truth.mu0)
    return compensated_dot(reg.resid_w, reg.resid_w)


def neg2ll_decomposition(theta: ThetaParams, dataset: Dataset,
                         trace_cap: int | None = None) -> Neg2llDecomposition:
    """Split -2 loglik(theta) into the noise log-density and the trend terms.

    The deterministic part uses tr(Sigma^-1(theta) Sigma(theta0)), which is
    computed exactly in O(n^2), so this is a diagnostic for moderate n.
    """
    truth = dataset.truth
    if truth is None:
        raise ValueError("neg2ll_decomposition needs a dataset carrying its simulation truth")
    factor = build_factor(theta, dataset.grid)
    both = np.column_stack([truth.mu0, truth.noise])
    reg = _gls(factor, dataset.x, both)
    w_noise = whiten(factor, truth.noise)
    r_mu, r_e = reg.resid_w[:, 0], reg.resid_w[:, 1]
    misspec = compensated_dot(r_mu, r_mu)
    cross = 2.0 * compensated_dot(r_mu, r_e)
    # |P w|^2 = |w|^2 - |(I - P) w|^2 loses accuracy; project explicitly instead
    proj_vec = w_noise - r_e
    proj = compensated_dot(proj_vec, proj_vec)
    quad_noise = compensated_dot(w_noise, w_noise)
    tr = trace_diagnostics(theta, truth.theta0, dataset.grid, cap=trace_cap)
    tr_sigma0 = truth.theta0.theta1 * tr["tr_sinv"] + tr["tr_seta0_sinv"]
    base = dataset.n * LOG_2PI + logdet_sigma(factor) + tr_sigma0
    return Neg2llDecomposition(quad_noise - tr_sigma0, misspec, cross, proj, base)


def theta_lattice(box: ParamBox, points: int = 5) -> list[ThetaParams]:
    """Log-spaced tensor lattice over the box."""
    axes = [np.geomspace(lo, hi, points) for lo, hi in zip(box.lower, box.upper)]
    return [ThetaParams(*t) for t in itertools.product(*axes)]


def r_theta_sup(truth: SimulationTruth, design: np.ndarray, theta_grid: Iterable[ThetaParams]) -> float:
    """Lattice lower bound for R(Theta) = max(sup mu0' Sigma^-1 (I - M) mu0, p)."""
    design = np.asarray(design, dtype=float)
    best = -math.inf
    count = 0
    for theta in theta_grid:
        best = max(best, misspec_quad(theta, truth, design))
        count += 1
    if count == 0:
        raise ValueError("theta_grid is empty")
    return max(best, float(design.shape[1] - 1))


def loglik_gradient_fd(theta: ThetaParams, dataset: Dataset, rel_step: float = 1e-4) -> np.ndarray:
    """Central finite-difference gradient of loglik with respect to theta."""
    t = theta.as_array()
    g = np.empty(3)
    for k in range(3):
        h = rel_step * t[k]
        up, dn = t.copy(), t.copy()
        up[k] += h
        dn[k] -= h
        g[k] = (profile_loglik(ThetaParams.from_array(up), dataset).loglik
                - profile_loglik(ThetaParams.from_array(dn), dataset).loglik) / (2 * h)
    return g


def richardson_gradient(theta: ThetaParams, dataset: Dataset, rel_step: float = 1e-3) -> np.ndarray:
    """Richardson-extrapolated central differences (steps h and h/2)."""
    g1 = loglik_gradient_fd(theta, dataset, rel_step)
    g2 = loglik_gradient_fd(theta, dataset, rel_step / 2)
    return (4.0 * g2 - g1) / 3.0
