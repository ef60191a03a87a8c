"""Exact sampling of trend + OU + measurement error on a mixed-domain grid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .core import Dataset, MixedDomainGrid, ScenarioSpec, SimulationTruth, ThetaParams, TrendKind
from .kernel import one_minus_rho_sq

NOISE_STREAM = 0
TREND_STREAM = 1


@dataclass(frozen=True)
class RngSpec:
    """Seed derivation for replicated experiments.

    Each (scenario, n, replicate) cell gets its own 64-bit seed, hashed from
    the base seed by numpy's ``SeedSequence``; the seed in turn spawns one
    Philox stream for the noise and an independent one for random trends.
    """

    base_seed: int = 0

    def replicate_seed(self, scenario_id: int, n: int, rep: int) -> int:
        ss = np.random.SeedSequence(self.base_seed, spawn_key=(scenario_id, n, rep))
        return int(ss.generate_state(1, np.uint64)[0])


def streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """(noise, trend) generators derived from one replicate seed."""
    noise, trend = np.random.SeedSequence(seed).spawn(2)
    return np.random.Generator(np.random.Philox(noise)), np.random.Generator(np.random.Philox(trend))


def _ou_path(variance: float, decay: float, grid: MixedDomainGrid, rng: np.random.Generator) -> np.ndarray:
    rho = math.exp(-decay * grid.spacing)
    w = rng.standard_normal(grid.n)
    w[0] *= math.sqrt(variance)
    w[1:] *= math.sqrt(variance * one_minus_rho_sq(decay, grid.spacing))
    # eta_{i+1} = rho * eta_i + innovation_i
    return lfilter([1.0], [1.0, -rho], w)


def sample_ou(theta0: ThetaParams, grid: MixedDomainGrid, rng: np.random.Generator) -> np.ndarray:
    """Stationary OU path with covariance (theta2/theta3) exp(-theta3 |s - s'|)."""
    return _ou_path(theta0.ou_variance, theta0.theta3, grid, rng)


def true_trend(scenario: ScenarioSpec, grid: MixedDomainGrid,
               trend_rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray | None]:
    """mu0 at the sites, plus the latent x path for the gp scenario."""
    if scenario.kind is TrendKind.CORRECT:
        return scenario.design(grid) @ np.asarray(scenario.beta), None
    b0, b1 = scenario.beta
    if scenario.kind is TrendKind.SCALED_LINEAR:
        return b0 + b1 * grid.scaled_sites(), None
    if trend_rng is None:
        raise ValueError("gp trend needs a trend stream")
    t12, t13 = scenario.gp_params
    x = _ou_path(t12 / t13, t13, grid, trend_rng)
    return b0 + b1 * x, x


def sample_dataset(scenario: ScenarioSpec, theta0: ThetaParams, grid: MixedDomainGrid,
                   seed: int) -> Dataset:
    noise_rng, trend_rng = streams(seed)
    mu0, x_path = true_trend(scenario, grid, trend_rng)
    eta = sample_ou(theta0, grid, noise_rng)
    eps = math.sqrt(theta0.theta1) * noise_rng.standard_normal(grid.n)
    z = mu0 + eta + eps
    truth = SimulationTruth(mu0, eta, eps, theta0, scenario, grid, x_path)
    return Dataset(grid, z, scenario.design(grid), truth)
