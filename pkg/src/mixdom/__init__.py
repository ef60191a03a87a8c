"""Exact O(n) maximum likelihood for an Ornstein-Uhlenbeck process with nugget and trend on mixed-domain grids."""

from .core import (Dataset, MixedDomainGrid, ParamBox, ScenarioSpec, SimulationTruth, ThetaParams, TrendKind,
                   make_grid)
from .estimator import EstimationResult, OptimizerOptions, fit_ml
from .kernel import build_factor, logdet_sigma, quad_form, sigma_solve
from .likelihood import profile_loglik
from .simulation import RngSpec, sample_dataset

__all__ = [
    "Dataset", "MixedDomainGrid", "ParamBox", "ScenarioSpec", "SimulationTruth", "ThetaParams", "TrendKind",
    "make_grid", "EstimationResult", "OptimizerOptions", "fit_ml", "build_factor", "logdet_sigma",
    "quad_form", "sigma_solve", "profile_loglik", "RngSpec", "sample_dataset",
]
