"""Replicated simulate -> fit -> aggregate experiments, compared against asymptotic predictions."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.special import ndtr

from .asymptotics import Mode, predicted_rate
from .core import MixedDomainGrid, ParamBox, ScenarioSpec, SimulationTruth, ThetaParams, TrendKind
from .estimator import FitError, OptimizerOptions, fit_ml
from .likelihood import r_theta_sup, theta_lattice
from .simulation import RngSpec, sample_dataset, streams, true_trend

ROW_FIELDS = ["scenario", "n", "delta", "rep", "seed", "theta1_hat", "theta2_hat", "theta3_hat",
              "loglik", "converged", "at_boundary"]
SUMMARY_FIELDS = ["scenario", "n", "param", "mean_error", "emp_var_scaled", "pred_var", "ks",
                  "rate_slope", "boundary_hits", "failures"]


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioSpec
    theta0: ThetaParams
    delta: float
    n_ladder: tuple
    replicates: int
    rng: RngSpec = field(default_factory=RngSpec)
    box: ParamBox = field(default_factory=ParamBox.default)
    optimizer: OptimizerOptions = field(default_factory=OptimizerOptions)
    outputs: Mapping = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        ladder = tuple(int(n) for n in self.n_ladder)
        if not ladder or any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError("n_ladder must be non-empty and strictly increasing")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        for n in ladder:
            MixedDomainGrid(n, self.delta)
        object.__setattr__(self, "n_ladder", ladder)
        object.__setattr__(self, "outputs", dict(self.outputs))
        if not self.name:
            object.__setattr__(self, "name", self.scenario.kind.value)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentConfig":
        known = {"name", "scenario", "theta0", "delta", "n_ladder", "replicates", "rng", "box",
                 "optimizer", "outputs"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        box = d.get("box")
        opt = d.get("optimizer") or {}
        return cls(
            scenario=ScenarioSpec.from_dict(d["scenario"]),
            theta0=ThetaParams.from_array(d["theta0"]),
            delta=float(d["delta"]),
            n_ladder=tuple(d["n_ladder"]),
            replicates=int(d["replicates"]),
            rng=RngSpec(int((d.get("rng") or {}).get("base_seed", 0))),
            box=ParamBox(ThetaParams.from_array(box["lower"]), ThetaParams.from_array(box["upper"]))
            if box else ParamBox.default(),
            optimizer=OptimizerOptions(**opt),
            outputs=d.get("outputs") or {},
            name=d.get("name", ""),
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        o = self.optimizer
        return {
            "name": self.name,
            "scenario": self.scenario.to_dict(),
            "theta0": list(self.theta0),
            "delta": self.delta,
            "n_ladder": list(self.n_ladder),
            "replicates": self.replicates,
            "rng": {"base_seed": self.rng.base_seed},
            "box": {"lower": list(self.box.lower), "upper": list(self.box.upper)},
            "optimizer": {"max_evals": o.max_evals, "ftol": o.ftol, "starts": o.starts,
                          "simplex_step": o.simplex_step},
            "outputs": dict(self.outputs),
        }


@dataclass(frozen=True)
class ReplicateRow:
    scenario: str
    n: int
    delta: float
    rep: int
    seed: int
    theta_hat: Optional[tuple]
    loglik: Optional[float]
    converged: bool
    at_boundary: tuple

    @property
    def failed(self) -> bool:
        return self.theta_hat is None

    @property
    def boundary_hit(self) -> bool:
        return any(self.at_boundary)


@dataclass(frozen=True)
class SummaryRow:
    scenario: str
    n: int
    param: int
    mean_error: Optional[float]
    emp_var_scaled: Optional[float]
    pred_var: Optional[float]
    ks: Optional[float]
    rate_slope: Optional[float]
    boundary_hits: int
    failures: int
    used: int


@dataclass(frozen=True)
class McSummary:
    rows: tuple

    def cell(self, n: int, param: int) -> SummaryRow:
        for r in self.rows:
            if r.n == n and r.param == param:
                return r
        raise KeyError((n, param))


# --- statistics ------------------------------------------------------------

def ks_statistic(samples: Sequence[float], variance: float) -> float:
    """Sup distance between the empirical CDF and N(0, variance)."""
    x = np.sort(np.asarray(samples, dtype=float))
    m = len(x)
    if m < 20:
        raise ValueError(f"ks_statistic needs at least 20 samples, got {m}")
    if not variance > 0:
        raise ValueError("variance must be > 0")
    cdf = ndtr(x / math.sqrt(variance))
    i = np.arange(1, m + 1)
    return float(max(np.max(i / m - cdf), np.max(cdf - (i - 1) / m)))


def estimate_rate(errors: Mapping[int, Sequence[float]]) -> float:
    """Least-squares slope of log RMSE against log n (about -r for an O(n^-r) error)."""
    pts = [(n, np.asarray(e, dtype=float)) for n, e in sorted(errors.items()) if len(e) > 0]
    if len(pts) < 2:
        raise ValueError("estimate_rate needs at least two ladder points with errors")
    logn = np.array([math.log(n) for n, _ in pts])
    logr = np.array([0.5 * math.log(math.fsum(e * e) / len(e)) for _, e in pts])
    slope, _ = np.polyfit(logn, logr, 1)
    return float(slope)


def _mean(v: np.ndarray) -> float:
    return math.fsum(v) / len(v)


def _var(v: np.ndarray) -> Optional[float]:
    if len(v) < 2:
        return None
    m = _mean(v)
    return math.fsum((v - m) ** 2) / (len(v) - 1)


# --- replicate execution ---------------------------------------------------

def _run_one(scenario: ScenarioSpec, theta0: ThetaParams, delta: float, n: int, rep: int, seed: int,
             box: ParamBox, opts: OptimizerOptions) -> ReplicateRow:
    ds = sample_dataset(scenario, theta0, MixedDomainGrid(n, delta), seed)
    try:
        fit = fit_ml(ds, box, opts)
    except FitError:
        return ReplicateRow(scenario.kind.value, n, delta, rep, seed, None, None, False, (False,) * 3)
    return ReplicateRow(scenario.kind.value, n, delta, rep, seed, tuple(fit.theta_hat), fit.loglik,
                        fit.converged, fit.at_boundary)


def _run_task(args):
    return _run_one(*args)


def default_jobs() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def run_replicates(config: ExperimentConfig, jobs: int | None = None) -> list[ReplicateRow]:
    tasks = [
        (config.scenario, config.theta0, config.delta, n, rep,
         config.rng.replicate_seed(config.scenario.code, n, rep), config.box, config.optimizer)
        for n in config.n_ladder for rep in range(config.replicates)
    ]
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    if jobs == 1:
        rows = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_run_task, tasks, chunksize=max(1, len(tasks) // (8 * jobs))))
    return sorted(rows, key=lambda r: (r.n, r.rep))


def summarize(config: ExperimentConfig, rows: Sequence[ReplicateRow]) -> McSummary:
    rows = sorted(rows, key=lambda r: (r.n, r.rep))
    preds = {i: predicted_rate(config.scenario, config.theta0, config.delta, i) for i in (1, 2, 3)}
    errors = {i: {} for i in (1, 2, 3)}
    cells = []
    for n in config.n_ladder:
        at_n = [r for r in rows if r.n == n]
        failures = sum(r.failed for r in at_n)
        hits = sum((not r.failed) and r.boundary_hit for r in at_n)
        used = [r for r in at_n if not r.failed and not r.boundary_hit]
        for i in (1, 2, 3):
            err = np.array([r.theta_hat[i - 1] - config.theta0[i - 1] for r in used])
            errors[i][n] = err
            cells.append((n, i, err, hits, failures))
    slopes = {}
    for i in (1, 2, 3):
        try:
            slopes[i] = estimate_rate(errors[i])
        except ValueError:
            slopes[i] = None
    out = []
    for n, i, err, hits, failures in cells:
        pred = preds[i]
        scaled = err * float(n) ** pred.exponent if pred.exponent is not None else None
        pred_var = pred.limit_variance if pred.mode is Mode.CLT else None
        ks = None
        if pred_var is not None and len(err) >= 20:
            ks = ks_statistic(scaled, pred_var)
        out.append(SummaryRow(
            config.scenario.kind.value, n, i,
            _mean(err) if len(err) else None,
            _var(scaled) if scaled is not None else None,
            pred_var, ks, slopes[i], hits, failures, len(err)))
    return McSummary(tuple(out))


def run_experiment(config: ExperimentConfig, jobs: int | None = None) -> tuple[McSummary, list[ReplicateRow]]:
    """Simulate, fit and summarise every (n, replicate) cell; write CSVs named in ``config.outputs``."""
    rows = run_replicates(config, jobs)
    summary = summarize(config, rows)
    if config.outputs.get("rows_csv"):
        Path(config.outputs["rows_csv"]).write_text(rows_csv(rows))
    if config.outputs.get("summary_csv"):
        Path(config.outputs["summary_csv"]).write_text(summary_csv(summary))
    return summary, rows


# --- CSV -------------------------------------------------------------------

def _f(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def rows_csv(rows: Sequence[ReplicateRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_FIELDS)
    for r in rows:
        th = r.theta_hat or (None, None, None)
        w.writerow([r.scenario, _f(r.n), _f(r.delta), _f(r.rep), _f(r.seed), _f(th[0]), _f(th[1]), _f(th[2]),
                    _f(r.loglik), _f(r.converged), "".join("1" if b else "0" for b in r.at_boundary)])
    return buf.getvalue()


def summary_csv(summary: McSummary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    for r in summary.rows:
        w.writerow([r.scenario, _f(r.n), _f(r.param), _f(r.mean_error), _f(r.emp_var_scaled), _f(r.pred_var),
                    _f(r.ks), _f(r.rate_slope), _f(r.boundary_hits), _f(r.failures)])
    return buf.getvalue()


def read_rows_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- R(Theta) growth study -------------------------------------------------

def risk_study(scenario: ScenarioSpec, theta0: ThetaParams, delta: float, n_ladder: Sequence[int],
               draws: int, rng: RngSpec, box: ParamBox, points: int = 5) -> dict:
    """Lattice R(Theta) per (n, trend draw), per-n medians and the log-log growth slope."""
    lattice = theta_lattice(box, points)
    values = {}
    for n in n_ladder:
        grid = MixedDomainGrid(n, delta)
        design = scenario.design(grid)
        vals = []
        for d in range(draws):
            seed = rng.replicate_seed(scenario.code, n, d)
            mu0, _ = true_trend(scenario, grid, streams(seed)[1])
            zero = np.zeros(n)
            truth = SimulationTruth(mu0, zero, zero, theta0, scenario, grid)
            vals.append(r_theta_sup(truth, design, lattice))
        values[n] = vals
    medians = {n: float(np.median(v)) for n, v in values.items()}
    ns = sorted(medians)
    slope = float(np.polyfit(np.log(ns), np.log([medians[n] for n in ns]), 1)[0]) if len(ns) > 1 else None
    return {"values": values, "medians": medians, "slope": slope}


RISK_FIELDS = ["scenario", "n", "draw", "r_theta", "median", "slope"]


@dataclass(frozen=True)
class RiskConfig:
    """Growth study of the lattice R(Theta) across an n-ladder, one block per scenario."""

    scenarios: tuple
    delta: float
    n_ladder: tuple
    draws: int
    theta0: ThetaParams = ThetaParams(1.0, 1.0, 1.0)
    rng: RngSpec = field(default_factory=RngSpec)
    box: ParamBox = field(default_factory=lambda: ParamBox(ThetaParams(0.5, 0.5, 0.5), ThetaParams(2.0, 2.0, 2.0)))
    points: int = 5
    outputs: Mapping = field(default_factory=dict)
    name: str = "risk"

    def __post_init__(self):
        ladder = tuple(int(n) for n in self.n_ladder)
        if len(ladder) < 2 or any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError("n_ladder needs at least two strictly increasing sizes")
        if self.draws < 1 or self.points < 1:
            raise ValueError("draws and points must be >= 1")
        object.__setattr__(self, "n_ladder", ladder)
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        object.__setattr__(self, "outputs", dict(self.outputs))

    @classmethod
    def from_dict(cls, d: Mapping) -> "RiskConfig":
        known = {"name", "scenarios", "theta0", "delta", "n_ladder", "draws", "rng", "box", "points", "outputs"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        if "theta0" in d:
            kw["theta0"] = ThetaParams.from_array(d["theta0"])
        if "box" in d:
            kw["box"] = ParamBox(ThetaParams.from_array(d["box"]["lower"]), ThetaParams.from_array(d["box"]["upper"]))
        return cls(
            scenarios=tuple(ScenarioSpec.from_dict(s) for s in d["scenarios"]),
            delta=float(d["delta"]),
            n_ladder=tuple(d["n_ladder"]),
            draws=int(d["draws"]),
            rng=RngSpec(int((d.get("rng") or {}).get("base_seed", 0))),
            points=int(d.get("points", 5)),
            outputs=d.get("outputs") or {},
            name=d.get("name", "risk"),
            **kw,
        )

    @classmethod
    def load(cls, path) -> "RiskConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "scenarios": [s.to_dict() for s in self.scenarios],
            "theta0": list(self.theta0),
            "delta": self.delta,
            "n_ladder": list(self.n_ladder),
            "draws": self.draws,
            "rng": {"base_seed": self.rng.base_seed},
            "box": {"lower": list(self.box.lower), "upper": list(self.box.upper)},
            "points": self.points,
            "outputs": dict(self.outputs),
        }


def run_risk(config: RiskConfig) -> tuple[dict, str]:
    """Per-scenario studies keyed by scenario name, plus their concatenated CSV."""
    studies = {}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RISK_FIELDS)
    for sc in config.scenarios:
        # a deterministic trend has nothing to redraw
        draws = config.draws if sc.kind is TrendKind.GP else 1
        study = risk_study(sc, config.theta0, config.delta, config.n_ladder, draws, config.rng, config.box,
                           config.points)
        studies[sc.kind.value] = study
        for n in sorted(study["values"]):
            for d, v in enumerate(study["values"][n]):
                w.writerow([sc.kind.value, n, d, _f(v), _f(study["medians"][n]), _f(study["slope"])])
    text = buf.getvalue()
    if config.outputs.get("risk_csv"):
        Path(config.outputs["risk_csv"]).write_text(text)
    return studies, text
