"""Domain types: covariance parameters, mixed-domain grids, datasets and scenarios."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

RANK_TOL = 1e-10


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ThetaParams:
    """Covariance parameters of the OU-plus-nugget model.

    ``theta1`` is the nugget variance, ``theta2`` the microergodic product
    sigma_eta^2 * kappa and ``theta3`` the decay rate kappa.  The OU marginal
    variance is ``theta2 / theta3``.
    """

    theta1: float
    theta2: float
    theta3: float

    def __post_init__(self):
        for name in ("theta1", "theta2", "theta3"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be finite and > 0, got {v!r}")
            object.__setattr__(self, name, v)

    @property
    def ou_variance(self) -> float:
        return self.theta2 / self.theta3

    def as_array(self) -> np.ndarray:
        return np.array([self.theta1, self.theta2, self.theta3])

    def __iter__(self):
        return iter((self.theta1, self.theta2, self.theta3))

    def __getitem__(self, i: int) -> float:
        return (self.theta1, self.theta2, self.theta3)[i]

    @classmethod
    def from_array(cls, a: Sequence[float]) -> "ThetaParams":
        if len(a) != 3:
            raise ValueError(f"expected 3 components, got {len(a)}")
        return cls(float(a[0]), float(a[1]), float(a[2]))

    @classmethod
    def parse(cls, text: str) -> "ThetaParams":
        """Parse ``"a,b,c"`` (scientific notation allowed)."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 3:
            raise ValueError(f"expected three comma-separated values, got {text!r}")
        return cls.from_array([float(p) for p in parts])

    def format(self) -> str:
        return ",".join(f"{v:.17g}" for v in self)


@dataclass(frozen=True)
class ParamBox:
    lower: ThetaParams
    upper: ThetaParams

    def __post_init__(self):
        if not np.all(self.lower.as_array() < self.upper.as_array()):
            raise ValueError(f"box needs lower < upper componentwise: {self.lower} vs {self.upper}")

    @classmethod
    def default(cls) -> "ParamBox":
        return cls(ThetaParams(1e-3, 1e-3, 1e-3), ThetaParams(1e3, 1e3, 1e3))

    @classmethod
    def parse(cls, text: str) -> "ParamBox":
        """Parse ``"l1,l2,l3:u1,u2,u3"``; a single number on either side is broadcast."""
        lo, _, hi = text.partition(":")
        if not hi:
            raise ValueError(f"box must look like 'l1,l2,l3:u1,u2,u3', got {text!r}")

        def side(t: str) -> ThetaParams:
            if "," not in t:
                t = ",".join([t.strip()] * 3)
            return ThetaParams.parse(t)

        return cls(side(lo), side(hi))

    def contains(self, theta: ThetaParams) -> bool:
        t = theta.as_array()
        return bool(np.all(t >= self.lower.as_array()) and np.all(t <= self.upper.as_array()))

    def clamp(self, theta: ThetaParams) -> ThetaParams:
        return ThetaParams.from_array(
            np.clip(theta.as_array(), self.lower.as_array(), self.upper.as_array())
        )


@dataclass(frozen=True)
class MixedDomainGrid:
    """n regular sites s_i = i * n^-(1-delta), i = 1..n, on the domain [0, n^delta]."""

    n: int
    delta: float

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        d = float(self.delta)
        if not (0.0 <= d < 1.0):
            raise ValueError(f"delta must lie in [0, 1), got {self.delta!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "delta", d)

    @property
    def spacing(self) -> float:
        return float(self.n) ** (-(1.0 - self.delta))

    @property
    def domain_length(self) -> float:
        return float(self.n) ** self.delta

    def site(self, i: int) -> float:
        if not 1 <= i <= self.n:
            raise IndexError(i)
        return i * self.spacing

    def sites(self) -> np.ndarray:
        return np.arange(1, self.n + 1, dtype=np.float64) * self.spacing

    def scaled_sites(self) -> np.ndarray:
        """n^-delta * s_i = i / n, the unit-range regressor used for linear trends."""
        return np.arange(1, self.n + 1, dtype=np.float64) / self.n


def make_grid(n: int, delta: float) -> MixedDomainGrid:
    return MixedDomainGrid(n, delta)


class TrendKind(str, enum.Enum):
    CORRECT = "correct"
    SCALED_LINEAR = "scaled_linear"
    GP = "gp"

    @classmethod
    def parse(cls, text: str) -> "TrendKind":
        aliases = {
            "correct": cls.CORRECT, "correcttrend": cls.CORRECT,
            "scaled_linear": cls.SCALED_LINEAR, "scaledlineartrend": cls.SCALED_LINEAR,
            "linear": cls.SCALED_LINEAR,
            "gp": cls.GP, "gptrend": cls.GP,
        }
        key = text.strip().lower().replace("-", "_")
        if key not in aliases and key.replace("_", "") not in aliases:
            raise ValueError(f"unknown scenario {text!r}; use correct, scaled_linear or gp")
        return aliases.get(key) or aliases[key.replace("_", "")]


@dataclass(frozen=True)
class ScenarioSpec:
    """Trend scenario.

    For ``CORRECT`` the fitted design is ``[1, u, u^2, ..., u^p]`` with
    ``u = s / n^delta`` and ``beta`` has ``p + 1`` entries.  The two
    misspecified kinds are fitted intercept-only and ``beta`` holds
    ``(beta00, beta01)``.
    """

    kind: TrendKind
    beta: tuple = (0.0, 1.0)
    gp_params: Optional[tuple] = None
    p: int = 0

    def __post_init__(self):
        kind = TrendKind.parse(self.kind) if isinstance(self.kind, str) else self.kind
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if self.p < 0:
            raise ValueError("p must be nonnegative")
        if kind is TrendKind.CORRECT:
            if len(self.beta) != self.p + 1:
                raise ValueError(f"correct trend needs p + 1 = {self.p + 1} coefficients, got {len(self.beta)}")
        else:
            if self.p != 0:
                raise ValueError(f"{kind.value} scenarios are fitted intercept-only (p = 0)")
            if len(self.beta) != 2:
                raise ValueError(f"{kind.value} needs beta = (beta00, beta01)")
        if kind is TrendKind.GP:
            if self.gp_params is None or len(self.gp_params) != 2 or min(self.gp_params) <= 0:
                raise ValueError("gp trend needs positive gp_params = (theta12, theta13)")
            object.__setattr__(self, "gp_params", tuple(float(g) for g in self.gp_params))
        elif self.gp_params is not None:
            raise ValueError("gp_params only apply to the gp scenario")

    @property
    def code(self) -> int:
        return {TrendKind.CORRECT: 0, TrendKind.SCALED_LINEAR: 1, TrendKind.GP: 2}[self.kind]

    def design(self, grid: MixedDomainGrid) -> np.ndarray:
        return polynomial_design(grid, self.p)

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "beta": list(self.beta), "p": self.p}
        if self.gp_params is not None:
            d["gp_params"] = list(self.gp_params)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        gp = d.get("gp_params")
        return cls(TrendKind.parse(d["kind"]), tuple(d.get("beta", (0.0, 1.0))),
                   tuple(gp) if gp is not None else None, int(d.get("p", 0)))


def polynomial_design(grid: MixedDomainGrid, p: int) -> np.ndarray:
    u = grid.scaled_sites()
    return np.vander(u, p + 1, increasing=True)


@dataclass(frozen=True)
class SimulationTruth:
    mu0: np.ndarray
    eta: np.ndarray
    eps: np.ndarray
    theta0: ThetaParams
    scenario: ScenarioSpec
    grid: MixedDomainGrid
    trend_x: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("mu0", "eta", "eps"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))
        if self.trend_x is not None:
            object.__setattr__(self, "trend_x", _freeze(self.trend_x))
        if not (self.mu0.shape == self.eta.shape == self.eps.shape == (self.grid.n,)):
            raise ValueError("mu0, eta and eps must all have length n")

    @property
    def noise(self) -> np.ndarray:
        return self.eta + self.eps


@dataclass(frozen=True)
class Dataset:
    """Responses ``z`` with design ``x`` (first column the intercept) on a grid."""

    grid: MixedDomainGrid
    z: np.ndarray
    x: np.ndarray
    truth: Optional[SimulationTruth] = field(default=None, compare=False)

    def __post_init__(self):
        z = _freeze(np.asarray(self.z, dtype=np.float64).reshape(-1))
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        x = _freeze(x)
        n = self.grid.n
        if z.shape != (n,):
            raise ValueError(f"z must have length n = {n}, got {z.shape}")
        if x.shape[0] != n:
            raise ValueError(f"x must have n = {n} rows, got {x.shape[0]}")
        if x.shape[1] > n:
            raise ValueError("need p + 1 <= n")
        if not np.all(x[:, 0] == 1.0):
            raise ValueError("first design column must be the intercept (all ones)")
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(x))):
            raise ValueError("non-finite values in z or x")
        check_full_rank(x)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def p(self) -> int:
        return self.x.shape[1] - 1

    def with_design(self, x: np.ndarray) -> "Dataset":
        return Dataset(self.grid, self.z, x, self.truth)


def check_full_rank(x: np.ndarray) -> None:
    sv = np.linalg.svd(x, compute_uv=False)
    if sv[-1] < RANK_TOL * sv[0]:
        raise np.linalg.LinAlgError(
            f"design is rank deficient: singular value ratio {sv[-1] / sv[0]:.3g} < {RANK_TOL:g}"
        )


# --- CSV persistence -------------------------------------------------------

def _fmt(v: float) -> str:
    return f"{v:.17g}"


def write_dataset_csv(dataset: Dataset, path) -> None:
    """Write ``s,z,x1,...,xp``; the intercept column is implicit."""
    s = dataset.grid.sites()
    header = ["s", "z"] + [f"x{j}" for j in range(1, dataset.p + 1)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(dataset.n):
            w.writerow([_fmt(s[i]), _fmt(dataset.z[i])] + [_fmt(v) for v in dataset.x[i, 1:]])


def write_truth_csv(truth: SimulationTruth, path) -> None:
    s = truth.grid.sites()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "mu0", "eta", "eps"])
        for i in range(truth.grid.n):
            w.writerow([_fmt(s[i]), _fmt(truth.mu0[i]), _fmt(truth.eta[i]), _fmt(truth.eps[i])])


def infer_grid(s: np.ndarray) -> MixedDomainGrid:
    """Recover (n, delta) from the site column; rejects irregular spacing."""
    n = len(s)
    if n == 0:
        raise ValueError("empty dataset")
    if n == 1:
        delta = 0.0
    else:
        if s[-1] <= 0:
            raise ValueError("sites must be positive")
        delta = round(math.log(s[-1]) / math.log(n), 12)
    grid = MixedDomainGrid(n, delta)
    if not np.allclose(s, grid.sites(), rtol=1e-9, atol=0.0):
        raise ValueError(
            f"sites are not the regular mixed-domain grid s_i = i*n^-(1-delta) (inferred delta={delta})"
        )
    return grid


def read_dataset_csv(path) -> Dataset:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header[:2] != ["s", "z"] or header[2:] != [f"x{j}" for j in range(1, len(header) - 1)]:
        raise ValueError(f"{path}: header must be s,z,x1,...,xp; got {','.join(header)}")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric entry ({exc})") from None
    if data.ndim != 2 or data.shape[0] == 0 or data.shape[1] != len(header):
        raise ValueError(f"{path}: ragged or empty data rows")
    grid = infer_grid(data[:, 0])
    x = np.column_stack([np.ones(grid.n), data[:, 2:]])
    return Dataset(grid, data[:, 1], x)


def read_truth_csv(path, theta0: ThetaParams, scenario: ScenarioSpec) -> SimulationTruth:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    grid = infer_grid(data[:, 0])
    return SimulationTruth(data[:, 1], data[:, 2], data[:, 3], theta0, scenario, grid)
