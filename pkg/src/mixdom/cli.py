"""Command-line entry point: ``mixdom {simulate,fit,mc,diag,oracle-check}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np
import scipy.linalg

from .asymptotics import logdet_expansion, trace_expansion_predictions
from .core import (MixedDomainGrid, ParamBox, ScenarioSpec, ThetaParams, TrendKind, read_dataset_csv,
                   write_dataset_csv, write_truth_csv)
from .estimator import FitError, OptimizerOptions, fit_ml
from .kernel import (CapExceededError, build_factor, dense_cap, dense_sigma, logdet_sigma, quad_form,
                     sigma_solve, trace_diagnostics)
from .mc import ExperimentConfig, RiskConfig, default_jobs, run_experiment, run_risk, summary_csv
from .simulation import sample_dataset


class CliError(Exception):
    pass


def _g(v) -> str:
    return f"{float(v):.17g}"


def _json_num(obj):
    """JSON with every float rendered at 17 significant digits."""
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_json_num(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_json_num(v) for v in obj) + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return _g(v) if math.isfinite(v) else json.dumps(str(v))
    return json.dumps(obj)


def _echo(cmd: str, resolved: dict) -> None:
    print(f"# mixdom {cmd} {_json_num(resolved)}", file=sys.stderr)


def _delta(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"delta must be a number in [0, 1), got {text!r}") from None
    if not 0.0 <= v < 1.0:
        raise argparse.ArgumentTypeError(f"delta must lie in the range [0, 1), got {text}")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _theta(text: str) -> ThetaParams:
    try:
        return ThetaParams.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _box(text: str) -> ParamBox:
    try:
        return ParamBox.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ladder(text: str) -> tuple:
    try:
        ns = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if any(n < 1 for n in ns):
        raise argparse.ArgumentTypeError("ladder entries must be positive")
    return ns


# --- simulate --------------------------------------------------------------

def cmd_simulate(args) -> int:
    kind = TrendKind.parse(args.scenario)
    if args.beta is not None:
        beta = args.beta
    elif kind is TrendKind.CORRECT:
        beta = (1.0,) * (args.p + 1)
    else:
        beta = (0.0, 1.0)
    gp = args.gp_params if kind is TrendKind.GP else None
    if kind is TrendKind.GP and gp is None:
        gp = (1.0, 1.0)
    scenario = ScenarioSpec(kind, beta, gp, args.p)
    grid = MixedDomainGrid(args.n, args.delta)
    out = Path(args.out)
    truth_path = Path(args.truth) if args.truth else out.with_name(out.stem + ".truth.csv")
    _echo("simulate", {"scenario": scenario.to_dict(), "theta0": list(args.theta0), "n": args.n,
                       "delta": args.delta, "seed": args.seed, "out": str(out), "truth": str(truth_path)})
    ds = sample_dataset(scenario, args.theta0, grid, args.seed)
    write_dataset_csv(ds, out)
    write_truth_csv(ds.truth, truth_path)
    return 0


# --- fit -------------------------------------------------------------------

def cmd_fit(args) -> int:
    opts = OptimizerOptions(starts=args.starts, max_evals=args.max_evals)
    _echo("fit", {"data": args.data, "box": {"lower": list(args.box.lower), "upper": list(args.box.upper)},
                  "starts": opts.starts, "max_evals": opts.max_evals, "ftol": opts.ftol})
    try:
        ds = read_dataset_csv(args.data)
    except OSError as exc:
        raise CliError(f"cannot read {args.data}: {exc.strerror or exc}") from None
    res = fit_ml(ds, args.box, opts)
    out = res.to_dict()
    out["n"] = ds.n
    out["delta"] = ds.grid.delta
    print(_json_num(out))
    return 0


# --- mc --------------------------------------------------------------------

def cmd_mc(args) -> int:
    try:
        raw = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise CliError(f"cannot read {args.config}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{args.config}: invalid JSON ({exc})") from None
    outputs = dict(raw.get("outputs") or {})
    if "draws" in raw:
        # R(Theta) growth study: no fitting, so --jobs does not apply
        if args.summary:
            outputs["risk_csv"] = args.summary
        raw["outputs"] = outputs
        rconf = RiskConfig.from_dict(raw)
        _echo("mc", rconf.to_dict())
        studies, text = run_risk(rconf)
        for name, st in studies.items():
            print(f"{name}: log-log slope {_g(st['slope'])}", file=sys.stderr)
        if not outputs.get("risk_csv"):
            sys.stdout.write(text)
        return 0
    if args.rows:
        outputs["rows_csv"] = args.rows
    if args.summary:
        outputs["summary_csv"] = args.summary
    raw["outputs"] = outputs
    config = ExperimentConfig.from_dict(raw)
    jobs = args.jobs or default_jobs()
    _echo("mc", {**config.to_dict(), "jobs": jobs})
    summary, rows = run_experiment(config, jobs)
    failed = sum(r.failed for r in rows)
    hits = sum((not r.failed) and r.boundary_hit for r in rows)
    print(f"{len(rows)} replicates, {failed} failed fits, {hits} boundary hits", file=sys.stderr)
    if not outputs.get("summary_csv"):
        sys.stdout.write(summary_csv(summary))
    return 0


# --- diag ------------------------------------------------------------------

DIAG_FIELDS = ["n", "delta", "quantity", "exact", "predicted", "ratio"]


def diag_rows(theta: ThetaParams, theta0: ThetaParams, delta: float, ladder, cap=None) -> list[list]:
    cap = dense_cap() if cap is None else cap
    for n in ladder:
        if n > cap:
            raise CapExceededError(f"n={n} exceeds the quadratic cap of {cap} rows (raise it with --cap)")
    rows = []
    for n in ladder:
        grid = MixedDomainGrid(n, delta)
        tr = trace_diagnostics(theta, theta0, grid, cap=cap)
        pred = trace_expansion_predictions(theta, theta0, n, delta)
        exact = {
            "logdet": logdet_sigma(build_factor(theta, grid)),
            "tr_sigma0_sinv": theta0.theta1 * tr["tr_sinv"] + tr["tr_seta0_sinv"],
            "tr_seta0_sinv": tr["tr_seta0_sinv"],
            "tr_sinv_seta_sq": tr["tr_sinv_seta_sq"],
            "tr_sinv_ds3_sq": tr["tr_sinv_ds3_sq"],
            "tr_sinv2": tr["tr_sinv2"],
        }
        pred["logdet"] = logdet_expansion(theta, n, delta)
        for q, v in exact.items():
            p = pred[q]
            ratio = v / p if p != 0 else math.nan
            rows.append([n, delta, q, v, p, ratio])
    return rows


def cmd_diag(args) -> int:
    cap = args.cap if args.cap is not None else dense_cap()
    _echo("diag", {"theta": list(args.theta), "theta0": list(args.theta0), "delta": args.delta,
                   "n_ladder": list(args.n_ladder), "cap": cap})
    rows = diag_rows(args.theta, args.theta0, args.delta, args.n_ladder, cap)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DIAG_FIELDS)
    for n, d, q, v, p, r in rows:
        w.writerow([n, _g(d), q, _g(v), _g(p), _g(r)])
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


# --- oracle-check ----------------------------------------------------------

ORACLE_TOL = 1e-8


def oracle_errors(theta: ThetaParams, grid: MixedDomainGrid, rng: np.random.Generator, cap=None) -> dict:
    """Relative discrepancies of the fast path against dense Cholesky."""
    sig = dense_sigma(theta, grid, cap)
    chol = scipy.linalg.cho_factor(sig, lower=True)
    f = build_factor(theta, grid)
    a = rng.standard_normal(grid.n)
    b = rng.standard_normal(grid.n)
    ld_dense = 2.0 * float(np.sum(np.log(np.diag(chol[0]))))
    ld_fast = logdet_sigma(f)
    sa, sb = scipy.linalg.cho_solve(chol, a), scipy.linalg.cho_solve(chol, b)
    qaa, qbb, qab = float(a @ sa), float(b @ sb), float(a @ sb)
    solve = sigma_solve(f, a)
    return {
        "logdet": abs(ld_fast - ld_dense) / max(abs(ld_dense), 1.0),
        "quad_form": abs(quad_form(f, a, a) - qaa) / qaa,
        # cross terms can be near zero; scale by the Cauchy-Schwarz bound
        "quad_form_cross": abs(quad_form(f, a, b) - qab) / math.sqrt(qaa * qbb),
        "sigma_solve": float(np.max(np.abs(solve - sa)) / np.max(np.abs(sa))),
    }


def oracle_thetas(trials: int, box: ParamBox, rng: np.random.Generator, corners: bool) -> list[ThetaParams]:
    lo, hi = np.log(box.lower.as_array()), np.log(box.upper.as_array())
    out = [ThetaParams.from_array(np.exp(lo + (hi - lo) * rng.random(3))) for _ in range(trials)]
    if corners:
        for mask in range(8):
            pick = [(mask >> k) & 1 for k in range(3)]
            out.append(ThetaParams.from_array([box.upper[k] if pick[k] else box.lower[k] for k in range(3)]))
    return out


def cmd_oracle_check(args) -> int:
    cap = args.cap if args.cap is not None else dense_cap()
    _echo("oracle-check", {"n": args.n, "delta": args.delta, "trials": args.trials, "seed": args.seed,
                           "corners": args.corners, "box": {"lower": list(args.box.lower),
                                                             "upper": list(args.box.upper)},
                           "cap": cap, "tol": ORACLE_TOL})
    if args.n > cap:
        raise CapExceededError(f"--n {args.n} exceeds the dense cap of {cap} rows (raise it with --cap)")
    rng = np.random.default_rng(args.seed)
    grid = MixedDomainGrid(args.n, args.delta)
    worst = {}
    failures = 0
    for theta in oracle_thetas(args.trials, args.box, rng, args.corners):
        errs = oracle_errors(theta, grid, rng, cap)
        for k, v in errs.items():
            worst[k] = max(worst.get(k, 0.0), v)
        if not all(v <= ORACLE_TOL for v in errs.values()):
            failures += 1
            print(f"FAIL theta={theta.format()} " + " ".join(f"{k}={_g(v)}" for k, v in errs.items()))
    for k, v in worst.items():
        print(f"max_rel_err {k} {_g(v)}")
    print("oracle-check " + ("PASS" if failures == 0 else f"FAIL ({failures} cases)"))
    return 0 if failures == 0 else 1


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mixdom", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="sample a dataset (and its truth sidecar) to CSV")
    s.add_argument("--scenario", required=True, help="correct, scaled_linear or gp")
    s.add_argument("--theta0", required=True, type=_theta, help="a,b,c")
    s.add_argument("--n", required=True, type=_positive_int)
    s.add_argument("--delta", required=True, type=_delta, help="domain exponent in [0, 1)")
    s.add_argument("--seed", required=True, type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--truth", help="truth sidecar path (default: <out>.truth.csv)")
    s.add_argument("--beta", type=_floats, help="trend coefficients")
    s.add_argument("--p", type=int, default=0, help="non-intercept regressors (correct trend)")
    s.add_argument("--gp-params", type=_floats, help="theta12,theta13 for the gp trend")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="maximum-likelihood fit of a dataset CSV; prints JSON")
    f.add_argument("--data", required=True)
    f.add_argument("--box", type=_box, default=ParamBox.default(), help="lower:upper, scalar or a,b,c each")
    f.add_argument("--starts", type=int, default=4)
    f.add_argument("--max-evals", type=_positive_int, default=2000)
    f.set_defaults(func=cmd_fit)

    m = sub.add_parser("mc", help="run a Monte Carlo experiment from a JSON config")
    m.add_argument("--config", required=True)
    m.add_argument("--jobs", type=_positive_int)
    m.add_argument("--rows", help="per-replicate CSV path (overrides config)")
    m.add_argument("--summary", help="summary CSV path (overrides config)")
    m.set_defaults(func=cmd_mc)

    d = sub.add_parser("diag", help="exact traces and log-dets against their expansions")
    d.add_argument("--theta", required=True, type=_theta)
    d.add_argument("--theta0", required=True, type=_theta)
    d.add_argument("--delta", required=True, type=_delta)
    d.add_argument("--n-ladder", required=True, type=_ladder)
    d.add_argument("--cap", type=_positive_int, help="row cap for the O(n^2) traces")
    d.add_argument("--out")
    d.set_defaults(func=cmd_diag)

    o = sub.add_parser("oracle-check", help="fast O(n) algebra against dense Cholesky")
    o.add_argument("--n", type=_positive_int, default=256)
    o.add_argument("--delta", type=_delta, default=0.5)
    o.add_argument("--trials", type=_positive_int, default=20)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--corners", action="store_true", help="also test the box corners")
    o.add_argument("--box", type=_box, default=ParamBox.parse("0.1:10"))
    o.add_argument("--cap", type=_positive_int)
    o.set_defaults(func=cmd_oracle_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CapExceededError as exc:
        print(f"mixdom {args.command}: {exc}", file=sys.stderr)
        return 2
    except (CliError, FitError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"mixdom {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
