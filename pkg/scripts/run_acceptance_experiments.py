"""Run the shipped Monte Carlo configs and write their CSVs into one directory.

    python scripts/run_acceptance_experiments.py --out results/ [--jobs 4] [--only clt_correct]
"""

import argparse
import time
from importlib import resources
from pathlib import Path

from mixdom.mc import ExperimentConfig, RiskConfig, default_jobs, rows_csv, run_experiment, run_risk, summary_csv

EXPERIMENTS = ["clt_correct", "rates_linear", "inconsistency_linear", "inconsistency_gp"]


def config_path(name: str) -> Path:
    return Path(str(resources.files("mixdom") / "configs" / f"{name}.json"))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="results")
    ap.add_argument("--jobs", type=int, default=default_jobs())
    ap.add_argument("--only", nargs="*", help="subset of config names")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = args.only or EXPERIMENTS + ["risk_orders"]
    for name in names:
        t0 = time.perf_counter()
        if name == "risk_orders":
            studies, text = run_risk(RiskConfig.load(config_path(name)))
            (out / f"{name}.csv").write_text(text)
            for k, st in studies.items():
                print(f"{name} {k}: slope {st['slope']:.4f}")
        else:
            config = ExperimentConfig.load(config_path(name))
            summary, rows = run_experiment(config, args.jobs)
            (out / f"{name}_rows.csv").write_text(rows_csv(rows))
            (out / f"{name}_summary.csv").write_text(summary_csv(summary))
            print(summary_csv(summary), end="")
        print(f"{name}: {time.perf_counter() - t0:.1f} s", flush=True)


if __name__ == "__main__":
    main()
