import csv
import io
import json
import math
import subprocess
import sys
from importlib import resources

import numpy as np
import pytest

from mixdom.cli import main
from mixdom.core import read_dataset_csv


def run(argv, capsys):
    try:
        code = main(argv)
    except SystemExit as exc:  # argparse rejections
        code = exc.code
    out = capsys.readouterr()
    return code, out.out, out.err


def simulate(tmp_path, capsys, name="d.csv", n=64, seed=1, extra=()):
    path = tmp_path / name
    code, _, err = run(["simulate", "--scenario", "correct", "--theta0", "1,1,1", "--n", str(n), "--delta", "0.5",
                        "--seed", str(seed), "--out", str(path), *extra], capsys)
    assert code == 0, err
    return path


class TestSimulate:
    def test_rows(self, tmp_path, capsys):
        path = simulate(tmp_path, capsys)
        lines = path.read_text().splitlines()
        assert lines[0] == "s,z" and len(lines) == 65
        assert (tmp_path / "d.truth.csv").read_text().splitlines()[0] == "s,mu0,eta,eps"

    def test_deterministic(self, tmp_path, capsys):
        a = simulate(tmp_path, capsys, "a.csv")
        b = simulate(tmp_path, capsys, "b.csv")
        assert a.read_bytes() == b.read_bytes()

    def test_invalid_delta(self, tmp_path, capsys):
        code, _, err = run(["simulate", "--scenario", "correct", "--theta0", "1,1,1", "--n", "64", "--delta", "1.0",
                            "--seed", "1", "--out", str(tmp_path / "x.csv")], capsys)
        assert code != 0 and "[0, 1)" in err

    def test_unknown_flag(self, tmp_path, capsys):
        code, _, _ = run(["simulate", "--scenario", "correct", "--theta0", "1,1,1", "--n", "64", "--delta", "0.5",
                          "--seed", "1", "--out", str(tmp_path / "x.csv"), "--colour", "red"], capsys)
        assert code != 0

    def test_bad_scenario_combination(self, tmp_path, capsys):
        code, _, err = run(["simulate", "--scenario", "scaled_linear", "--theta0", "1,1,1", "--n", "16",
                            "--delta", "0.5", "--seed", "1", "--p", "1", "--out", str(tmp_path / "x.csv")], capsys)
        assert code == 1 and "intercept-only" in err

    def test_design_columns_written(self, tmp_path, capsys):
        path = simulate(tmp_path, capsys, extra=("--p", "2", "--beta", "1,0.5,-2"))
        assert path.read_text().splitlines()[0] == "s,z,x1,x2"
        assert read_dataset_csv(path).p == 2

    def test_echoes_config(self, tmp_path, capsys):
        path = tmp_path / "e.csv"
        _, _, err = run(["simulate", "--scenario", "gp", "--theta0", "1e0,2,3", "--n", "8", "--delta", "0.25",
                         "--seed", "5", "--out", str(path)], capsys)
        assert err.startswith("# mixdom simulate {")
        echoed = json.loads(err.split(" ", 3)[3])
        assert echoed["theta0"] == [1, 2, 3] and echoed["scenario"]["gp_params"] == [1, 1]


class TestFit:
    def test_recovers_theta(self, tmp_path, capsys):
        path = simulate(tmp_path, capsys, n=4096, seed=7)
        code, out, err = run(["fit", "--data", str(path)], capsys)
        assert code == 0, err
        res = json.loads(out)
        assert abs(res["theta_hat"][0] - 1.0) <= 5 * math.sqrt(2 / 4096)
        assert res["n"] == 4096 and res["delta"] == pytest.approx(0.5)
        assert set(res) >= {"theta_hat", "beta_hat", "loglik", "n_evals", "converged", "starts", "at_boundary"}

    def test_constant_data(self, tmp_path, capsys):
        n = 64
        s = np.arange(1, n + 1) * n**-0.5
        path = tmp_path / "c.csv"
        path.write_text("s,z\n" + "".join(f"{v:.17g},3\n" for v in s))
        code, out, _ = run(["fit", "--data", str(path), "--max-evals", "300"], capsys)
        assert code == 0
        res = json.loads(out)
        assert any(res["at_boundary"]) or not res["converged"]

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run(["fit", "--data", str(tmp_path / "nope.csv")], capsys)
        assert code != 0 and "nope.csv" in err

    def test_malformed_file(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("s,y\n1,2\n")
        code, _, err = run(["fit", "--data", str(path)], capsys)
        assert code != 0 and "header" in err

    def test_box_and_starts(self, tmp_path, capsys):
        path = simulate(tmp_path, capsys, n=256)
        code, out, err = run(["fit", "--data", str(path), "--box", "0.1:10", "--starts", "2"], capsys)
        assert code == 0
        res = json.loads(out)
        assert res["starts"] == 2 and all(0.1 <= t <= 10 for t in res["theta_hat"])
        assert '"upper": [10, 10, 10]' in err

    def test_seventeen_digits(self, tmp_path, capsys):
        path = simulate(tmp_path, capsys, n=128)
        _, out, _ = run(["fit", "--data", str(path)], capsys)
        res = json.loads(out)
        assert f"{res['loglik']:.17g}" in out


class TestDiag:
    def rows(self, text):
        return list(csv.DictReader(io.StringIO(text)))

    def test_ratios_approach_one(self, capsys):
        code, out, _ = run(["diag", "--theta", "1,1,1", "--theta0", "1,1,1", "--delta", "0.5",
                            "--n-ladder", "512,2048"], capsys)
        assert code == 0
        rows = self.rows(out)
        by = {(int(r["n"]), r["quantity"]): float(r["ratio"]) for r in rows}
        for q in {r["quantity"] for r in rows}:
            small, large = abs(1 - by[(512, q)]), abs(1 - by[(2048, q)])
            assert large < small or large < 1e-10, q

    def test_single_site_exact(self, capsys):
        code, out, _ = run(["diag", "--theta", "1,1,1", "--theta0", "1,1,1", "--delta", "0.5", "--n-ladder", "1"],
                           capsys)
        exact = {r["quantity"]: float(r["exact"]) for r in self.rows(out)}
        assert exact["logdet"] == pytest.approx(math.log(2), rel=1e-15)
        assert exact["tr_sinv2"] == pytest.approx(0.25, rel=1e-15)
        assert exact["tr_seta0_sinv"] == pytest.approx(0.5, rel=1e-15)
        assert exact["tr_sigma0_sinv"] == pytest.approx(1.0, rel=1e-15)
        assert exact["tr_sinv_seta_sq"] == pytest.approx(0.25, rel=1e-15)
        assert exact["tr_sinv_ds3_sq"] == pytest.approx(0.25, rel=1e-15)

    def test_cap(self, capsys):
        code, _, err = run(["diag", "--theta", "1,1,1", "--theta0", "1,1,1", "--delta", "0.5",
                            "--n-ladder", "64,128", "--cap", "100"], capsys)
        assert code != 0 and "--cap" in err

    def test_env_cap(self, capsys, monkeypatch):
        monkeypatch.setenv("MIXDOM_DENSE_CAP", "32")
        code, _, err = run(["diag", "--theta", "1,1,1", "--theta0", "1,1,1", "--delta", "0.5", "--n-ladder", "64"],
                           capsys)
        assert code != 0 and "--cap" in err


class TestOracleCheck:
    def test_default(self, capsys):
        code, out, _ = run(["oracle-check"], capsys)
        assert code == 0 and "PASS" in out
        errs = [float(line.split()[2]) for line in out.splitlines() if line.startswith("max_rel_err")]
        assert len(errs) == 4 and max(errs) < 1e-8

    def test_corners(self, capsys):
        code, out, _ = run(["oracle-check", "--corners", "--n", "128", "--delta", "0.9"], capsys)
        assert code == 0 and "PASS" in out

    def test_above_cap(self, capsys):
        code, _, err = run(["oracle-check", "--n", "300", "--cap", "256"], capsys)
        assert code != 0 and "--cap" in err


class TestMc:
    def test_smoke(self, tmp_path, capsys):
        cfg = resources.files("mixdom") / "configs" / "smoke.json"
        rows, summ = tmp_path / "r.csv", tmp_path / "s.csv"
        code, _, err = run(["mc", "--config", str(cfg), "--jobs", "1", "--rows", str(rows), "--summary", str(summ)],
                           capsys)
        assert code == 0, err
        assert len(rows.read_text().splitlines()) == 2
        assert summ.read_text().splitlines()[1].split(",")[4] == ""

    def test_jobs_independent(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"scenario": {"kind": "correct", "beta": [1.0]}, "theta0": [1, 1, 1],
                                   "delta": 0.5, "n_ladder": [32, 64], "replicates": 3}))
        outs = []
        for jobs in ("1", "2"):
            path = tmp_path / f"s{jobs}.csv"
            assert run(["mc", "--config", str(cfg), "--jobs", jobs, "--rows", str(path)], capsys)[0] == 0
            outs.append(path.read_bytes())
        assert outs[0] == outs[1]

    def test_bad_config(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"scenario": {"kind": "correct"}, "theta0": [1, 1, 1], "delta": 0.5, '
                       '"n_ladder": [32], "replicates": 1, "typo": 1}')
        code, _, err = run(["mc", "--config", str(cfg)], capsys)
        assert code == 1 and "typo" in err
        (tmp_path / "broken.json").write_text("{")
        assert run(["mc", "--config", str(tmp_path / "broken.json")], capsys)[0] == 1

    def test_risk_config(self, tmp_path, capsys):
        cfg = tmp_path / "risk.json"
        cfg.write_text(json.dumps({"scenarios": [{"kind": "scaled_linear", "beta": [0, 1]}], "delta": 0.5,
                                   "n_ladder": [64, 256], "draws": 2, "points": 2}))
        code, out, err = run(["mc", "--config", str(cfg)], capsys)
        assert code == 0 and out.splitlines()[0] == "scenario,n,draw,r_theta,median,slope"
        assert "slope" in err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "mixdom", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for sub in ("simulate", "fit", "mc", "diag", "oracle-check"):
        assert sub in res.stdout
