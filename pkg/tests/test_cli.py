import csv
import json

import numpy as np
import pytest

from hodgegp import build_complex, curl, eigendecompose
from hodgegp.cli import main
from hodgegp.data import sample_hodge_flow, synth_forex
from hodgegp.io import write_cochain_csv, write_complex_json


@pytest.fixture()
def house_files(tmp_path, house):
    cpath = tmp_path / "complex.json"
    write_complex_json(house, cpath)
    return tmp_path, cpath


def write_flow(path, sc, values):
    write_cochain_csv(sc, values, path, degree=1)


class TestDecompose:
    def test_gradient_flow_energy_report(self, house_files, house):
        tmp, cpath = house_files
        ds = sample_hodge_flow(house, "gradient", seed=0)
        fpath = tmp / "flow.csv"
        write_flow(fpath, house, ds.flow.values)
        out = tmp / "out"
        rc = main(["decompose", "--complex", str(cpath), "--flow", str(fpath),
                   "--out", str(out)])
        assert rc == 0
        report = json.loads((out / "energy.json").read_text())
        fr = report["energy_fractions"]
        assert fr["gradient"] == pytest.approx(1.0, abs=1e-10)
        assert fr["harmonic"] == pytest.approx(0.0, abs=1e-10)
        assert fr["curl"] == pytest.approx(0.0, abs=1e-10)

    def test_harmonic_flow_energy_report(self, house_files, house):
        tmp, cpath = house_files
        spec = eigendecompose(house)
        fpath = tmp / "flow.csv"
        write_flow(fpath, house, spec.harmonic_vectors[:, 0])
        out = tmp / "out"
        assert main(["decompose", "--complex", str(cpath), "--flow", str(fpath),
                     "--out", str(out)]) == 0
        fr = json.loads((out / "energy.json").read_text())["energy_fractions"]
        assert fr["harmonic"] == pytest.approx(1.0, abs=1e-10)

    def test_reconstruction_column(self, house_files, house):
        tmp, cpath = house_files
        rng = np.random.default_rng(0)
        values = rng.standard_normal(house.n_edges)
        fpath = tmp / "flow.csv"
        write_flow(fpath, house, values)
        out = tmp / "out"
        assert main(["decompose", "--complex", str(cpath), "--flow", str(fpath),
                     "--out", str(out)]) == 0
        with open(out / "components.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == house.n_edges
        for row in rows:
            assert float(row["reconstruction"]) == pytest.approx(float(row["value"]), abs=1e-10)
            parts = float(row["f_h"]) + float(row["f_g"]) + float(row["f_c"])
            assert parts == pytest.approx(float(row["value"]), abs=1e-10)

    def test_ingestion_error_exit_code(self, house_files, tmp_path):
        tmp, cpath = house_files
        bad = tmp_path / "bad.csv"
        bad.write_text("simplex,value\n1-99,0.5\n")
        assert main(["decompose", "--complex", str(cpath), "--flow", str(bad),
                     "--out", str(tmp_path / "o")]) == 2

    def test_usage_error_exit_code(self, tmp_path):
        assert main(["decompose", "--complex"]) == 1
        assert main(["bogus-command"]) == 1


class TestFitPredict:
    def run_fit(self, tmp_path, *extra, seed="0"):
        out = tmp_path / "run"
        rc = main([
            "fit-predict", "--synth", "forex", "--n-currencies", "8",
            "--potential-scale", "0.3", "--noise", "0.01", "--relative-noise",
            "--train-ratio", "0.4", "--restarts", "3", "--iters", "40",
            "--seed", seed, "--out", str(out), *extra,
        ])
        return rc, out

    def test_artifact_schemas(self, tmp_path):
        rc, out = self.run_fit(tmp_path, "--kernel", "hc-matern")
        assert rc == 0
        results = json.loads((out / "results.json").read_text())
        assert len(results["restarts"]) == 3
        assert {"rmse_mean", "rmse_std", "nlpd_mean", "nlpd_std"} <= set(results["aggregate"])
        assert results["run_config"]["kernel"] == "hc-matern"
        for row in results["restarts"]:
            assert {"restart", "rmse", "nlpd", "final_loss", "failed"} <= set(row)

        with open(out / "predictions.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert {"simplex", "mean", "variance"} <= set(rows[0])
        assert all(float(r["variance"]) >= 0 for r in rows)

        with open(out / "kernel_spectrum.csv") as fh:
            spec_rows = list(csv.DictReader(fh))
        assert {"block", "lambda", "psi"} == set(spec_rows[0])
        assert {r["block"] for r in spec_rows} <= {"harmonic", "gradient", "curl", "all"}

        ck = json.loads((out / "checkpoint.json").read_text())
        assert {"kernel_spec", "unconstrained_params", "noise_variance", "loss_trace"} <= set(ck)
        assert len(ck["loss_trace"]) == 41

    def test_deterministic_per_master_seed(self, tmp_path):
        _, out1 = self.run_fit(tmp_path / "a")
        _, out2 = self.run_fit(tmp_path / "b")
        r1 = json.loads((out1 / "results.json").read_text())
        r2 = json.loads((out2 / "results.json").read_text())
        r1["run_config"]["out"] = r2["run_config"]["out"] = ""
        assert r1 == r2

    def test_components_flag(self, tmp_path):
        rc, out = self.run_fit(tmp_path, "--kernel", "hc-matern", "--components")
        assert rc == 0
        with open(out / "predictions.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert {"mean_h", "mean_g", "mean_c", "var_h", "var_g", "var_c"} <= set(rows[0])
        for r in rows:
            total = float(r["mean_h"]) + float(r["mean_g"]) + float(r["mean_c"])
            assert total == pytest.approx(float(r["mean"]), abs=1e-8)

    def test_components_rejected_for_line_graph(self, tmp_path):
        rc, _ = self.run_fit(tmp_path, "--kernel", "line-graph-matern", "--components")
        assert rc == 1

    def test_file_mode(self, tmp_path, house):
        cpath = tmp_path / "complex.json"
        write_complex_json(house, cpath)
        ds = sample_hodge_flow(house, "gradient", seed=3, noise=0.01)
        fpath = tmp_path / "flow.csv"
        write_flow(fpath, house, ds.observations.values)
        out = tmp_path / "run"
        rc = main(["fit-predict", "--complex", str(cpath), "--flow", str(fpath),
                   "--kernel", "matern", "--train-ratio", "0.5", "--restarts", "2",
                   "--iters", "30", "--seed", "1", "--out", str(out)])
        assert rc == 0
        assert (out / "results.json").exists()

    def test_truncate_flag(self, tmp_path):
        rc, out = self.run_fit(tmp_path, "--kernel", "hc-matern", "--truncate", "12")
        assert rc == 0
        spec = json.loads((out / "spectrum.json").read_text())
        assert spec["truncated"] is True

    def test_select_best_flag(self, tmp_path):
        rc, out = self.run_fit(tmp_path, "--select-best")
        assert rc == 0
        results = json.loads((out / "results.json").read_text())
        assert "selected" in results
        best = results["best_restart"]
        row = results["restarts"][best]
        assert results["selected"]["rmse"] == row["rmse"]

    def test_synth_and_files_conflict(self, tmp_path):
        rc = main(["fit-predict", "--synth", "forex", "--complex", "x.json",
                   "--out", str(tmp_path)])
        assert rc == 1

    def test_partial_restart_failure_flagged(self, tmp_path, monkeypatch):
        # a numerically failed restart is recorded, the run continues, and the
        # exit code flags the partial failure
        import hodgegp.cli as cli_mod
        from hodgegp import NumericalError

        real_fit = cli_mod.gp.fit
        calls = {"n": 0}

        def flaky_fit(*args, **kwargs):
            calls["n"] += 1
            if calls["n"] == 2:
                raise NumericalError("synthetic failure")
            return real_fit(*args, **kwargs)

        monkeypatch.setattr(cli_mod.gp, "fit", flaky_fit)
        rc, out = self.run_fit(tmp_path)
        assert rc == 4
        results = json.loads((out / "results.json").read_text())
        failed = [r for r in results["restarts"] if r["failed"]]
        assert len(failed) == 1 and "synthetic failure" in failed[0]["error"]
        assert results["aggregate"]["n_failed"] == 1
        assert (out / "predictions.csv").exists()


class TestSample:
    def test_gradient_block_samples_curl_free(self, house_files, house):
        tmp, cpath = house_files
        out = tmp / "s"
        rc = main(["sample", "--complex", str(cpath), "--block", "G",
                   "--count", "20", "--seed", "3", "--out", str(out)])
        assert rc == 0
        with open(out / "samples.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == house.n_edges
        sample_cols = [k for k in rows[0] if k.startswith("sample")]
        assert len(sample_cols) == 20
        values = np.array([[float(r[c]) for c in sample_cols] for r in rows])
        for j in range(values.shape[1]):
            f = values[:, j]
            assert np.linalg.norm(curl(house, f).values) < 1e-6 * np.linalg.norm(f)

    def test_default_hc_kernel(self, house_files):
        tmp, cpath = house_files
        assert main(["sample", "--complex", str(cpath), "--count", "2",
                     "--seed", "0", "--out", str(tmp / "s2")]) == 0

    def test_kernel_params_file(self, house_files):
        tmp, cpath = house_files
        params = tmp / "spec.json"
        params.write_text(json.dumps({
            "kind": "hc_edge", "harmonic_sigma2": 0.0,
            "gradient_fn": {"family": "matern", "sigma2": 1.0, "kappa": 1.0, "nu": 1.0},
            "curl_fn": {"family": "matern", "sigma2": 0.0, "kappa": 1.0, "nu": 1.0},
        }))
        assert main(["sample", "--complex", str(cpath), "--kernel-params", str(params),
                     "--count", "3", "--seed", "1", "--out", str(tmp / "s3")]) == 0

    def test_invalid_count(self, house_files):
        tmp, cpath = house_files
        assert main(["sample", "--complex", str(cpath), "--count", "0",
                     "--out", str(tmp / "s4")]) == 1


class TestDiffuse:
    def test_trajectory_schema_and_limits(self, house_files, house):
        tmp, cpath = house_files
        rng = np.random.default_rng(5)
        phi0 = rng.standard_normal(house.n_edges)
        fpath = tmp / "phi0.csv"
        write_flow(fpath, house, phi0)
        spec = eigendecompose(house)
        lam_min = min(spec.gradient_values.min(), spec.curl_values.min())
        t_max = 1e3 / lam_min
        out = tmp / "d"
        rc = main(["diffuse", "--complex", str(cpath), "--flow", str(fpath),
                   "--mu", "1.0", "--gamma", "1.0",
                   "--times", f"0,0.5,{t_max}", "--out", str(out)])
        assert rc == 0
        with open(out / "trajectory.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3 * house.n_edges
        by_t = {}
        for r in rows:
            by_t.setdefault(float(r["t"]), []).append(float(r["value"]))
        times = sorted(by_t)
        assert np.allclose(by_t[times[0]], phi0, atol=1e-10)  # t=0 is the input
        final = np.array(by_t[times[-1]])
        u_h = spec.harmonic_vectors
        residual = final - u_h @ (u_h.T @ final)
        assert np.linalg.norm(residual) / np.linalg.norm(phi0) < 1e-6

    def test_bad_rates_exit_usage(self, house_files, house):
        tmp, cpath = house_files
        fpath = tmp / "phi0.csv"
        write_flow(fpath, house, np.zeros(house.n_edges))
        assert main(["diffuse", "--complex", str(cpath), "--flow", str(fpath),
                     "--mu", "-1", "--gamma", "1", "--times", "0,1",
                     "--out", str(tmp / "d2")]) == 1
