import csv
import json

import numpy as np
import pytest

from hekan.cli import main
from hekan.approx import Polynomial
from hekan.model import load_model, random_model, save_model, silu


@pytest.fixture
def model_path(tmp_path):
    mdl = random_model([4, 3], g=4, k=2, seed=1)
    path = tmp_path / "model.json"
    save_model(mdl, path)
    return str(path)


@pytest.fixture
def input_path(tmp_path):
    rows = np.random.default_rng(2).uniform(-1, 1, (2, 4))
    path = tmp_path / "inputs.csv"
    np.savetxt(path, rows, delimiter=",")
    return str(path)


BACKEND = '{"slot_count": 512, "depth_budget": 40}'


class TestFitActivation:
    def test_moments_ols_writes_four_coefficients(self, tmp_path):
        out = tmp_path / "poly.json"
        rc = main(["fit-activation", "--mu", "0", "--sigma", "1",
                   "--degree", "3", "--method", "ols", "--out", str(out)])
        assert rc == 0
        coeffs = json.loads(out.read_text())
        assert len(coeffs) == 4
        report = tmp_path / "poly_report.csv"
        rows = list(csv.DictReader(report.open()))
        assert rows[0]["degree"] == "3"

    def test_weighted_beats_ols_on_inner_interval(self, tmp_path):
        outs = {}
        for method in ("wls", "ols"):
            out = tmp_path / f"{method}.json"
            rc = main(["fit-activation", "--mu", "0", "--sigma", "2",
                       "--degree", "8", "--method", method, "--out", str(out)])
            assert rc == 0
            outs[method] = Polynomial.from_json(json.loads(out.read_text()))
        x = np.linspace(-6, 6, 2001)  # mu +- 3 sigma
        rmse = {m: np.sqrt(np.mean((silu(x) - p(x)) ** 2)) for m, p in outs.items()}
        assert rmse["wls"] < rmse["ols"]

    def test_missing_source_is_usage_error(self):
        assert main(["fit-activation", "--degree", "3"]) == 2

    def test_both_sources_is_usage_error(self, tmp_path):
        samples = tmp_path / "s.csv"
        np.savetxt(samples, np.ones(10), delimiter=",")
        rc = main(["fit-activation", "--samples", str(samples), "--mu", "0",
                   "--sigma", "1", "--degree", "3"])
        assert rc == 2

    def test_samples_source(self, tmp_path):
        samples = tmp_path / "s.csv"
        np.savetxt(samples, np.random.default_rng(3).normal(0, 1, 500), delimiter=",")
        out = tmp_path / "p.json"
        rc = main(["fit-activation", "--samples", str(samples), "--degree", "5",
                   "--out", str(out)])
        assert rc == 0
        assert len(json.loads(out.read_text())) == 6

    def test_preset_source(self, tmp_path):
        out = tmp_path / "p.json"
        rc = main(["fit-activation", "--preset", "mnist", "--degree", "10",
                   "--method", "remez", "--out", str(out)])
        assert rc == 0


class TestFitLayer:
    def test_fits_and_saves_model(self, tmp_path):
        rng = np.random.default_rng(4)
        x = rng.uniform(-1, 1, 300)
        data = tmp_path / "data.csv"
        np.savetxt(data, np.column_stack([x, np.exp(np.sin(np.pi * x))]), delimiter=",")
        out = tmp_path / "model.json"
        rc = main(["fit-layer", "--data", str(data), "--g", "8", "--k", "3",
                   "--out", str(out)])
        assert rc == 0
        mdl = load_model(out)
        assert mdl.layers[0].g == 8


class TestInfer:
    def test_plain_modes_agree_with_good_poly(self, model_path, input_path, tmp_path):
        results = {}
        for mode in ("plain-exact", "plain-mirrored"):
            out = tmp_path / f"{mode}.json"
            rc = main(["infer", "--model", model_path, "--input", input_path,
                       "--mode", mode, "--comparator", "exact", "--out", str(out)])
            assert rc == 0
            results[mode] = np.asarray(json.loads(out.read_text())["outputs"])
        # the random model carries a moderate-degree activation fit
        assert np.max(np.abs(results["plain-exact"] - results["plain-mirrored"])) <= 1e-2

    def test_he_matches_mirrored(self, model_path, input_path, tmp_path):
        outs = {}
        for mode in ("plain-mirrored", "he"):
            out = tmp_path / f"{mode}.json"
            rc = main(["infer", "--model", model_path, "--input", input_path,
                       "--mode", mode, "--backend", BACKEND, "--out", str(out)])
            assert rc == 0
            outs[mode] = np.asarray(json.loads(out.read_text())["outputs"])
        assert np.max(np.abs(outs["he"] - outs["plain-mirrored"])) <= 1e-9

    def test_he_result_includes_stats(self, model_path, input_path, tmp_path):
        out = tmp_path / "res.json"
        rc = main(["infer", "--model", model_path, "--input", input_path,
                   "--mode", "he", "--backend", BACKEND, "--out", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert doc["stats"][0]["total"]["depth_consumed"] > 0

    def test_shape_mismatch_exit_code(self, model_path, tmp_path):
        bad = tmp_path / "bad.csv"
        np.savetxt(bad, np.ones((2, 3)), delimiter=",")
        rc = main(["infer", "--model", model_path, "--input", str(bad),
                   "--mode", "plain-exact"])
        assert rc == 2

    def test_depth_budget_exit_code(self, model_path, input_path):
        rc = main(["infer", "--model", model_path, "--input", input_path,
                   "--mode", "he", "--backend", '{"slot_count": 512, "depth_budget": 4}'])
        assert rc == 4


class TestBench:
    def test_two_configs_two_rows_with_ratio(self, model_path, input_path, tmp_path):
        cfgs = tmp_path / "cfgs.json"
        cfgs.write_text(json.dumps([
            {"path": "lazy", "label": "run"},
            {"path": "naive", "label": "run"},
        ]))
        out = tmp_path / "bench.csv"
        rc = main(["bench", "--model", model_path, "--configs", str(cfgs),
                   "--inputs", input_path, "--backend", BACKEND, "--out", str(out)])
        assert rc == 0
        rows = list(csv.DictReader(out.open()))
        assert len(rows) == 2
        lazy = next(r for r in rows if r["path"] == "lazy")
        assert float(lazy["speedup_vs_naive_counts"]) > 1.0

    def test_empty_configs_usage_error(self, model_path, tmp_path):
        cfgs = tmp_path / "cfgs.json"
        cfgs.write_text("[]")
        rc = main(["bench", "--model", model_path, "--configs", str(cfgs)])
        assert rc == 2

    def test_deterministic_under_seed(self, model_path, tmp_path):
        cfgs = tmp_path / "cfgs.json"
        cfgs.write_text(json.dumps([{"path": "lazy"}, {"path": "naive"}]))
        snapshots = []
        for run in range(2):
            out = tmp_path / f"bench{run}.csv"
            rc = main(["--seed", "9", "bench", "--model", model_path,
                       "--configs", str(cfgs), "--backend", BACKEND,
                       "--out", str(out)])
            assert rc == 0
            rows = list(csv.DictReader(out.open()))
            snapshots.append([{k: v for k, v in row.items() if k != "wall_ms"}
                              for row in rows])
        assert snapshots[0] == snapshots[1]


class TestCompare:
    def test_reports_deviations(self, model_path, input_path, tmp_path):
        out = tmp_path / "cmp.json"
        rc = main(["compare", "--model", model_path, "--input", input_path,
                   "--backend", BACKEND, "--out", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert len(doc) == 2
        assert doc[0]["max_dev_he_vs_mirrored"] <= 1e-9


class TestUsage:
    def test_unknown_flag_rejected(self, model_path):
        with pytest.raises(SystemExit) as err:
            main(["infer", "--model", model_path, "--bogus", "1"])
        assert err.value.code == 2

    def test_missing_model_file(self, input_path):
        rc = main(["infer", "--model", "/does/not/exist.json",
                   "--input", input_path, "--mode", "plain-exact"])
        assert rc == 2
