import gzip
import json
import time

import numpy as np
import pytest

from argfrailty import io as aio
from argfrailty.cli import main
from argfrailty.gibbs import McmcSettings, run_chain
from argfrailty.model import CountDataset, ModelSpec
from argfrailty.rng import RandomStream
from argfrailty.simulate import SimDesign, simulate_dataset


def write_config(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh)
    return str(path)


def read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


class TestDatasetRoundTrip:
    def test_counts_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        data = CountDataset(
            y=rng.poisson(4.0, size=(5, 7)),
            offset=rng.uniform(0.5, 2.0, size=(5, 7)),
        )
        path = tmp_path / "data.csv"
        aio.write_counts_csv(path, data)
        back = aio.read_counts_csv(path)
        assert np.array_equal(back.y, data.y)
        assert np.array_equal(back.offset, data.offset)
        aio.write_counts_csv(tmp_path / "data2.csv", back)
        assert read_bytes(path) == read_bytes(tmp_path / "data2.csv")

    def test_counts_with_covariates(self, tmp_path):
        rng = np.random.default_rng(1)
        data = CountDataset(y=rng.poisson(2.0, size=(3, 4)),
                            x=rng.normal(size=(3, 4, 2)))
        path = tmp_path / "data.csv"
        aio.write_counts_csv(path, data)
        back = aio.read_counts_csv(path)
        assert np.array_equal(back.x, data.x)

    def test_locations_roundtrip(self, tmp_path):
        coords = np.random.default_rng(2).random((6, 3))
        path = tmp_path / "loc.csv"
        aio.write_locations_csv(path, coords)
        assert np.array_equal(aio.read_locations_csv(path), coords)


class TestChainRoundTrip:
    def test_chain_dir_roundtrip(self, tmp_path):
        design = SimDesign(group=1, T=6, grid=(3, 3), h_s=3, kappa=0.4, rho=0.3, c=3.0)
        sim = simulate_dataset(design, RandomStream(3))
        spec = ModelSpec.from_preset("hypara1")
        settings = McmcSettings(n_burn=20, n_keep_iterations=20, seed=4)
        chain = run_chain(spec, sim.graph, sim.data, settings)
        aio.write_chain(tmp_path, chain)
        back = aio.read_chain(tmp_path)
        assert np.array_equal(back.c, chain.c)
        assert np.array_equal(back.kappa, chain.kappa)
        assert np.array_equal(back.rho, chain.rho)
        assert np.array_equal(back.u, chain.u)
        assert np.array_equal(back.log_lik, chain.log_lik)
        assert np.allclose(back.fitted_mean, chain.fitted_mean, rtol=0, atol=1e-16)
        assert back.spec.prior_c == chain.spec.prior_c
        assert back.T == chain.T and back.m == chain.m

    def test_covariate_chain_roundtrip(self, tmp_path):
        gen = np.random.default_rng(9)
        spec = ModelSpec(alpha=1.3, prior_rho=(0.4, 1.0),
                         beta_prior=(np.zeros(2), np.eye(2))).validate()
        data = CountDataset(y=gen.poisson(3.0, size=(4, 6)),
                            x=gen.normal(scale=0.3, size=(4, 6, 2)))
        from argfrailty.graph import build_knn_graph

        graph = build_knn_graph(gen.random((6, 2)), h_s=3)
        chain = run_chain(spec, graph, data,
                          McmcSettings(n_burn=10, n_keep_iterations=10, seed=10))
        aio.write_chain(tmp_path, chain)
        back = aio.read_chain(tmp_path)
        assert np.array_equal(back.beta, chain.beta)
        assert back.spec.has_covariates
        assert np.array_equal(back.spec.beta_prior[1], np.eye(2))


def pipeline_configs(tmp_path, seed=11, t=5, grid=3):
    sim_out = tmp_path / "sim"
    fit_out = tmp_path / "fit"
    pred_out = tmp_path / "pred"
    diag_out = tmp_path / "diag"
    cfg = {
        "seed": seed,
        "model": {"preset": "hypara1"},
        "graph": {"h_s": 3, "weight_scheme": "uniform", "variant": "undirected-self"},
        "simulate": {"group": 1, "grid": [grid, grid], "T": t, "h_s": 3,
                     "kappa": 0.4, "rho": 0.3, "c": 3.0},
        "mcmc": {"n_burn": 30, "n_keep_iterations": 30, "thin": 1},
        "fit": {"data": str(sim_out / "data.csv"),
                "locations": str(sim_out / "locations.csv")},
        "predict": {"chain_dir": str(fit_out),
                    "locations": str(sim_out / "locations.csv"),
                    "q": 2, "new_locations": [[1.5, 1.5]], "h_s": 3, "n_draws": 10},
        "diagnose": {"fit_dir": str(fit_out), "data": str(sim_out / "data.csv")},
    }
    path = write_config(tmp_path / "config.json", cfg)
    return cfg, path, sim_out, fit_out, pred_out, diag_out


class TestCliPipeline:
    def test_full_pipeline_and_reproducibility(self, tmp_path):
        cfg, cfg_path, sim_out, fit_out, pred_out, diag_out = pipeline_configs(tmp_path)
        assert main(["simulate", "--config", cfg_path, "--out", str(sim_out)]) == 0
        assert main(["fit", "--config", cfg_path, "--out", str(fit_out)]) == 0
        assert main(["predict", "--config", cfg_path, "--out", str(pred_out)]) == 0
        assert main(["diagnose", "--config", cfg_path, "--out", str(diag_out)]) == 0

        for f in ("data.csv", "locations.csv", "truth.json"):
            assert (sim_out / f).exists()
        for f in ("chain.csv.gz", "loglik.npy", "u_draws.npy", "fitted.csv",
                  "fit_summary.json", "graph.json", "meta.json"):
            assert (fit_out / f).exists()
        for f in ("pred_draws.csv", "pred_summary.csv"):
            assert (pred_out / f).exists()
        for f in ("fit_summary.json", "abs_errors.csv", "traces.csv"):
            assert (diag_out / f).exists()

        # bitwise determinism of every emitted artifact on rerun
        first = {}
        for d in (sim_out, fit_out, pred_out, diag_out):
            for f in d.iterdir():
                first[f] = read_bytes(f)
        time.sleep(0.05)  # any timestamp leakage would change the bytes
        rerun = tmp_path / "rerun"
        rerun.mkdir()
        cfg2, cfg2_path, sim2, fit2, pred2, diag2 = pipeline_configs(rerun)
        assert main(["simulate", "--config", cfg2_path, "--out", str(sim2)]) == 0
        assert main(["fit", "--config", cfg2_path, "--out", str(fit2)]) == 0
        assert main(["predict", "--config", cfg2_path, "--out", str(pred2)]) == 0
        assert main(["diagnose", "--config", cfg2_path, "--out", str(diag2)]) == 0
        for old, new in ((sim_out, sim2), (fit_out, fit2), (pred_out, pred2),
                         (diag_out, diag2)):
            for f in sorted(old.iterdir()):
                assert read_bytes(new / f.name) == first[f], f.name

    def test_diagnose_matches_fit_summary(self, tmp_path):
        cfg, cfg_path, sim_out, fit_out, pred_out, diag_out = pipeline_configs(tmp_path)
        main(["simulate", "--config", cfg_path, "--out", str(sim_out)])
        main(["fit", "--config", cfg_path, "--out", str(fit_out)])
        main(["diagnose", "--config", cfg_path, "--out", str(diag_out)])
        fit_sum = json.loads((fit_out / "fit_summary.json").read_text())
        diag_sum = json.loads((diag_out / "fit_summary.json").read_text())
        assert fit_sum == diag_sum

    def test_simulate_default_dimensions(self, tmp_path):
        cfg = {
            "seed": 1,
            "simulate": {"group": 1, "grid": [11, 11], "T": 100, "h_s": 12,
                         "kappa": 0.4, "rho": 0.4, "c": 5.0},
        }
        cfg_path = write_config(tmp_path / "c.json", cfg)
        out = tmp_path / "sim"
        assert main(["simulate", "--config", cfg_path, "--out", str(out)]) == 0
        rows = (out / "data.csv").read_text().strip().splitlines()
        assert len(rows) == 1 + 121 * 100

    def test_simulate_single_interval(self, tmp_path):
        cfg = {
            "seed": 1,
            "simulate": {"group": 1, "grid": [3, 3], "T": 1, "h_s": 3,
                         "kappa": 0.4, "rho": 0.3, "c": 3.0},
        }
        cfg_path = write_config(tmp_path / "c.json", cfg)
        out = tmp_path / "sim"
        assert main(["simulate", "--config", cfg_path, "--out", str(out)]) == 0
        rows = (out / "data.csv").read_text().strip().splitlines()
        assert len(rows) == 1 + 9

    def test_preset_selection_by_name(self, tmp_path):
        for preset, expect_scale in (("hypara1", 10.0), ("hypara2", 50.0)):
            (tmp_path / preset).mkdir()
            cfg, cfg_path, sim_out, fit_out, *_ = pipeline_configs(
                tmp_path / preset, t=3)
            cfg["model"] = {"preset": preset}
            cfg_path = write_config(tmp_path / preset / "config.json", cfg)
            main(["simulate", "--config", cfg_path, "--out", str(sim_out)])
            assert main(["fit", "--config", cfg_path, "--out", str(fit_out)]) == 0
            meta = json.loads((fit_out / "meta.json").read_text())
            assert meta["spec"]["prior_c"] == [2.0, expect_scale]

    def test_seed_flag_overrides_config(self, tmp_path):
        cfg, cfg_path, sim_out, *_ = pipeline_configs(tmp_path)
        main(["simulate", "--config", cfg_path, "--out", str(sim_out), "--seed", "99"])
        truth = json.loads((sim_out / "truth.json").read_text())
        assert truth["seed"] == 99

    def test_small_fit_within_time_budget(self, tmp_path):
        cfg, cfg_path, sim_out, fit_out, *_ = pipeline_configs(tmp_path, t=5)
        cfg["mcmc"] = {"n_burn": 200, "n_keep_iterations": 200, "thin": 1}
        cfg_path = write_config(tmp_path / "config.json", cfg)
        main(["simulate", "--config", cfg_path, "--out", str(sim_out)])
        start = time.perf_counter()
        assert main(["fit", "--config", cfg_path, "--out", str(fit_out)]) == 0
        assert time.perf_counter() - start < 5.0

    def test_coincident_new_location(self, tmp_path):
        cfg, cfg_path, sim_out, fit_out, pred_out, _ = pipeline_configs(tmp_path)
        cfg["predict"]["new_locations"] = [[2.0, 2.0]]  # sits on a training point
        cfg["predict"]["q"] = 0
        cfg_path = write_config(tmp_path / "config.json", cfg)
        main(["simulate", "--config", cfg_path, "--out", str(sim_out)])
        main(["fit", "--config", cfg_path, "--out", str(fit_out)])
        assert main(["predict", "--config", cfg_path, "--out", str(pred_out)]) == 0
        rows = (pred_out / "pred_draws.csv").read_text().strip().splitlines()[1:]
        assert {int(r.split(",")[2]) for r in rows} == {10}  # one new id past m=9
        assert all(int(r.split(",")[4]) >= 0 for r in rows)

    def test_future_only_prediction(self, tmp_path):
        cfg, cfg_path, sim_out, fit_out, pred_out, _ = pipeline_configs(tmp_path)
        cfg["predict"] = {"chain_dir": str(fit_out),
                          "locations": str(sim_out / "locations.csv"),
                          "q": 2, "n_draws": 10}
        cfg_path = write_config(tmp_path / "config.json", cfg)
        main(["simulate", "--config", cfg_path, "--out", str(sim_out)])
        main(["fit", "--config", cfg_path, "--out", str(fit_out)])
        assert main(["predict", "--config", cfg_path, "--out", str(pred_out)]) == 0
        rows = (pred_out / "pred_draws.csv").read_text().strip().splitlines()
        assert len(rows) == 1 + 10 * 2 * 9  # draws x future intervals x locations

    def test_diagnose_quartiles_match_module(self, tmp_path):
        from argfrailty.diagnostics import summarize_scalar

        cfg, cfg_path, sim_out, fit_out, _, diag_out = pipeline_configs(tmp_path)
        main(["simulate", "--config", cfg_path, "--out", str(sim_out)])
        main(["fit", "--config", cfg_path, "--out", str(fit_out)])
        main(["diagnose", "--config", cfg_path, "--out", str(diag_out)])
        quartiles = json.loads((diag_out / "abs_error_quartiles.json").read_text())
        errs = np.array([
            float(row.split(",")[2])
            for row in (diag_out / "abs_errors.csv").read_text().strip().splitlines()[1:]
        ])
        assert quartiles["abs_error"] == pytest.approx(summarize_scalar(errs))


class TestCliErrors:
    def test_missing_config_is_io_error(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.json")]) == 4

    def test_invalid_json_is_config_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["simulate", "--config", str(bad)]) == 2

    def test_nonstationary_design_is_config_error(self, tmp_path):
        cfg = {"seed": 1, "simulate": {"group": 1, "grid": [3, 3], "T": 4,
                                       "h_s": 3, "kappa": 0.7, "rho": 0.5, "c": 1.0}}
        cfg_path = write_config(tmp_path / "c.json", cfg)
        assert main(["simulate", "--config", cfg_path, "--out", str(tmp_path / "o")]) == 2

    def test_chain_graph_mismatch_is_config_error(self, tmp_path):
        cfg, cfg_path, sim_out, fit_out, pred_out, _ = pipeline_configs(tmp_path)
        main(["simulate", "--config", cfg_path, "--out", str(sim_out)])
        main(["fit", "--config", cfg_path, "--out", str(fit_out)])
        # swap in a locations file with a different m
        other = tmp_path / "other_loc.csv"
        aio.write_locations_csv(other, np.random.default_rng(0).random((4, 2)))
        cfg["predict"]["locations"] = str(other)
        cfg_path = write_config(tmp_path / "c2.json", cfg)
        assert main(["predict", "--config", cfg_path, "--out", str(pred_out)]) == 2

    def test_empty_prediction_dir_is_io_error(self, tmp_path):
        cfg = {"seed": 1, "diagnose": {"fit_dir": str(tmp_path / "missing"),
                                       "data": str(tmp_path / "missing.csv")}}
        cfg_path = write_config(tmp_path / "c.json", cfg)
        assert main(["diagnose", "--config", cfg_path, "--out", str(tmp_path / "d")]) == 4

    def test_quantiles_match_recomputation(self, tmp_path):
        cfg, cfg_path, sim_out, fit_out, pred_out, _ = pipeline_configs(tmp_path)
        main(["simulate", "--config", cfg_path, "--out", str(sim_out)])
        main(["fit", "--config", cfg_path, "--out", str(fit_out)])
        main(["predict", "--config", cfg_path, "--out", str(pred_out)])
        rows = (pred_out / "pred_draws.csv").read_text().strip().splitlines()[1:]
        by_cell = {}
        for row in rows:
            _, t, loc, _, y = row.split(",")
            by_cell.setdefault((int(t), int(loc)), []).append(float(y))
        summ = (pred_out / "pred_summary.csv").read_text().strip().splitlines()[1:]
        for row in summ:
            t, loc, mean, median, q05, q95 = row.split(",")
            vals = np.array(by_cell[(int(t), int(loc))])
            assert float(mean) == pytest.approx(vals.mean(), rel=1e-12)
            assert float(median) == pytest.approx(np.median(vals), rel=1e-12)
            assert float(q05) == pytest.approx(np.quantile(vals, 0.05), rel=1e-12)
            assert float(q95) == pytest.approx(np.quantile(vals, 0.95), rel=1e-12)


def test_gzip_member_has_no_timestamp(tmp_path):
    design = SimDesign(group=1, T=3, grid=(2, 2), h_s=2, kappa=0.4, rho=0.3, c=3.0)
    sim = simulate_dataset(design, RandomStream(5))
    chain = run_chain(ModelSpec.from_preset("hypara1"), sim.graph, sim.data,
                      McmcSettings(n_burn=5, n_keep_iterations=5, seed=6))
    aio.write_chain(tmp_path, chain)
    raw = read_bytes(tmp_path / "chain.csv.gz")
    assert raw[4:8] == b"\x00\x00\x00\x00"  # MTIME field zeroed
    with gzip.open(tmp_path / "chain.csv.gz", "rt") as fh:
        assert fh.readline().startswith("draw,c,kappa,rho")
