import numpy as np
import pytest
from scipy import special as sp

from argfrailty.diagnostics import (
    MetricError,
    dic_waic,
    ess,
    ess_matrix,
    fit_summary,
    mae,
    mape,
    medae,
    poisson_log_lik,
    summarize_scalar,
)
from argfrailty.gibbs import McmcSettings, run_chain
from argfrailty.model import ModelSpec
from argfrailty.rng import RandomStream
from argfrailty.simulate import SimDesign, simulate_dataset


class TestPointMetrics:
    def test_mae_trivial(self):
        assert mae([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert mae([0.0, 2.0], [1.0, 1.0]) == 1.0

    def test_mape_excludes_zero_cells(self):
        assert mape([2.0, 0.0], [1.0, 5.0]) == pytest.approx(50.0)
        assert mape([3.0, 6.0], [3.0, 6.0]) == 0.0
        with pytest.raises(MetricError):
            mape([0.0, 0.0], [1.0, 2.0])

    def test_mape_random_recompute(self):
        rng = np.random.default_rng(0)
        y = rng.poisson(4.0, size=50).astype(float)
        y_hat = y + rng.normal(size=50)
        mask = y > 0
        expect = 100.0 * np.mean(np.abs((y[mask] - y_hat[mask]) / y[mask]))
        assert mape(y, y_hat) == pytest.approx(expect, rel=1e-12)

    def test_medae_conventions(self):
        assert medae([1.0], [1.0]) == 0.0
        assert medae([0.0, 0.0, 0.0], [1.0, 2.0, 3.0]) == 2.0
        assert medae([0.0, 0.0], [1.0, 3.0]) == 2.0  # midpoint of an even set
        with pytest.raises(MetricError):
            medae([], [])

    def test_permutation_invariance(self):
        rng = np.random.default_rng(1)
        y = rng.poisson(5.0, size=40).astype(float) + 1
        y_hat = y + rng.normal(size=40)
        perm = rng.permutation(40)
        for metric in (mae, mape, medae):
            assert metric(y, y_hat) == pytest.approx(metric(y[perm], y_hat[perm]), rel=1e-12)


class TestEss:
    def test_iid_series(self):
        draws = RandomStream(2).gen.standard_normal(5000)
        assert 4000 <= ess(draws) <= 6000

    def test_ar1_series(self):
        phi = 0.9
        gen = RandomStream(3).gen
        n = 200000
        eps = gen.standard_normal(n)
        x = np.empty(n)
        x[0] = eps[0]
        for i in range(1, n):
            x[i] = phi * x[i - 1] + eps[i]
        target = n * (1 - phi) / (1 + phi)
        assert abs(ess(x) - target) / target < 0.25

    def test_constant_series_warns(self):
        with pytest.warns(UserWarning):
            val = ess(np.full(100, 3.0))
        assert val == 100.0

    def test_bounds(self):
        draws = RandomStream(4).gen.standard_normal(500)
        val = ess(draws)
        assert 0 < val <= 500
        with pytest.raises(MetricError):
            ess(np.arange(5.0))

    def test_matrix_shape(self):
        gen = RandomStream(5).gen
        draws = gen.standard_normal((200, 3, 4))
        out = ess_matrix(draws)
        assert out.shape == (3, 4)
        assert np.all((out > 0) & (out <= 200))


class TestDicWaic:
    def test_single_draw_degenerate(self):
        ll = np.array([[-1.2, -0.7, -2.0]])
        crit = dic_waic(ll, ll[0])
        assert crit.p_d == 0.0
        assert crit.p_w == 0.0
        assert crit.dic == pytest.approx(-2 * ll.sum())
        assert crit.waic == pytest.approx(-2 * ll.sum())

    def test_two_draw_hand_oracle(self):
        ll = np.array([[-1.0, -2.0], [-3.0, -1.0]])
        plug = np.array([-1.5, -1.2])
        mean_dev = -2 * ((-3.0) + (-4.0)) / 2  # 7.0
        plug_dev = -2 * (-2.7)  # 5.4
        p_d = mean_dev - plug_dev  # 1.6
        lppd = (
            np.log(0.5 * (np.exp(-1.0) + np.exp(-3.0)))
            + np.log(0.5 * (np.exp(-2.0) + np.exp(-1.0)))
        )
        p_w = np.var([-1.0, -3.0], ddof=1) + np.var([-2.0, -1.0], ddof=1)  # 2.5
        crit = dic_waic(ll, plug)
        assert crit.p_d == pytest.approx(p_d, abs=1e-12)
        assert crit.dic == pytest.approx(mean_dev + p_d, abs=1e-12)
        assert crit.p_w == pytest.approx(p_w, abs=1e-12)
        assert crit.waic == pytest.approx(-2 * (lppd - p_w), abs=1e-12)

    def test_p_w_nonnegative(self):
        gen = RandomStream(6).gen
        ll = gen.normal(-3.0, 1.0, size=(50, 20))
        crit = dic_waic(ll, ll.mean(axis=0))
        assert crit.p_w >= 0

    def test_rejects_nonfinite(self):
        with pytest.raises(MetricError):
            dic_waic(np.array([[np.inf, 0.0]]), np.zeros(2))


class TestFitSummary:
    def test_end_to_end_summary(self):
        design = SimDesign(group=1, T=10, grid=(3, 3), h_s=3, kappa=0.4, rho=0.3, c=3.0)
        sim = simulate_dataset(design, RandomStream(7))
        spec = ModelSpec.from_preset("hypara1")
        chain = run_chain(spec, sim.graph, sim.data,
                          McmcSettings(n_burn=100, n_keep_iterations=200, seed=1))
        summary = fit_summary(chain, sim.data)
        assert summary.mae >= 0 and np.isfinite(summary.dic) and np.isfinite(summary.waic)
        assert summary.p_w >= 0
        assert summary.n_draws == 200
        assert 0 < summary.ess_mean <= 200
        assert summary.ess_cells.shape == (10, 9)
        for name in ("c", "kappa", "rho"):
            stats = summary.parameters[name]
            assert stats["min"] <= stats["median"] <= stats["max"]
        payload = summary.to_dict()
        assert set(payload) >= {"mae", "dic", "waic", "p_d", "p_w", "parameters"}

    def test_summary_matches_direct_metrics(self):
        design = SimDesign(group=2, T=6, grid=(3, 3), h_s=3, kappa=0.6, rho=0.0, c=2.0)
        sim = simulate_dataset(design, RandomStream(8))
        spec = ModelSpec.from_preset("hypara3")
        chain = run_chain(spec, sim.graph, sim.data,
                          McmcSettings(n_burn=50, n_keep_iterations=50, seed=2))
        summary = fit_summary(chain, sim.data, compute_cell_ess=False)
        assert summary.mae == pytest.approx(mae(sim.data.y, chain.fitted_mean))
        assert summary.medae == pytest.approx(medae(sim.data.y, chain.fitted_mean))
        crit = dic_waic(chain.log_lik,
                        poisson_log_lik(sim.data.y, chain.fitted_mean).ravel())
        assert summary.dic == pytest.approx(crit.dic)

    def test_poisson_log_lik_values(self):
        got = poisson_log_lik(np.array([0, 3]), np.array([2.0, 1.5]))
        assert got[0] == pytest.approx(-2.0)
        assert got[1] == pytest.approx(3 * np.log(1.5) - 1.5 - sp.gammaln(4.0))

    def test_summarize_scalar_quartiles(self):
        stats = summarize_scalar(np.arange(1.0, 6.0))
        assert stats == {
            "min": 1.0, "q1": 2.0, "median": 3.0, "mean": 3.0, "q3": 4.0, "max": 5.0,
        }
