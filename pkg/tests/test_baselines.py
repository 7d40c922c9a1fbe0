import math

import numpy as np
import pytest

from conftest import make_config
from bayesalloc.baselines import (
    AdaptiveEstimate,
    adaptive_update,
    adaptive_update_arrays,
    confidence_region,
    gauss_hermite_expectation,
    initial_estimates,
    solve_adaptive,
    solve_strong_robust,
    _RobustStageBlock,
    _gh_nodes,
)
from bayesalloc.config import case_preset
from bayesalloc.dynamics import utility
from bayesalloc.measures import MixtureMeasure


def batch_mle(values):
    x = np.asarray(values, dtype=float)
    return float(x.mean()), float(x.var())


class TestInitialEstimates:
    def test_constant_sample(self):
        est = initial_estimates([1.0, 1.0, 1.0])
        assert (est.mean_hat, est.var_hat, est.count) == (1.0, 0.0, 3)

    def test_two_point_mle(self):
        est = initial_estimates([0.0, 2.0])
        assert (est.mean_hat, est.var_hat, est.count) == (1.0, 1.0, 2)

    def test_clt_band(self):
        draws = np.random.default_rng(0).normal(0.001, 0.06, 1_000_000)
        est = initial_estimates(draws)
        assert abs(est.mean_hat - 0.001) < 4 * 0.06 / 1e3

    def test_too_fewry(self):
        with pytest.raises(ValueError):
            initial_estimates([1.0])


class TestAdaptiveUpdate:
    def test_exact_case(self):
        est = adaptive_update(AdaptiveEstimate(0.0, 0.0, 1), 2.0)
        assert (est.mean_hat, est.var_hat, est.count) == (1.0, 1.0, 2)

    def test_mean_preserving_observation_shrinks_variance(self):
        est = AdaptiveEstimate(0.01, 0.5, 7)
        nxt = adaptive_update(est, 0.01)
        assert nxt.mean_hat == pytest.approx(0.01, rel=1e-14)
        assert nxt.var_hat == pytest.approx(0.5 * 7 / 8, rel=1e-12)

    def test_fold_equals_batch_mle(self, rng):
        for _ in range(50):
            t0 = int(rng.integers(2, 20))
            prefix = rng.normal(scale=0.1, size=t0)
            mean0, var0 = batch_mle(prefix)
            est = AdaptiveEstimate(mean0, var0, t0)
            seq = rng.normal(scale=0.1, size=int(rng.integers(1, 40)))
            for z in seq:
                est = adaptive_update(est, float(z))
            want_mean, want_var = batch_mle(np.concatenate([prefix, seq]))
            assert abs(est.mean_hat - want_mean) <= 1e-10
            assert abs(est.var_hat - want_var) <= 1e-10
            assert est.count == t0 + seq.size

    def test_arrays_match_scalar(self, rng):
        mu = rng.normal(size=11)
        var = rng.uniform(0.001, 0.5, size=11)
        z = rng.normal(size=11)
        m2, v2 = adaptive_update_arrays(mu, var, 9, z)
        for i in range(11):
            est = adaptive_update(AdaptiveEstimate(mu[i], var[i], 9), z[i])
            assert est.mean_hat == m2[i] and est.var_hat == v2[i]

    def test_validation(self):
        with pytest.raises(ValueError):
            AdaptiveEstimate(0.0, -1e-3, 5)
        with pytest.raises(ValueError):
            AdaptiveEstimate(0.0, 1.0, 0)


class TestConfidenceRegion:
    def test_center_membership_and_halfwidth(self):
        reg = confidence_region(AdaptiveEstimate(0.0, 1.0, 100), 0.8)
        assert reg.contains(0.0, 1.0)
        assert reg.radius_sq == pytest.approx(-2 * math.log(0.2), rel=1e-15)
        assert reg.mean_halfwidth == pytest.approx(0.17941225779941014, rel=1e-12)

    def test_small_level_collapses(self):
        reg = confidence_region(AdaptiveEstimate(0.01, 0.002, 50), 1e-12)
        assert reg.mean_halfwidth < 1e-7
        assert not reg.contains(0.011, 0.002)

    def test_nesting(self, rng):
        est = AdaptiveEstimate(0.005, 0.003, 100)
        lo = confidence_region(est, 0.6)
        hi = confidence_region(est, 0.8)
        for _ in range(200):
            mu = float(rng.normal(0.005, 0.02))
            var = float(rng.uniform(0.001, 0.006))
            if lo.contains(mu, var):
                assert hi.contains(mu, var)

    def test_candidate_layout(self):
        reg = confidence_region(AdaptiveEstimate(0.0, 1.0, 100), 0.8)
        cand = reg.candidates(64, 2)
        assert cand.shape == (129, 2)
        assert np.all(cand[:, 1] > 0.0)
        score = 100 * cand[:, 0] ** 2 / 1.0 + 100 * (cand[:, 1] - 1.0) ** 2 / 2.0
        assert np.all(score <= reg.radius_sq * (1 + 1e-9))

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError):
            confidence_region(AdaptiveEstimate(0.0, 0.0, 10), 0.8)


class TestGaussHermite:
    def test_weight_normalization(self):
        assert gauss_hermite_expectation(lambda z: 1.0, 0.7, 2.0, 16) == pytest.approx(
            1.0, abs=1e-14
        )

    def test_first_moment(self):
        assert gauss_hermite_expectation(lambda z: z, 0.3, 2.0, 16) == pytest.approx(
            0.3, abs=1e-12
        )

    def test_lognormal_mean(self):
        got = gauss_hermite_expectation(math.exp, 0.0, 0.25, 32)
        assert got == pytest.approx(math.exp(0.125), abs=1e-10)

    def test_non_finite_integrand(self):
        with pytest.raises(ValueError):
            gauss_hermite_expectation(lambda z: float("nan"), 0.0, 1.0, 8)


class TestStrongRobust:
    def test_collapsed_region_matches_direct_recursion(self):
        # a near-degenerate region makes the game a plain two-period program
        mu0, var0 = 4.0e-3, 3.0e-3
        cfg = make_config(T=2, N=80, confidence_level=1e-9, mu0_hat=mu0, sigma0_sq_hat=var0)
        pol = solve_strong_robust(cfg)

        xi, wn = _gh_nodes(cfg.gh_nodes)
        z = mu0 + math.sqrt(2 * var0) * xi
        grid = np.linspace(0.0, 1.0, 2001)

        def stage1_best(y):
            w = y * (1.0 + cfg.r + grid[:, None] * (np.exp(z)[None, :] - 1 - cfg.r))
            return float(np.max(utility(w, cfg.eta) @ wn))

        w1 = cfg.y0 * (1.0 + cfg.r + grid[:, None] * (np.exp(z)[None, :] - 1 - cfg.r))
        v1 = np.array([[stage1_best(w1[i, q]) for q in range(z.size)] for i in range(0, 2001, 100)])
        root = float(np.max(v1 @ wn))
        assert pol.root_value == pytest.approx(root, abs=2e-4)

    def test_case_preset_all_bank(self):
        cfg = case_preset("1-1", "ci")
        pol = solve_strong_robust(cfg)
        assert pol.root_control <= 0.05
        for stage in pol.stages.values():
            assert np.all(stage.control.y_raw <= 0.05)

    def test_worst_case_dominated_by_center(self, rng):
        cfg = case_preset("1-1", "ci")
        from bayesalloc.baselines import AdaptiveEstimate as AE

        reg = confidence_region(AE(cfg.mu0_hat, cfg.sigma0_sq_hat, cfg.t0), 0.8)
        cand = reg.candidates(cfg.region_boundary, cfg.region_rings)
        xi, wn = _gh_nodes(cfg.gh_nodes)
        z_all = cand[:, 0][:, None] + np.sqrt(2 * cand[:, 1])[:, None] * xi[None, :]
        eg_all = np.expm1(z_all) - cfg.r
        y = np.array([100.0])
        block_all = _RobustStageBlock(y, eg_all, wn, cfg.r, eta=cfg.eta)
        block_center = _RobustStageBlock(y, eg_all[:1], wn, cfg.r, eta=cfg.eta)
        for u in (0.0, 0.3, 0.8, 1.0):
            uv = np.array([u])
            assert block_all.values(uv)[0] <= block_center.values(uv)[0] + 1e-14

    def test_unresolved_estimates_rejected(self):
        cfg = make_config(mu0_hat=None, sigma0_sq_hat=None)
        with pytest.raises(ValueError):
            solve_strong_robust(cfg)


class TestAdaptive:
    def test_zero_variance_pessimistic_belief_stays_in_bank(self):
        # point belief below the bank rate: risky asset is dominated
        cfg = make_config(
            T=1,
            N=8,
            mu0_hat=-0.01,
            sigma0_sq_hat=0.0,
            sampling_measure=MixtureMeasure(((1.0, -0.01, 1e-20),)),
        )
        pol = solve_adaptive(cfg)
        assert pol.root_control == 0.0

    def test_optimistic_point_belief_goes_all_in(self):
        cfg = make_config(
            T=1,
            N=8,
            mu0_hat=0.05,
            sigma0_sq_hat=0.0,
            sampling_measure=MixtureMeasure(((1.0, 0.05, 1e-20),)),
        )
        pol = solve_adaptive(cfg)
        assert pol.root_control > 0.999

    def test_ci_solve_shapes_and_bounds(self):
        cfg = make_config(T=3, N=40)
        pol = solve_adaptive(cfg)
        assert pol.method == "ad" and sorted(pol.stages) == [1, 2]
        assert pol.root_value <= 1.0 / (cfg.eta - 1.0)
        for stage in pol.stages.values():
            assert stage.value.x_raw.shape[1] == 3
