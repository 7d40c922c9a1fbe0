import math

import numpy as np
import pytest

from conftest import make_config
from bayesalloc.baselines import gauss_hermite_expectation
from bayesalloc.dynamics import AugmentedState, transition, utility, utility_bound, wealth_step
from bayesalloc.measures import MixtureMeasure, PosteriorState, sample_posterior_mean
from bayesalloc.solver_ab import (
    Policy,
    backward_induction,
    generate_mesh,
    maximize_unit_batched,
    optimize_control,
    stage_value_estimate,
)


class _FrozenRng:
    """Generator stand-in that zeroes uniforms and collapses normals to their means."""

    def random(self, shape=None):
        return np.zeros(shape) if shape is not None else 0.0

    def normal(self, mean, sd=None, size=None):
        return np.asarray(mean, dtype=float)


class TestGenerateMesh:
    def test_all_bank_roll_forward(self):
        cfg = make_config(N=1, T=2)
        mesh = generate_mesh(cfg, _FrozenRng(), 1.0)
        r = cfg.r
        want = [100.0, 100.0 * (1 + r), 100.0 * (1 + r) ** 2]
        assert mesh.wealth[0] == pytest.approx(want, rel=1e-14)

    def test_transition_identity_exact(self, rng):
        cfg = make_config(N=12, T=4)
        mesh = generate_mesh(cfg, np.random.default_rng(cfg.seeds.design), 2.0)
        for _ in range(30):
            i = int(rng.integers(0, cfg.N))
            t = int(rng.integers(0, cfg.T))
            stepped = transition(
                t,
                mesh.site_state(i, t),
                float(mesh.controls[i, t]),
                float(mesh.noise[i, t]),
                cfg.r,
                c0=2.0,
            )
            nxt = mesh.site_state(i, t + 1)
            assert stepped.wealth == nxt.wealth
            assert stepped.posterior.atoms == nxt.posterior.atoms

    def test_reduced_consistent_with_reduce_state(self, rng):
        from bayesalloc.dynamics import reduce_state

        cfg = make_config(N=8, T=3)
        mesh = generate_mesh(cfg, np.random.default_rng(1), 1.0)
        for t in range(cfg.T + 1):
            red = mesh.reduced(t)
            for i in range(cfg.N):
                want = reduce_state(mesh.site_state(i, t), cfg.M)
                assert np.all(np.abs(red[i] - want) <= 1e-12 * np.maximum(1.0, np.abs(want)))

    def test_wealth_positive_with_spread(self):
        cfg = make_config(N=120, T=6)
        mesh = generate_mesh(cfg, np.random.default_rng(3), 1.0)
        assert mesh.wealth.min() > 0.0
        assert mesh.wealth[:, -1].var() > 0.0

    def test_controls_uniform_range(self):
        cfg = make_config(N=200, T=5)
        mesh = generate_mesh(cfg, np.random.default_rng(4), 1.0)
        assert mesh.controls.min() >= 0.0 and mesh.controls.max() <= 1.0
        assert abs(mesh.controls.mean() - 0.5) < 0.02

    def test_prior_mass_mismatch(self):
        cfg = make_config()
        with pytest.raises(ValueError):
            generate_mesh(
                cfg,
                np.random.default_rng(0),
                2.0,
                initial_posterior=PosteriorState(1.0, 0.0, 1.0),
            )


class TestOptimizeControl:
    def test_quadratic_peak(self):
        u, v = optimize_control(lambda u: -((u - 0.3) ** 2))
        assert abs(u - 0.3) <= 1e-4
        assert v == pytest.approx(0.0, abs=1e-8)

    def test_constant_tie_breaks_to_zero(self):
        u, v = optimize_control(lambda u: 7.0)
        assert u == 0.0 and v == 7.0

    def test_two_atom_exact_estimator(self):
        a, b = math.expm1(0.1), math.expm1(-0.1)

        def estimator(u):
            return 0.5 * (utility(100 * (1 + u * a), 1.5) + utility(100 * (1 + u * b), 1.5))

        u, _ = optimize_control(estimator)
        assert abs(u - 0.3332) <= 2e-3

    def test_batched_agrees_with_scalar(self, rng):
        coefs = rng.normal(size=(25, 3))

        def fb(u):
            return coefs[:, 0] * np.sin(4 * coefs[:, 1] * u) - (u - np.abs(coefs[:, 2])) ** 2

        us, vs = maximize_unit_batched(fb, 25)
        for i in range(25):
            ui, vi = optimize_control(
                lambda u, i=i: float(
                    coefs[i, 0] * math.sin(4 * coefs[i, 1] * u) - (u - abs(coefs[i, 2])) ** 2
                )
            )
            assert us[i] == ui and vs[i] == vi


class TestStageValueEstimate:
    def test_constant_next_value(self):
        cfg = make_config(L=64)
        site = AugmentedState(100.0, PosteriorState(1.0, 0.0, 1.0, atoms=(0.1,)))
        got = stage_value_estimate(
            site, 0.4, lambda q: np.full(q.shape[0], 3.5), cfg, np.random.default_rng(0)
        )
        assert got == pytest.approx(3.5, abs=1e-12)

    def test_one_point_belief(self):
        cfg = make_config(L=256, r=0.0)
        z_bar = 0.04
        site = AugmentedState(100.0, PosteriorState(1e-12, 0.0, 1.0, atoms=(z_bar,)))
        got = stage_value_estimate(site, 0.7, None, cfg, np.random.default_rng(1))
        want = float(utility(wealth_step(100.0, 0.7, 0.0, z_bar), cfg.eta))
        assert got == pytest.approx(want, abs=1e-12)

    def test_matches_quadrature_plus_atoms(self):
        cfg = make_config(L=100_000)
        c0, atoms = 50.0, (0.03, -0.01)
        post = PosteriorState(c0, 0.002, 0.003, atoms=atoms)
        site = AugmentedState(100.0, post)
        u = 0.4

        def f(z):
            return float(utility(wealth_step(100.0, u, cfg.r, z), cfg.eta))

        base_part = gauss_hermite_expectation(f, 0.002, 0.003, 64)
        want = (c0 * base_part + sum(f(z) for z in atoms)) / (c0 + len(atoms))
        got = stage_value_estimate(site, u, None, cfg, np.random.default_rng(2))
        draws = sample_posterior_mean(post, cfg.L, np.random.default_rng(2))
        se = float(np.std([f(z) for z in draws[:2000]])) / math.sqrt(cfg.L)
        assert abs(got - want) < 3 * se + 1e-9


class TestBackwardInduction:
    def test_stage_count_and_bound(self):
        cfg = make_config(T=3)
        mesh = generate_mesh(cfg, np.random.default_rng(cfg.seeds.design), 1.0)
        pol = backward_induction(cfg, mesh)
        assert sorted(pol.stages) == [1, 2]
        bound = utility_bound(cfg.eta)
        assert pol.root_value <= bound
        for t, stage in pol.stages.items():
            assert np.all(stage.value.y_raw <= bound)
            assert np.all((stage.control.y_raw >= 0.0) & (stage.control.y_raw <= 1.0))

    def test_deterministic_rerun_and_threads(self):
        cfg = make_config(T=3, N=30, L=80)

        def solve(threads):
            mesh = generate_mesh(cfg, np.random.default_rng(cfg.seeds.design), 1.0)
            return backward_induction(cfg, mesh, threads=threads)

        a, b, c = solve(1), solve(1), solve(3)
        assert a.root_control == b.root_control == c.root_control
        assert a.root_value == b.root_value == c.root_value
        for t in a.stages:
            assert np.array_equal(a.stages[t].value.y_raw, b.stages[t].value.y_raw)
            assert np.array_equal(a.stages[t].value.y_raw, c.stages[t].value.y_raw)
            assert np.array_equal(a.stages[t].control.y_raw, c.stages[t].control.y_raw)

    def test_point_mass_upside_goes_all_in(self):
        # return pinned above the bank rate makes full investment dominant
        z_bar = 0.02
        cfg = make_config(
            T=2,
            N=24,
            L=64,
            r=0.0,
            sampling_measure=MixtureMeasure(((1.0, z_bar, 1e-20),)),
        )
        stub = PosteriorState(1e-12, 0.0, 1.0, atoms=(z_bar,))
        mesh = generate_mesh(cfg, np.random.default_rng(5), 1e-12, initial_posterior=stub)
        pol = backward_induction(cfg, mesh)
        assert pol.root_control > 0.999
        want = float(utility(100.0 * math.exp(2 * z_bar), cfg.eta))
        assert pol.root_value == pytest.approx(want, rel=1e-4)

    def test_mesh_config_mismatch(self):
        cfg = make_config(T=3)
        mesh = generate_mesh(cfg, np.random.default_rng(0), 1.0)
        cfg2 = make_config(T=4)
        with pytest.raises(ValueError):
            backward_induction(cfg2, mesh)


class TestPolicyInvariants:
    def test_stage_set_enforced(self):
        with pytest.raises(ValueError):
            Policy(
                method="ab",
                c0=1.0,
                horizon=3,
                root_control=0.0,
                root_value=0.0,
                eta=1.5,
                r=0.0,
                y0=100.0,
                stages={},
            )
