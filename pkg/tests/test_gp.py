import math

import numpy as np
import pytest

from bayesalloc import gp


def bumps_2d(x):
    """Smooth two-bump test surface used as a held-out regression target."""
    return np.exp(-8 * ((x[:, 0] - 0.3) ** 2 + (x[:, 1] - 0.4) ** 2)) + 0.7 * np.exp(
        -12 * ((x[:, 0] - 0.75) ** 2 + (x[:, 1] - 0.7) ** 2)
    )


class TestMatern52:
    def test_zero_distance(self):
        h = gp.KernelHyper(2.5, (1.0, 1.0), 1e-6)
        assert gp.matern52([0.3, -0.2], [0.3, -0.2], h) == 2.5

    def test_unit_distance_value(self):
        h = gp.KernelHyper(1.0, (1.0,), 1e-6)
        want = (1 + math.sqrt(5) + 5.0 / 3.0) * math.exp(-math.sqrt(5))
        assert gp.matern52([0.0], [1.0], h) == pytest.approx(want, abs=0)
        assert gp.matern52([0.0], [1.0], h) == pytest.approx(0.52400, abs=1e-5)

    def test_symmetry_exact(self, rng):
        h = gp.KernelHyper(1.7, tuple(rng.uniform(0.1, 2.0, size=4)), 1e-6)
        for _ in range(100):
            a = rng.normal(size=4)
            b = rng.normal(size=4)
            assert gp.matern52(a, b, h) == gp.matern52(b, a, h)

    def test_dimension_mismatch(self):
        h = gp.KernelHyper(1.0, (1.0, 1.0), 1e-6)
        with pytest.raises(ValueError):
            gp.matern52([0.0], [1.0, 2.0], h)

    def test_hyper_validation(self):
        with pytest.raises(ValueError):
            gp.KernelHyper(0.0, (1.0,), 1e-6)
        with pytest.raises(ValueError):
            gp.KernelHyper(1.0, (-1.0,), 1e-6)
        with pytest.raises(ValueError):
            gp.KernelHyper(1.0, (), 1e-6)


class TestFit:
    def test_line_interpolation(self):
        x = np.linspace(0.0, 1.0, 5)[:, None]
        y = 2.0 * x.ravel()
        s = gp.fit(x, y, seed=1, nugget_var=1e-8)
        assert np.max(np.abs(s.predict(x) - y)) < 1e-4

    def test_constant_short_circuit(self):
        x = np.random.default_rng(0).random((6, 3))
        s = gp.fit(x, np.full(6, 3.25), seed=1)
        assert isinstance(s, gp.ConstantSurrogate)
        assert s.predict(np.zeros(3)) == 3.25
        assert np.all(s.predict(np.zeros((4, 3))) == 3.25)

    def test_held_out_rmse(self):
        rng = np.random.default_rng(12)
        x_train = rng.random((200, 2))
        x_test = rng.random((100, 2))
        y_train = bumps_2d(x_train)
        s = gp.fit(x_train, y_train, seed=5)
        resid = s.predict(x_test) - bumps_2d(x_test)
        rmse = float(np.sqrt(np.mean(resid**2)))
        assert rmse <= 0.05 * float(np.ptp(y_train))

    def test_degenerate_inputs_rejected(self):
        x = np.ones((5, 2))
        with pytest.raises(gp.FitError):
            gp.fit(x, np.arange(5.0), seed=0)

    def test_degenerate_dimension_dropped(self):
        rng = np.random.default_rng(3)
        x = np.column_stack([rng.random(30), np.full(30, 7.0)])
        y = np.sin(6 * x[:, 0])
        s = gp.fit(x, y, seed=2)
        assert list(s.kept) == [0]
        assert np.max(np.abs(s.predict(x) - y)) < 1e-2

    def test_lml_beats_every_start(self, rng):
        for trial in range(5):
            x = rng.random((40, 3))
            y = np.cos(4 * x[:, 0]) + x[:, 1] ** 2
            s = gp.fit(x, y, seed=trial)
            finite = [v for v in s.start_lmls if np.isfinite(v)]
            assert finite and s.lml >= max(finite) - 1e-9


class TestPredict:
    def test_training_point_interpolation(self, rng):
        x = rng.random((40, 2))
        y = bumps_2d(x)
        s = gp.fit(x, y, seed=7, nugget_var=1e-8)
        assert np.max(np.abs(s.predict(x) - y)) <= 1e-3 * float(np.ptp(y))

    def test_far_query_reverts_to_mean(self, rng):
        x = rng.random((50, 2))
        y = bumps_2d(x)
        s = gp.fit(x, y, seed=9)
        far = np.array([1e6, -1e6])
        t_sd = float(np.std(y))
        assert abs(s.predict(far) - float(np.mean(y))) <= 0.01 * t_sd

    def test_linearity_in_targets(self, rng):
        x = rng.random((30, 2))
        y = bumps_2d(x)
        c = 2.5
        s1 = gp.fit(x, y, seed=11)
        s2 = gp.fit(x, c * y, seed=11)
        q = rng.random((20, 2))
        assert np.max(np.abs(s2.predict(q) - c * s1.predict(q))) < 1e-10

    def test_affine_input_scaling_invariance(self, rng):
        x = rng.random((40, 3))
        y = np.sin(3 * x[:, 0]) + x[:, 2]
        scale = np.array([2.0, 40.0, 0.01])
        s1 = gp.fit(x, y, seed=13)
        s2 = gp.fit(x * scale, y, seed=13)
        q = rng.random((25, 3))
        assert np.max(np.abs(s1.predict(q) - s2.predict(q * scale))) < 1e-8

    def test_dimension_mismatch(self, rng):
        x = rng.random((10, 2))
        s = gp.fit(x, x[:, 0], seed=0)
        with pytest.raises(ValueError):
            s.predict(np.zeros(3))


class TestFactorization:
    def test_gram_positive_definite_with_floor_nugget(self, rng):
        from scipy.linalg import cho_factor

        for _ in range(20):
            n = int(rng.integers(5, 100))
            d = int(rng.integers(1, 6))
            x = np.ascontiguousarray(rng.random((n, d)))
            k = gp._matern_gram(x, 1.0, 1e-10)
            c, _ = cho_factor(k, lower=True)
            assert np.all(np.diag(c) > 0)

    def test_reconstruct_round_trip(self, rng):
        x = rng.random((25, 2))
        y = bumps_2d(x)
        s = gp.fit(x, y, seed=21)
        r = gp.reconstruct(s.x_raw, s.y_raw, s.kept, s.lo, s.span, s.t_mean, s.t_sd, s.hyper)
        q = rng.random((15, 2))
        assert np.array_equal(s.predict(q), r.predict(q))


class TestColumnVaryingPredictor:
    def test_matches_full_predict(self, rng):
        x = rng.random((60, 4)) * np.array([30.0, 1.0, 0.1, 0.01]) + np.array([80.0, 0, 0, 0])
        y = np.log(x[:, 0]) + 3 * x[:, 1] - x[:, 2]
        s = gp.fit(x, y, seed=17)
        q = rng.random((80, 4)) * np.array([30.0, 1.0, 0.1, 0.01]) + np.array([80.0, 0, 0, 0])
        cv = gp.ColumnVaryingPredictor(s, q)
        for _ in range(3):
            col = rng.uniform(80.0, 110.0, size=80)
            q2 = q.copy()
            q2[:, 0] = col
            assert np.max(np.abs(cv.predict_column(col) - s.predict(q2))) < 1e-10
