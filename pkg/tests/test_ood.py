import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gasshift import datagen as dg
from gasshift.errors import DegenerateInputError
from gasshift.ood import GaussianProfile, distances, fit_profile, mahalanobis, threshold_from_training


def _profile(mean, cov):
    cov = np.asarray(cov, dtype=float)
    return GaussianProfile(np.asarray(mean, dtype=float), cov, np.linalg.cholesky(cov))


class TestFit:
    def test_constant_rows_degenerate(self):
        with pytest.raises(DegenerateInputError):
            fit_profile(np.ones((10, 3)))

    def test_constant_column_degenerate(self):
        X = np.random.default_rng(0).normal(size=(20, 3))
        X[:, 1] = 4.0
        with pytest.raises(DegenerateInputError):
            fit_profile(X)

    def test_too_few_rows(self):
        with pytest.raises(ValueError):
            fit_profile(np.eye(3))

    def test_scaled_basis_identity_covariance(self):
        # +-sqrt(3) e_i for each axis: zero mean, per-axis sum of squares 6, divisor n-1 = 5 -> 6/5
        s = math.sqrt(3)
        X = np.vstack([s * np.eye(3), -s * np.eye(3)])
        prof = fit_profile(X)
        np.testing.assert_allclose(prof.mean, 0, atol=1e-15)
        np.testing.assert_allclose(prof.cov, np.eye(3) * 6 / 5, atol=1e-12)

    def test_matches_sample_covariance(self):
        X = np.random.default_rng(1).normal(size=(50, 3)) @ np.array([[2, 0, 0], [1, 1, 0], [0, 0.5, 3]])
        prof = fit_profile(X)
        d = X - X.mean(axis=0)
        np.testing.assert_allclose(prof.cov, d.T @ d / 49, rtol=1e-12)
        np.testing.assert_allclose(prof.cov, prof.cov.T, atol=1e-12)
        assert np.all(np.linalg.eigvalsh(prof.cov) > 0)

    def test_exp2_dataset1_variances(self):
        ds = dg.generate(dg.builtin_gas_table().entries[0], dg.exp2_params().first, 10_000, 5)
        diag = np.diag(fit_profile(ds.features).cov)
        np.testing.assert_allclose(diag, [50**2, 1, 1], rtol=0.10)

    def test_collinear_gets_ridge(self):
        a = np.array([1.0, -1.0, 1.0, -1.0])
        b = np.array([1.0, 1.0, -1.0, -1.0])
        X = np.column_stack([a, a, b])  # duplicate column: nonpositive Cholesky pivot
        prof = fit_profile(X)
        assert prof.ridge == pytest.approx(1e-9 * np.trace(np.cov(X, rowvar=False)) / 3)
        assert np.all(np.isfinite(distances(prof, X)))

    def test_solve_reproduces_quadratic_form(self):
        X = np.random.default_rng(3).normal(size=(100, 3)) * [50, 1, 1] + [273, 10, 10]
        prof = fit_profile(X)
        x = np.array([300.0, 9.0, 11.0])
        diff = x - prof.mean
        z = prof.solve(diff)
        np.testing.assert_allclose(prof.cov @ z, diff, rtol=1e-10, atol=1e-10)
        assert diff @ z == pytest.approx(mahalanobis(prof, x) ** 2, rel=1e-10)


class TestDistance:
    def test_zero_at_mean(self):
        prof = _profile([1, 2, 3], np.diag([2.0, 3.0, 4.0]))
        assert mahalanobis(prof, [1, 2, 3]) == 0.0

    def test_identity_reduces_to_euclid(self):
        prof = _profile([0, 0, 0], np.eye(3))
        assert mahalanobis(prof, [3, 4, 0]) == pytest.approx(5.0, abs=1e-12)

    def test_scaled_axis(self):
        prof = _profile([0, 0, 0], np.diag([4.0, 1.0, 1.0]))
        assert mahalanobis(prof, [4, 0, 0]) == pytest.approx(2.0, abs=1e-12)

    def test_distances_single_record_at_mean(self):
        prof = _profile([300, 50, 15], np.diag([625.0, 25.0, 1.0]))
        np.testing.assert_array_equal(distances(prof, np.array([[300.0, 50.0, 15.0]])), [0.0])

    def test_permutation_equivariant(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(200, 3))
        prof = fit_profile(X)
        perm = rng.permutation(200)
        np.testing.assert_array_equal(distances(prof, X[perm]), distances(prof, X)[perm])

    def test_dataset_input(self):
        ds = dg.generate(dg.builtin_gas_table().entries[0], dg.exp1_params(), 50, 1)
        prof = fit_profile(ds.features)
        np.testing.assert_array_equal(distances(prof, ds), distances(prof, ds.features))

    def test_self_scores_follow_chi3(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(20_000, 3)) @ np.array([[3, 0, 0], [1, 2, 0], [0.5, 0, 1]]) + [1, 2, 3]
        mean_d = distances(fit_profile(X), X).mean()
        # Monte-Carlo oracle: mean norm of 3-D standard normals (~ 2*sqrt(2/pi) = 1.596)
        oracle = np.linalg.norm(np.random.default_rng(6).normal(size=(200_000, 3)), axis=1).mean()
        assert oracle == pytest.approx(1.59, abs=0.01)
        assert mean_d == pytest.approx(oracle, abs=0.02)


class TestThreshold:
    def test_interpolated_percentile(self):
        t = threshold_from_training(np.arange(1, 101), 95)
        # rank 0.95 * 99 = 94.05 -> 95 + 0.05 * (96 - 95)
        assert t.value == pytest.approx(95.05, abs=1e-12)
        assert (t.percentile, t.n_train) == (95.0, 100)
        assert t.to_dict() == {"percentile": 95.0, "value": t.value, "n_train": 100}

    def test_fraction_above(self):
        d = np.random.default_rng(7).exponential(size=4000)
        t = threshold_from_training(d)
        assert np.mean(t.exceeds(d)) == pytest.approx(0.05, abs=0.001)

    @pytest.mark.parametrize("pct", [0, 100, -5, 120])
    def test_percentile_bounds(self, pct):
        with pytest.raises(ValueError):
            threshold_from_training([1.0, 2.0], pct)

    def test_empty(self):
        with pytest.raises(ValueError):
            threshold_from_training([])

    def test_calibration_on_fresh_gaussian_data(self):
        rng = np.random.default_rng(8)
        cov = np.array([[4, 1, 0], [1, 2, 0.3], [0, 0.3, 1]])
        train = rng.multivariate_normal([0, 0, 0], cov, size=8000)
        test = rng.multivariate_normal([0, 0, 0], cov, size=2000)
        prof = fit_profile(train)
        t = threshold_from_training(distances(prof, train))
        rate = np.mean(t.exceeds(distances(prof, test)))
        assert 0.03 <= rate <= 0.07


well_conditioned = st.tuples(
    st.lists(st.floats(-1, 1), min_size=9, max_size=9),
    st.lists(st.floats(-100, 100), min_size=3, max_size=3),
    st.integers(0, 2**32 - 1),
)


class TestProperties:
    @settings(max_examples=200, deadline=None)
    @given(well_conditioned)
    def test_affine_invariance(self, case):
        entries, shift, seed = case
        A = np.eye(3) * 2 + np.reshape(entries, (3, 3))
        if np.linalg.cond(A) > 50:
            A = np.eye(3) * 3 + np.reshape(entries, (3, 3))
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(60, 3)) * [3, 1, 0.5]
        Y = X @ A.T + np.asarray(shift)
        np.testing.assert_allclose(distances(fit_profile(Y), Y), distances(fit_profile(X), X), atol=1e-8)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=6, max_size=6))
    def test_identity_covariance_is_euclidean(self, v):
        mu, x = np.array(v[:3]), np.array(v[3:])
        prof = _profile(mu, np.eye(3))
        assert mahalanobis(prof, x) == pytest.approx(np.linalg.norm(x - mu), rel=1e-12, abs=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.integers(0, 2**32 - 1))
    def test_reflection_symmetry(self, x, seed):
        X = np.random.default_rng(seed).normal(size=(30, 3))
        prof = fit_profile(X)
        x = np.asarray(x)
        assert mahalanobis(prof, x) == pytest.approx(mahalanobis(prof, 2 * prof.mean - x), rel=1e-9, abs=1e-12)
