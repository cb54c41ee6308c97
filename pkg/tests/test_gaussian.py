"""Gaussian primitive tests against closed-form and brute-force oracles."""

import numpy as np
import pytest

from depcox.errors import ValidationError
from depcox.gaussian import (
    Mvn,
    cholesky_with_jitter,
    conditional_mvn,
    gauss_density,
    gauss_gram,
    gauss_gram_dv,
    mvn_logpdf,
    mvn_sample,
)


class TestGaussDensity:
    def test_standard_normal_at_mean(self):
        assert gauss_density(0.0, 0.0, 1.0) == pytest.approx(1.0 / np.sqrt(2 * np.pi))

    def test_standard_normal_one_sigma(self):
        # (2*pi)**-0.5 * exp(-0.5)
        assert gauss_density(1.0, 0.0, 1.0) == pytest.approx(0.24197072451914337, abs=1e-12)

    def test_2d_at_mean(self):
        assert gauss_density((0, 0), (0, 0), 1.0) == pytest.approx(1.0 / (2 * np.pi), abs=1e-12)

    def test_product_of_axes(self):
        v = 0.7
        d2 = gauss_density((0.3, -0.4), (0.0, 0.1), v)
        d1a = gauss_density(0.3, 0.0, v)
        d1b = gauss_density(-0.4, 0.1, v)
        assert d2 == pytest.approx(d1a * d1b, rel=1e-12)

    def test_rejects_nonpositive_variance(self):
        with pytest.raises(ValidationError):
            gauss_density(0.0, 0.0, 0.0)
        with pytest.raises(ValidationError):
            gauss_density(0.0, 0.0, -1.0)

    def test_gram_matches_pairs(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(size=(4, 2))
        Z = rng.uniform(size=(3, 2))
        G = gauss_gram(X, Z, 0.5)
        for i in range(4):
            for j in range(3):
                assert G[i, j] == pytest.approx(gauss_density(X[i], Z[j], 0.5), rel=1e-12)

    def test_gram_dv_matches_finite_difference(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(size=(5, 1))
        v, h = 0.3, 1e-6
        _, dG = gauss_gram_dv(X, X, v)
        num = (gauss_gram(X, X, v + h) - gauss_gram(X, X, v - h)) / (2 * h)
        np.testing.assert_allclose(dG, num, atol=1e-6)


class TestCholeskyJitter:
    def test_gram_matrices_factor_after_jitter(self):
        # near-duplicate points make raw Gram matrices numerically singular
        rng = np.random.default_rng(2)
        for _ in range(20):
            base = rng.uniform(size=(8, 2))
            X = np.vstack([base, base + 1e-9])
            C = gauss_gram(X, X, 0.5)
            np.testing.assert_allclose(C, C.T, rtol=1e-12, atol=0)
            L, jit = cholesky_with_jitter(C)
            np.testing.assert_allclose(L @ L.T, C + jit * np.eye(len(C)), atol=1e-10)

    def test_empty_matrix(self):
        L, jit = cholesky_with_jitter(np.zeros((0, 0)))
        assert L.shape == (0, 0)


def _brute_conditional(mean, cov, obs_idx, obs_val):
    """Gaussian conditioning with explicit matrix inverses."""
    obs = np.asarray(obs_idx)
    free = np.setdiff1d(np.arange(len(mean)), obs)
    S_oo = cov[np.ix_(obs, obs)]
    S_fo = cov[np.ix_(free, obs)]
    S_ff = cov[np.ix_(free, free)]
    inv = np.linalg.inv(S_oo)
    mean_c = mean[free] + S_fo @ inv @ (obs_val - mean[obs])
    cov_c = S_ff - S_fo @ inv @ S_fo.T
    return mean_c, cov_c


class TestConditionalMvn:
    def _random_mvn(self, rng, n):
        A = rng.standard_normal((n, n))
        return Mvn(rng.standard_normal(n), A @ A.T + n * np.eye(n))

    def test_empty_conditioning_returns_prior(self):
        rng = np.random.default_rng(3)
        joint = self._random_mvn(rng, 4)
        cond = conditional_mvn(joint, [], [])
        np.testing.assert_array_equal(cond.mean, joint.mean)
        np.testing.assert_array_equal(cond.cov, joint.cov)

    def test_independent_blocks_leave_marginal_unchanged(self):
        cov = np.diag([1.0, 2.0, 3.0])
        joint = Mvn(np.array([0.5, -1.0, 2.0]), cov)
        cond = conditional_mvn(joint, [2], [10.0])
        np.testing.assert_allclose(cond.mean, [0.5, -1.0], atol=1e-9)
        np.testing.assert_allclose(cond.cov, np.diag([1.0, 2.0]), atol=1e-9)

    def test_matches_brute_force_3x3(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            joint = self._random_mvn(rng, 3)
            val = rng.standard_normal(1)
            cond = conditional_mvn(joint, [1], val)
            mean_b, cov_b = _brute_conditional(joint.mean, joint.cov, [1], val)
            np.testing.assert_allclose(cond.mean, mean_b, atol=1e-7)
            np.testing.assert_allclose(cond.cov, cov_b, atol=1e-7)

    def test_sequential_equals_joint_conditioning(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            joint = self._random_mvn(rng, 5)
            vals = rng.standard_normal(3)
            both = conditional_mvn(joint, [0, 2, 4], vals)
            first = conditional_mvn(joint, [0], vals[:1])
            # remaining variables of `first` are the original indices 1,2,3,4
            second = conditional_mvn(first, [1, 3], vals[1:])
            np.testing.assert_allclose(both.mean, second.mean, atol=1e-8)
            np.testing.assert_allclose(both.cov, second.cov, atol=1e-8)

    def test_rejects_duplicate_indices(self):
        joint = Mvn(np.zeros(3), np.eye(3))
        with pytest.raises(ValidationError):
            conditional_mvn(joint, [1, 1], [0.0, 0.0])

    def test_conditional_cov_is_psd(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            joint = self._random_mvn(rng, 6)
            cond = conditional_mvn(joint, [0, 3], rng.standard_normal(2))
            cholesky_with_jitter(cond.cov)  # raises if not PSD


class TestMvnLogpdf:
    def test_standard_normal_at_zero(self):
        dist = Mvn([0.0], [[1.0]])
        assert mvn_logpdf([0.0], dist) == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-7)

    def test_at_mean_equals_neg_half_logdet(self):
        rng = np.random.default_rng(7)
        A = rng.standard_normal((3, 3))
        cov = A @ A.T + 3 * np.eye(3)
        dist = Mvn(rng.standard_normal(3), cov)
        expected = -0.5 * np.log(np.linalg.det(2 * np.pi * cov))
        assert mvn_logpdf(dist.mean, dist) == pytest.approx(expected, rel=1e-6)

    def test_2x2_correlated_against_explicit_inverse(self):
        # closed-form oracle: explicit 2x2 inverse and determinant
        cov = np.array([[1.0, 0.5], [0.5, 1.0]])
        x = np.array([1.0, 1.0])
        det = 1.0 - 0.25
        inv = np.array([[1.0, -0.5], [-0.5, 1.0]]) / det
        expected = -np.log(2 * np.pi) - 0.5 * np.log(det) - 0.5 * x @ inv @ x
        assert mvn_logpdf(x, Mvn(np.zeros(2), cov)) == pytest.approx(expected, rel=1e-7)

    def test_integrates_to_one_on_grid(self):
        xs = np.linspace(-9, 9, 4001)
        dist = Mvn([0.3], [[0.8]])
        vals = np.array([np.exp(mvn_logpdf([x], dist)) for x in xs])
        integral = np.trapezoid(vals, xs)
        assert integral == pytest.approx(1.0, abs=1e-4)


class TestMvnSample:
    def test_zero_covariance_returns_mean_exactly(self):
        dist = Mvn([1.5, -2.0], np.zeros((2, 2)))
        out = mvn_sample(dist, np.random.default_rng(0))
        np.testing.assert_array_equal(out, [1.5, -2.0])

    def test_fixed_seed_is_deterministic(self):
        dist = Mvn(np.zeros(3), np.eye(3))
        a = mvn_sample(dist, np.random.default_rng(42))
        b = mvn_sample(dist, np.random.default_rng(42))
        np.testing.assert_array_equal(a, b)

    def test_law_of_large_numbers(self):
        rng = np.random.default_rng(8)
        draws = np.array([mvn_sample(Mvn([0.0], [[1.0]]), rng)[0] for _ in range(10_000)])
        assert abs(draws.mean()) < 0.05
        assert abs(draws.var() - 1.0) < 0.1
