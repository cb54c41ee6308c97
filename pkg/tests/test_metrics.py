"""Metric tests: quadrature, likelihoods, L2 and the density baseline."""

import numpy as np
import pytest

from depcox.errors import ValidationError
from depcox.metrics import (
    Quadrature,
    diffusion_bandwidth,
    kde_intensity,
    l2_error,
    log_mean_exp,
    poisson_loglik,
    predictive_loglik,
    sample_logliks,
)
from depcox.sgcp import Region

UNIT = Region([0.0], [1.0])


class TestQuadrature:
    def test_weights_sum_to_volume_1d(self):
        quad = Quadrature.for_region(UNIT, 512)
        assert quad.volume == pytest.approx(1.0, rel=1e-9)

    def test_weights_sum_to_volume_2d(self):
        region = Region([0.0, -1.0], [2.0, 1.0])
        quad = Quadrature.for_region(region, 64)
        assert quad.volume == pytest.approx(4.0, rel=1e-9)

    def test_default_resolutions(self):
        assert Quadrature.for_region(UNIT).nodes.shape[0] == 512
        assert Quadrature.for_region(Region([0, 0], [1, 1])).nodes.shape[0] == 64 * 64


class TestPoissonLoglik:
    def test_constant_intensity_hand_value(self):
        quad = Quadrature.for_region(UNIT, 256)
        ll = poisson_loglik([2.0, 2.0], np.full(quad.nodes.shape[0], 2.0), quad)
        assert ll == pytest.approx(-2.0 + 2.0 * np.log(2.0), abs=1e-9)

    def test_no_events_is_negative_integral(self):
        quad = Quadrature.for_region(UNIT, 128)
        ll = poisson_loglik(np.zeros(0), np.full(quad.nodes.shape[0], 3.0), quad)
        assert ll == pytest.approx(-3.0, abs=1e-9)

    def test_zero_intensity_at_event_flags_minus_inf(self):
        quad = Quadrature.for_region(UNIT, 64)
        with pytest.warns(UserWarning):
            ll = poisson_loglik([0.0], np.ones(quad.nodes.shape[0]), quad)
        assert ll == -np.inf

    def test_invariant_under_event_reordering(self):
        quad = Quadrature.for_region(UNIT, 128)
        grid = 1.0 + quad.nodes[:, 0]
        a = poisson_loglik([1.2, 1.7, 1.05], grid, quad)
        b = poisson_loglik([1.05, 1.2, 1.7], grid, quad)
        assert a == pytest.approx(b, rel=1e-14)

    def test_refinement_changes_little_for_smooth_intensity(self):
        lam = lambda x: 2.0 + np.sin(2 * np.pi * x)
        lls = []
        for res in (256, 512):
            quad = Quadrature.for_region(UNIT, res)
            lls.append(poisson_loglik([lam(0.3)], lam(quad.nodes[:, 0]), quad))
        assert abs(lls[1] - lls[0]) < 1e-3 * abs(lls[0])

    def test_rejects_negative_intensity(self):
        quad = Quadrature.for_region(UNIT, 64)
        with pytest.raises(ValidationError):
            poisson_loglik([1.0], np.full(quad.nodes.shape[0], -0.5), quad)


class TestPredictiveLoglik:
    def _const_sample(self, quad, c):
        return np.array([c]), np.full(quad.nodes.shape[0], c)

    def test_single_sample_equals_poisson_loglik(self):
        quad = Quadrature.for_region(UNIT, 128)
        ev, grid = self._const_sample(quad, 2.0)
        assert predictive_loglik([ev], [grid], quad) == pytest.approx(
            poisson_loglik(ev, grid, quad), rel=1e-12
        )

    def test_identical_samples_equal_common_value(self):
        quad = Quadrature.for_region(UNIT, 128)
        ev, grid = self._const_sample(quad, 1.5)
        got = predictive_loglik([ev, ev, ev], [grid, grid, grid], quad)
        assert got == pytest.approx(poisson_loglik(ev, grid, quad), rel=1e-12)

    def test_log_mean_exp_hand_value(self):
        # likelihoods a and a + ln 3 average to a + ln 2
        quad = Quadrature.for_region(UNIT, 128)
        c1 = 2.0
        c2 = c1 - np.log(3.0)  # no events: loglik = -c
        grids = [np.full(quad.nodes.shape[0], c) for c in (c1, c2)]
        evs = [np.zeros(0), np.zeros(0)]
        got = predictive_loglik(evs, grids, quad)
        assert got == pytest.approx(-c1 + np.log(2.0), abs=1e-9)

    def test_bounded_by_sample_extremes(self):
        rng = np.random.default_rng(0)
        quad = Quadrature.for_region(UNIT, 128)
        evs, grids = [], []
        for _ in range(6):
            c = rng.uniform(0.5, 4.0)
            evs.append(np.array([c, c]))
            grids.append(np.full(quad.nodes.shape[0], c))
        lls = sample_logliks(evs, grids, quad)
        pred = predictive_loglik(evs, grids, quad)
        assert lls.min() <= pred <= lls.max()

    def test_all_impossible_flags_minus_inf(self):
        quad = Quadrature.for_region(UNIT, 64)
        with pytest.warns(UserWarning):
            got = predictive_loglik([np.zeros(1)], [np.ones(quad.nodes.shape[0])], quad)
        assert got == -np.inf


class TestL2Error:
    def test_identical_is_zero(self):
        quad = Quadrature.for_region(UNIT, 256)
        lam = 1.0 + quad.nodes[:, 0] ** 2
        assert l2_error(lam, lam, quad) == 0.0

    def test_unit_offset_on_unit_interval(self):
        quad = Quadrature.for_region(UNIT, 256)
        lam = 1.0 + np.sin(quad.nodes[:, 0])
        assert l2_error(lam + 1.0, lam, quad) == pytest.approx(1.0, rel=1e-9)

    def test_offset_scales_linearly(self):
        quad = Quadrature.for_region(UNIT, 256)
        lam = np.ones(quad.nodes.shape[0])
        assert l2_error(lam + 2.0, lam, quad) == pytest.approx(2.0, rel=1e-9)

    def test_shape_mismatch_raises(self):
        quad = Quadrature.for_region(UNIT, 64)
        with pytest.raises(ValidationError):
            l2_error(np.ones(10), np.ones(10), quad)


class TestKdeIntensity:
    def _clustered(self, rng, n=400):
        x = 0.5 + 0.07 * rng.standard_normal(n)
        return x[(x > 0.02) & (x < 0.98)][:, None]

    def test_integral_close_to_count(self):
        rng = np.random.default_rng(1)
        X = self._clustered(rng)
        quad = Quadrature.for_region(UNIT, 512)
        lam = kde_intensity(X, UNIT, quad)
        assert quad.weights @ lam == pytest.approx(len(X), rel=0.02)

    def test_mode_at_cluster_center(self):
        rng = np.random.default_rng(2)
        X = (0.37 + 0.01 * rng.standard_normal(200))[:, None]
        quad = Quadrature.for_region(UNIT, 512)
        lam = kde_intensity(X, UNIT, quad)
        cell = 1.0 / 511
        assert abs(quad.nodes[np.argmax(lam), 0] - X.mean()) <= cell

    def test_duplicated_events_double_output_at_fixed_bandwidth(self):
        rng = np.random.default_rng(3)
        X = self._clustered(rng, n=100)
        quad = Quadrature.for_region(UNIT, 256)
        lam1 = kde_intensity(X, UNIT, quad, bandwidths=[0.05])
        lam2 = kde_intensity(np.vstack([X, X]), UNIT, quad, bandwidths=[0.05])
        np.testing.assert_allclose(lam2, 2.0 * lam1, rtol=1e-10)

    def test_needs_two_events(self):
        quad = Quadrature.for_region(UNIT, 64)
        with pytest.raises(ValidationError):
            kde_intensity(np.array([[0.5]]), UNIT, quad)

    def test_2d_integral_close_to_count(self):
        rng = np.random.default_rng(4)
        pts = 0.5 + 0.08 * rng.standard_normal((300, 2))
        pts = pts[np.all((pts > 0.05) & (pts < 0.95), axis=1)]
        region = Region([0.0, 0.0], [1.0, 1.0])
        quad = Quadrature.for_region(region, 64)
        lam = kde_intensity(pts, region, quad)
        assert quad.weights @ lam == pytest.approx(len(pts), rel=0.02)


class TestDiffusionBandwidth:
    def test_reasonable_for_gaussian_sample(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal(1000)
        h = diffusion_bandwidth(x)
        # the asymptotically optimal bandwidth for a unit normal is
        # (4/3)^0.2 * n^-0.2 ~ 0.266 at n = 1000
        assert 0.1 < h < 0.5

    def test_bimodal_bandwidth_smaller_than_silverman(self):
        rng = np.random.default_rng(6)
        x = np.concatenate([rng.normal(-2, 0.2, 500), rng.normal(2, 0.2, 500)])
        h = diffusion_bandwidth(x)
        silverman = 0.9 * min(x.std(ddof=1), np.subtract(*np.percentile(x, [75, 25])) / 1.34) * len(x) ** -0.2
        assert h < silverman

    def test_log_mean_exp_matches_direct(self):
        vals = np.array([-1000.0, -1000.0 + np.log(3.0)])
        assert log_mean_exp(vals) == pytest.approx(-1000.0 + np.log(2.0), abs=1e-9)
