"""Evaluation metrics and the kernel density baseline.

The integral in the point-process log likelihood is discretized on a
tensor-product trapezoid rule over the region; held-out scores average the
per-sample likelihoods in probability space (log-mean-exp) so they are a
Monte Carlo posterior predictive.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct
from scipy.optimize import brentq

from .errors import ValidationError
from .sgcp import Region


@dataclass
class Quadrature:
    """Tensor-product trapezoid nodes and weights over a region."""

    nodes: np.ndarray  # (n, dim)
    weights: np.ndarray  # (n,)

    @classmethod
    def for_region(cls, region: Region, resolution: int | None = None) -> "Quadrature":
        if resolution is None:
            resolution = 512 if region.dim == 1 else 64
        if resolution < 2:
            raise ValidationError("quadrature needs at least 2 points per axis")
        axes, axis_w = [], []
        for lo, hi in zip(region.lower, region.upper):
            x = np.linspace(lo, hi, resolution)
            w = np.full(resolution, (hi - lo) / (resolution - 1))
            w[0] *= 0.5
            w[-1] *= 0.5
            axes.append(x)
            axis_w.append(w)
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.stack([m.ravel() for m in mesh], axis=-1)
        wmesh = np.meshgrid(*axis_w, indexing="ij")
        weights = np.ones(nodes.shape[0])
        for w in wmesh:
            weights *= w.ravel()
        return cls(nodes, weights)

    @property
    def volume(self) -> float:
        return float(self.weights.sum())


def poisson_loglik(intensity_at_events, intensity_on_grid, quad: Quadrature) -> float:
    """Discretized inhomogeneous-Poisson log likelihood.

    A zero (or negative within rounding) intensity at an observed event
    makes the data impossible: returns -inf and warns.
    """
    at_events = np.atleast_1d(np.asarray(intensity_at_events, dtype=float))
    on_grid = np.asarray(intensity_on_grid, dtype=float)
    if on_grid.shape != quad.weights.shape:
        raise ValidationError("grid intensity does not match quadrature")
    if np.any(on_grid < -1e-12) or np.any(at_events < -1e-12):
        raise ValidationError("intensity must be nonnegative")
    integral = float(quad.weights @ on_grid)
    if np.any(at_events <= 0.0):
        warnings.warn("zero intensity at an observed event; log likelihood is -inf")
        return -np.inf
    return -integral + float(np.sum(np.log(at_events)))


def sample_logliks(per_sample_at_events, per_sample_on_grid, quad: Quadrature) -> np.ndarray:
    """Per-posterior-sample Poisson log likelihoods of one event set."""
    out = np.empty(len(per_sample_on_grid))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for i, (ev, gr) in enumerate(zip(per_sample_at_events, per_sample_on_grid)):
            out[i] = poisson_loglik(ev, gr, quad)
    return out


def log_mean_exp(values) -> float:
    values = np.asarray(values, dtype=float)
    m = np.max(values)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.mean(np.exp(values - m))))


def predictive_loglik(per_sample_at_events, per_sample_on_grid, quad: Quadrature) -> float:
    """Log of the posterior-sample average likelihood (max-shifted)."""
    if len(per_sample_on_grid) == 0:
        raise ValidationError("at least one posterior sample required")
    lls = sample_logliks(per_sample_at_events, per_sample_on_grid, quad)
    if np.all(np.isneginf(lls)):
        warnings.warn("all posterior samples give zero likelihood")
        return -np.inf
    return log_mean_exp(lls)


def l2_error(estimated_on_grid, true_on_grid, quad: Quadrature) -> float:
    """Quadrature-weighted L2 distance between two intensities."""
    est = np.asarray(estimated_on_grid, dtype=float)
    tru = np.asarray(true_on_grid, dtype=float)
    if est.shape != tru.shape or est.shape != quad.weights.shape:
        raise ValidationError("intensity grids do not match quadrature")
    return float(np.sqrt(quad.weights @ (est - tru) ** 2))


def _isj_fixed_point(t, n_pts, I, a2):
    # plateau functional of the diffusion bandwidth selector
    ell = 7
    f = 2.0 * np.pi ** (2 * ell) * np.sum(I**ell * a2 * np.exp(-I * np.pi**2 * t))
    if f <= 0:
        return np.nan
    for s in range(ell - 1, 1, -1):
        k0 = np.prod(np.arange(1, 2 * s, 2)) / np.sqrt(2.0 * np.pi)
        const = (1.0 + 0.5 ** (s + 0.5)) / 3.0
        t_s = (2.0 * const * k0 / (n_pts * f)) ** (2.0 / (3.0 + 2.0 * s))
        f = 2.0 * np.pi ** (2 * s) * np.sum(I**s * a2 * np.exp(-I * np.pi**2 * t_s))
        if f <= 0:
            return np.nan
    return t - (2.0 * n_pts * np.sqrt(np.pi) * f) ** (-0.4)


def _silverman(x: np.ndarray) -> float:
    sd = np.std(x, ddof=1)
    iqr = np.subtract(*np.percentile(x, [75, 25])) / 1.34
    spread = min(sd, iqr) if iqr > 0 else sd
    if spread == 0:
        spread = max(abs(x[0]), 1.0) * 1e-3
    return 0.9 * spread * len(x) ** (-0.2)


def diffusion_bandwidth(x, n_grid: int = 2**14) -> float:
    """One-dimensional fixed-point plug-in bandwidth (diffusion rule).

    Falls back to Silverman's rule when the fixed point cannot be
    bracketed (tiny or degenerate samples).
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 2:
        raise ValidationError("bandwidth needs at least 2 points")
    n_unique = np.unique(x).size
    lo, hi = x.min(), x.max()
    span = hi - lo
    if span == 0:
        return _silverman(x)
    lo -= span / 10.0
    hi += span / 10.0
    width = hi - lo
    hist, _ = np.histogram(x, bins=n_grid, range=(lo, hi))
    density = hist / x.size
    a = dct(density, type=2)
    I = np.arange(1, n_grid, dtype=float) ** 2
    a2 = (a[1:] / 2.0) ** 2

    def objective(t):
        return _isj_fixed_point(t, n_unique, I, a2)

    t_star = None
    upper = 1e-4
    for _ in range(40):
        lo_val, hi_val = objective(upper / 100.0), objective(upper)
        if np.isfinite(lo_val) and np.isfinite(hi_val) and lo_val * hi_val < 0:
            t_star = brentq(objective, upper / 100.0, upper)
            break
        upper *= 2.0
        if upper > 1.0:
            break
    if t_star is None or not np.isfinite(t_star) or t_star <= 0:
        return _silverman(x)
    return float(np.sqrt(t_star) * width)


def kde_intensity(
    train_points, region: Region, quad: Quadrature, bandwidths=None
) -> np.ndarray:
    """Gaussian product-kernel intensity estimate on the quadrature grid.

    The density is scaled by the training count so its integral over the
    region approaches the count (minus boundary leakage). Unless given,
    bandwidths come from the 1D diffusion rule applied per axis.
    """
    X = np.asarray(train_points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, dim = X.shape
    if n < 2:
        raise ValidationError("kernel density estimate needs at least 2 events")
    if dim != region.dim:
        raise ValidationError("training points do not match region dimension")
    if bandwidths is None:
        bandwidths = np.array([diffusion_bandwidth(X[:, a]) for a in range(dim)])
    else:
        bandwidths = np.atleast_1d(np.asarray(bandwidths, dtype=float))
    log_dens = np.zeros((quad.nodes.shape[0], n))
    for a in range(dim):
        h = bandwidths[a]
        diff = (quad.nodes[:, a : a + 1] - X[None, :, a]) / h
        log_dens += -0.5 * diff**2 - 0.5 * np.log(2.0 * np.pi) - np.log(h)
    m = log_dens.max(axis=1, keepdims=True)
    dens = np.exp(m).ravel() * np.exp(log_dens - m).sum(axis=1)
    return dens  # sums kernels over events, i.e. count-scaled density
