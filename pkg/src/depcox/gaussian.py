"""Gaussian kernel evaluations and multivariate normal primitives.

Everything downstream (covariance assembly, conditioning, slice and
Hamiltonian updates) funnels through the handful of routines here. All
factorizations are Cholesky-based with a small diagonal jitter; explicit
matrix inverses are never formed outside of test oracles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NumericalError, ValidationError

# Jitter policy: 1e-8 times the mean diagonal, doubled up to 4 times before
# giving up. Gram matrices built from near-duplicate event locations are
# routinely near-singular, so this is load-bearing, not cosmetic.
JITTER_SCALE = 1e-8
MAX_JITTER_DOUBLINGS = 4


def gauss_density(x, z, variance: float) -> float:
    """Isotropic Gaussian density of point ``x`` around centre ``z``.

    Product of per-axis univariate normal densities sharing one variance:
    ``(2*pi*v)**(-d/2) * exp(-|x - z|**2 / (2*v))``.
    """
    if variance <= 0:
        raise ValidationError(f"variance must be positive, got {variance}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if x.shape != z.shape:
        raise ValidationError(f"point dimensions disagree: {x.shape} vs {z.shape}")
    sq = float(np.sum((x - z) ** 2))
    d = x.size
    return float((2.0 * np.pi * variance) ** (-0.5 * d) * np.exp(-0.5 * sq / variance))


def gauss_gram(X, Z, variance: float) -> np.ndarray:
    """Matrix of ``gauss_density`` values between two point sets.

    X is (n, d), Z is (m, d); returns (n, m). One-dimensional inputs are
    treated as columns of scalars.
    """
    if variance <= 0:
        raise ValidationError(f"variance must be positive, got {variance}")
    X = _as_points(X)
    Z = _as_points(Z)
    if X.shape[1] != Z.shape[1]:
        raise ValidationError("point sets have different dimension")
    sq = (X * X).sum(axis=1)[:, None] + (Z * Z).sum(axis=1)[None, :] - 2.0 * (X @ Z.T)
    np.maximum(sq, 0.0, out=sq)
    d = X.shape[1]
    return (2.0 * np.pi * variance) ** (-0.5 * d) * np.exp(-0.5 * sq / variance)


def gauss_gram_dv(X, Z, variance: float) -> tuple[np.ndarray, np.ndarray]:
    """Gram matrix together with its elementwise derivative in the variance."""
    X = _as_points(X)
    Z = _as_points(Z)
    sq = np.sum((X[:, None, :] - Z[None, :, :]) ** 2, axis=-1)
    d = X.shape[1]
    G = (2.0 * np.pi * variance) ** (-0.5 * d) * np.exp(-0.5 * sq / variance)
    dG = G * (0.5 * sq / variance**2 - 0.5 * d / variance)
    return G, dG


def _as_points(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X


def cholesky_with_jitter(cov: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``cov`` plus jitter; returns (L, jitter used)."""
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    sym = 0.5 * (cov + cov.T)
    mean_diag = float(np.trace(sym)) / n
    jitter = JITTER_SCALE * mean_diag if mean_diag > 0 else JITTER_SCALE
    eye = np.eye(n)
    for _ in range(MAX_JITTER_DOUBLINGS + 1):
        try:
            return np.linalg.cholesky(sym + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 2.0
    raise NumericalError(
        f"covariance ({n}x{n}) not positive definite after jitter {jitter / 2:.3g}"
    )


def tri_solve(L: np.ndarray, b: np.ndarray, trans: str = "N") -> np.ndarray:
    """Lower-triangular solve without finiteness validation (hot path)."""
    return solve_triangular(L, b, lower=True, trans=trans, check_finite=False)


def chol_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve (L L^T) x = b with a lower-triangular L."""
    return tri_solve(L, tri_solve(L, b), trans="T")


@dataclass
class Mvn:
    """A multivariate normal given by its mean vector and covariance matrix."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if self.cov.shape != (self.mean.size, self.mean.size):
            raise ValidationError(
                f"mean of size {self.mean.size} does not match covariance {self.cov.shape}"
            )

    @property
    def dim(self) -> int:
        return self.mean.size


def conditional_mvn(joint: Mvn, observed_indices, observed_values) -> Mvn:
    """Condition a joint Gaussian on exact observations at some indices.

    Returns the Gaussian over the remaining indices, in their original
    order. Conditioning on nothing returns the joint unchanged.
    """
    obs = np.asarray(observed_indices, dtype=int)
    if obs.size == 0:
        return Mvn(joint.mean.copy(), joint.cov.copy())
    if len(np.unique(obs)) != obs.size:
        raise ValidationError("observed indices must be distinct")
    if obs.min() < 0 or obs.max() >= joint.dim:
        raise ValidationError("observed index out of range")
    values = np.asarray(observed_values, dtype=float)
    if values.size != obs.size:
        raise ValidationError("observed values do not match indices")

    free = np.setdiff1d(np.arange(joint.dim), obs, assume_unique=False)
    S_oo = joint.cov[np.ix_(obs, obs)]
    S_fo = joint.cov[np.ix_(free, obs)]
    S_ff = joint.cov[np.ix_(free, free)]
    L, _ = cholesky_with_jitter(S_oo)
    u = solve_triangular(L, values - joint.mean[obs], lower=True)
    V = solve_triangular(L, S_fo.T, lower=True)
    mean_c = joint.mean[free] + V.T @ u
    cov_c = S_ff - V.T @ V
    return Mvn(mean_c, 0.5 * (cov_c + cov_c.T))


def mvn_logpdf(x, dist: Mvn) -> float:
    """Exact log density of ``dist`` at ``x`` via Cholesky."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != dist.dim:
        raise ValidationError(f"x of size {x.size} does not match dimension {dist.dim}")
    if dist.dim == 0:
        return 0.0
    L, _ = cholesky_with_jitter(dist.cov)
    w = solve_triangular(L, x - dist.mean, lower=True)
    return float(
        -0.5 * dist.dim * np.log(2.0 * np.pi)
        - np.sum(np.log(np.diag(L)))
        - 0.5 * np.dot(w, w)
    )


def mvn_sample(dist: Mvn, rng: np.random.Generator) -> np.ndarray:
    """One draw from ``dist``. A zero covariance returns the mean exactly."""
    if dist.dim == 0:
        return np.zeros(0)
    if not dist.cov.any():
        return dist.mean.copy()
    L, _ = cholesky_with_jitter(dist.cov)
    return dist.mean + L @ rng.standard_normal(dist.dim)
