"""Single-process Cox MCMC kernels.

The augmented state of one observed process holds the thinned points, the
level index of each thinned point, the function values at all observed and
thinned locations, the intensity bound and the process's kernel
hyperparameters. Five transition kernels act on it: birth/death of thinned
points, relocation moves, an elliptical slice update of the function
values, a Hamiltonian update of the hyperparameters, and a conjugate Gamma
resample of the bound. Each kernel leaves the augmented posterior
invariant on its own, so they can be composed in any order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import NumericalError, ValidationError
from .gaussian import Mvn, cholesky_with_jitter, mvn_sample, tri_solve
from .thinning import (
    RateLadder,
    accept_delete,
    accept_insert,
    accept_move,
    assign_rate,
    estimate_total,
)


@dataclass
class Region:
    """Axis-aligned bounded observation window."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if self.lower.shape != self.upper.shape:
            raise ValidationError("lower and upper bounds must have the same length")
        if np.any(self.upper <= self.lower):
            raise ValidationError("upper bounds must strictly dominate lower bounds")

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    @property
    def axis_lengths(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return np.all((X >= self.lower) & (X <= self.upper), axis=1)

    def contains_point(self, x) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))


@dataclass
class EventSet:
    """Observed event locations for one process."""

    points: np.ndarray
    process_id: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, pts.shape[1] if pts.ndim == 2 else 1)
        elif pts.ndim == 1:
            pts = pts[:, None]
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class PriorConfig:
    """Gamma prior on the intensity bound, log-normal priors on hyperparameters."""

    lambda_alpha: float = 1.0
    lambda_beta: float = 0.1
    kappa_log_mean: float = 0.0
    kappa_log_sd: float = 1.0
    theta_log_mean: float = 0.0
    theta_log_sd: float = 1.0
    phi_log_mean: float = 0.0
    phi_log_sd: float = 1.0

    def __post_init__(self):
        for name in ("lambda_alpha", "lambda_beta", "kappa_log_sd", "theta_log_sd", "phi_log_sd"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")


@dataclass
class AugmentedState:
    """Per-process MCMC state.

    ``g_values`` stores function values at the observed points first, then
    at the thinned points in the same order as ``thinned``.
    """

    thinned: np.ndarray  # (M, dim)
    rate_idx: np.ndarray  # (M,) int level indices
    g_values: np.ndarray  # (K + M,)
    lambda_star: float
    kappa: float
    theta: float
    data_rate_idx: np.ndarray  # (K,) int notional levels of the observed points

    def __post_init__(self):
        self.thinned = np.asarray(self.thinned, dtype=float)
        if self.thinned.size == 0:
            dim = self.thinned.shape[1] if self.thinned.ndim == 2 else 1
            self.thinned = self.thinned.reshape(0, dim)
        elif self.thinned.ndim == 1:
            self.thinned = self.thinned[:, None]
        self.rate_idx = np.asarray(self.rate_idx, dtype=int)
        self.g_values = np.asarray(self.g_values, dtype=float)
        self.data_rate_idx = np.asarray(self.data_rate_idx, dtype=int)

    @property
    def n_thinned(self) -> int:
        return self.thinned.shape[0]

    @property
    def n_data(self) -> int:
        return self.g_values.size - self.n_thinned

    @property
    def g_data(self) -> np.ndarray:
        return self.g_values[: self.n_data]

    @property
    def g_thinned(self) -> np.ndarray:
        return self.g_values[self.n_data :]

    def copy(self) -> "AugmentedState":
        return AugmentedState(
            self.thinned.copy(),
            self.rate_idx.copy(),
            self.g_values.copy(),
            self.lambda_star,
            self.kappa,
            self.theta,
            self.data_rate_idx.copy(),
        )

    def validate(self, ladder: RateLadder) -> None:
        if self.rate_idx.size != self.n_thinned:
            raise ValidationError("one rate index per thinned point required")
        if self.n_data < 0 or self.data_rate_idx.size != self.n_data:
            raise ValidationError("g_values inconsistent with thinned/data counts")
        if self.lambda_star <= 0 or self.kappa <= 0 or self.theta <= 0:
            raise ValidationError("lambda_star, kappa and theta must be positive")
        if self.n_thinned:
            levels = ladder.as_array()[self.rate_idx]
            if np.any(expit(self.g_thinned) > levels):
                raise ValidationError("a thinned point's sigmoid exceeds its level")

    def append_thinned(self, x, g_value: float, rate: int) -> None:
        self.thinned = np.vstack([self.thinned, np.atleast_1d(x)[None, :]])
        self.rate_idx = np.append(self.rate_idx, rate)
        self.g_values = np.append(self.g_values, g_value)

    def remove_thinned(self, i: int) -> None:
        j = self.n_data + i
        self.thinned = np.delete(self.thinned, i, axis=0)
        self.rate_idx = np.delete(self.rate_idx, i)
        self.g_values = np.delete(self.g_values, j)


@dataclass
class GpContext:
    """What a process's kernels need from the outside: its observed
    locations and the (conditional) prior over its function values."""

    data: np.ndarray
    prior: object = field(repr=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.size == 0:
            data = data.reshape(0, data.shape[1] if data.ndim == 2 else 1)
        elif data.ndim == 1:
            data = data[:, None]
        self.data = data

    def points(self, state: AugmentedState) -> np.ndarray:
        if state.n_thinned == 0:
            return self.data.copy()
        if self.data.shape[0] == 0:
            return state.thinned.copy()
        return np.vstack([self.data, state.thinned])


def point_loglik(g_values, n_data: int, rate_idx, ladder: RateLadder) -> float:
    """Log likelihood of the point pattern in the function values.

    Observed points contribute log sigmoid terms; thinned points contribute
    the log probability of being thinned at their assigned level, which
    acts as a barrier keeping each sigmoid below its level.
    """
    g = np.asarray(g_values, dtype=float)
    gd = g[:n_data]
    gt = g[n_data:]
    ll = -float(np.sum(np.logaddexp(0.0, -gd)))
    if gt.size:
        levels = ladder.as_array()[np.asarray(rate_idx, dtype=int)]
        sig = expit(gt)
        # level 1 margins computed as sigmoid(-g) to stay exact for large g
        margins = np.where(levels == 1.0, expit(-gt), levels - sig)
        if np.any(margins <= 0.0):
            return -np.inf
        ll += float(np.sum(np.log(margins) - np.log(levels)))
    return ll


class _Workspace:
    """Dense conditional prior over the current point set with a cached
    Cholesky factor; supports cheap appends and drop-one conditionals."""

    def __init__(self, ctx: GpContext, state: AugmentedState):
        self.prior = ctx.prior
        self.kappa = state.kappa
        self.theta = state.theta
        self.pts = ctx.points(state)
        self.m, self.C = self.prior.mean_cov(self.pts, self.kappa, self.theta)
        self.g = state.g_values.copy()
        self.degenerate = self.C.size == 0 or not self.C.any()
        self._L = None
        self._v = None
        self._jitter = 0.0

    def _factor(self):
        if self._L is None:
            self._L, self._jitter = cholesky_with_jitter(self.C)
            self._v = tri_solve(self._L, self.g - self.m)
        return self._L, self._v

    def _star(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))[None, :]
        m1, C1 = self.prior.mean_cov(x, self.kappa, self.theta)
        return x, float(m1[0]), float(C1[0, 0])

    def conditional(self, x, exclude: int | None = None) -> tuple[float, float]:
        """Mean and variance of the function at ``x`` given the current
        values, optionally leaving one point out."""
        x, mstar, cstar = self._star(x)
        n = self.pts.shape[0]
        if self.degenerate or n == 0 or (exclude is not None and n == 1):
            return mstar, max(cstar, 0.0)
        ks = self.prior.cov(x, self.pts, self.kappa, self.theta).ravel()
        if exclude is None:
            L, v = self._factor()
            w = tri_solve(L, ks)
            mu = mstar + float(w @ v)
        else:
            keep = np.arange(n) != exclude
            Ls, _ = cholesky_with_jitter(self.C[np.ix_(keep, keep)])
            w = tri_solve(Ls, ks[keep])
            vs = tri_solve(Ls, (self.g - self.m)[keep])
            mu = mstar + float(w @ vs)
        return mu, max(cstar - float(w @ w), 0.0)

    def append(self, x, g_value: float) -> None:
        x, mstar, cstar = self._star(x)
        n = self.pts.shape[0]
        if n == 0:
            self.pts = x
            self.m = np.array([mstar])
            self.C = np.array([[cstar]])
            self.g = np.array([g_value])
            self._L = None
            return
        ks = self.prior.cov(x, self.pts, self.kappa, self.theta).ravel()
        self.pts = np.vstack([self.pts, x])
        self.m = np.append(self.m, mstar)
        self.g = np.append(self.g, g_value)
        C_new = np.empty((n + 1, n + 1))
        C_new[:n, :n] = self.C
        C_new[n, :n] = ks
        C_new[:n, n] = ks
        C_new[n, n] = cstar
        self.C = C_new
        if self.degenerate:
            return
        if self._L is not None:
            w = tri_solve(self._L, ks)
            d2 = cstar + self._jitter - float(w @ w)
            if d2 > 1e-12 * max(cstar, 1e-12):
                L_new = np.zeros((n + 1, n + 1))
                L_new[:n, :n] = self._L
                L_new[n, :n] = w
                L_new[n, n] = np.sqrt(d2)
                self._L = L_new
                self._v = np.append(
                    self._v, (g_value - mstar - float(w @ self._v)) / L_new[n, n]
                )
                return
        self._L = None

    def remove(self, i: int) -> None:
        self.pts = np.delete(self.pts, i, axis=0)
        self.m = np.delete(self.m, i)
        self.g = np.delete(self.g, i)
        self.C = np.delete(np.delete(self.C, i, axis=0), i, axis=1)
        self._L = None

    def update_point(self, i: int, x, g_value: float) -> None:
        x, mstar, _ = self._star(x)
        self.pts[i] = x[0]
        self.m[i] = mstar
        self.g[i] = g_value
        row = self.prior.cov(x, self.pts, self.kappa, self.theta).ravel()
        self.C[i, :] = row
        self.C[:, i] = row
        self._L = None

    def prior_dist(self) -> Mvn:
        return Mvn(self.m.copy(), self.C.copy())


def birth_death_step(
    state: AugmentedState,
    region: Region,
    ladder: RateLadder,
    ctx: GpContext,
    rng: np.random.Generator,
    b: float = 0.5,
    attempts: int | None = None,
) -> AugmentedState:
    """Metropolis-Hastings on the thinned-point count.

    Each attempt proposes an insertion with probability ``b`` (uniform
    location, function value from the conditional prior, level assigned by
    the slack rule) or otherwise the deletion of a uniformly chosen thinned
    point. The attempt count must not depend on the thinned state itself
    (a state-dependent repetition count biases the stationary law), so the
    default is one attempt per observed event plus one.
    """
    state = state.copy()
    ws = _Workspace(ctx, state)
    if attempts is None:
        attempts = ctx.data.shape[0] + 1
    levels = ladder.as_array()
    vol = region.volume
    for _ in range(attempts):
        M = state.n_thinned
        if rng.random() < b:
            x = region.uniform(1, rng)[0]
            mu, var = ws.conditional(x)
            g_star = mu + np.sqrt(var) * rng.standard_normal()
            sig = float(expit(g_star))
            r = assign_rate(sig, ladder)
            a = accept_insert(M, vol, state.lambda_star, levels[r], sig, b)
            if rng.random() < a:
                state.append_thinned(x, g_star, r)
                ws.append(x, g_star)
        else:
            if M == 0:
                continue
            i = int(rng.integers(M))
            sig = float(expit(state.g_thinned[i]))
            a = accept_delete(M, vol, state.lambda_star, levels[state.rate_idx[i]], sig, b)
            if rng.random() < a:
                ws.remove(state.n_data + i)
                state.remove_thinned(i)
    return state


def move_step(
    state: AugmentedState,
    region: Region,
    ladder: RateLadder,
    ctx: GpContext,
    rng: np.random.Generator,
    scale: np.ndarray | None = None,
) -> AugmentedState:
    """Gaussian relocation proposals for every thinned point.

    The function value at the proposed site is drawn conditioned on the
    state with the moving point's value left out; proposals landing outside
    the region are rejected outright. Accepted points get a freshly
    assigned level.
    """
    state = state.copy()
    M = state.n_thinned
    if M == 0:
        return state
    if scale is None:
        scale = region.axis_lengths / 10.0
    ws = _Workspace(ctx, state)
    levels = ladder.as_array()
    for i in range(M):
        x_new = state.thinned[i] + scale * rng.standard_normal(region.dim)
        if not region.contains_point(x_new):
            continue
        j = state.n_data + i
        mu, var = ws.conditional(x_new, exclude=j)
        g_new = mu + np.sqrt(var) * rng.standard_normal()
        sig_new = float(expit(g_new))
        r_new = assign_rate(sig_new, ladder)
        sig_old = float(expit(state.g_values[j]))
        a = accept_move(levels[state.rate_idx[i]], sig_old, levels[r_new], sig_new)
        if rng.random() < a:
            state.thinned[i] = x_new
            state.g_values[j] = g_new
            state.rate_idx[i] = r_new
            ws.update_point(j, x_new, g_new)
    return state


def elliptical_slice(
    current: np.ndarray,
    prior_dist: Mvn,
    loglik,
    rng: np.random.Generator,
    max_shrink: int = 256,
) -> np.ndarray:
    """One elliptical slice transition for a Gaussian-prior vector.

    The prior may have a nonzero mean; the ellipse is drawn in centered
    coordinates. Terminates by bracket shrinkage toward the current state.
    """
    ll_cur = loglik(current)
    if not np.isfinite(ll_cur):
        raise ValidationError("current state has zero likelihood; invariants violated")
    nu = mvn_sample(Mvn(np.zeros(current.size), prior_dist.cov), rng)
    log_y = ll_cur + np.log(rng.random())
    angle = rng.uniform(0.0, 2.0 * np.pi)
    lo, hi = angle - 2.0 * np.pi, angle
    centered = current - prior_dist.mean
    for _ in range(max_shrink):
        proposal = prior_dist.mean + centered * np.cos(angle) + nu * np.sin(angle)
        if loglik(proposal) > log_y:
            return proposal
        if angle < 0.0:
            lo = angle
        else:
            hi = angle
        angle = rng.uniform(lo, hi)
    raise NumericalError("elliptical slice bracket failed to shrink")


def ess_function_update(
    state: AugmentedState,
    prior_dist: Mvn,
    ladder: RateLadder,
    rng: np.random.Generator,
) -> AugmentedState:
    """One elliptical slice transition of the function values."""
    if state.g_values.size == 0:
        return state.copy()
    n_data = state.n_data
    rate_idx = state.rate_idx

    def loglik(g):
        return point_loglik(g, n_data, rate_idx, ladder)

    new = state.copy()
    new.g_values = elliptical_slice(state.g_values, prior_dist, loglik, rng)
    return new


def _hyper_energy(prior, pts, g, rho, priors: PriorConfig):
    """Negative log posterior over (log kappa, log theta) and its gradient."""
    if not np.all(np.isfinite(rho)) or np.any(np.abs(rho) > 30.0):
        raise NumericalError("hyperparameter position out of range")
    kappa, theta = float(np.exp(rho[0])), float(np.exp(rho[1]))
    mu0 = np.array([priors.kappa_log_mean, priors.theta_log_mean])
    sd0 = np.array([priors.kappa_log_sd, priors.theta_log_sd])
    z = (rho - mu0) / sd0
    nlp = 0.5 * float(z @ z)
    grad = z / sd0
    n = g.size
    if n == 0:
        return nlp, grad
    m, C, dm, dC = prior.mean_cov_grads(pts, kappa, theta)
    L, _ = cholesky_with_jitter(C)
    r = g - m
    w = tri_solve(L, r)
    alpha = tri_solve(L, w, trans="T")
    nlp += 0.5 * float(w @ w) + float(np.sum(np.log(np.diag(L)))) + 0.5 * n * np.log(2.0 * np.pi)
    for i in range(2):
        half = tri_solve(L, dC[i])
        Cinv_dC = tri_solve(L, half, trans="T")
        dloglik = (
            float(alpha @ dm[i])
            + 0.5 * float(alpha @ dC[i] @ alpha)
            - 0.5 * float(np.trace(Cinv_dC))
        )
        grad[i] -= dloglik
    return nlp, grad


def leapfrog(energy_and_grad, q0: np.ndarray, p0: np.ndarray, step_size: float, n_steps: int):
    """Standard leapfrog integration of Hamiltonian dynamics.

    Returns ``(q, p, energy, ok)``; ``ok`` is False if the potential or its
    gradient became non-finite along the trajectory.
    """
    try:
        u, grad = energy_and_grad(q0)
    except (NumericalError, FloatingPointError, OverflowError):
        return q0, p0, np.inf, False
    q = q0.copy()
    p = p0 - 0.5 * step_size * grad
    for step in range(n_steps):
        q = q + step_size * p
        try:
            u, grad = energy_and_grad(q)
        except (NumericalError, FloatingPointError, OverflowError):
            return q, p, np.inf, False
        if not (np.all(np.isfinite(grad)) and np.isfinite(u)):
            return q, p, np.inf, False
        p = p - (0.5 if step == n_steps - 1 else 1.0) * step_size * grad
    return q, p, u, True


def hmc_hyper_update(
    state: AugmentedState,
    ctx: GpContext,
    priors: PriorConfig,
    rng: np.random.Generator,
    step_size: float = 0.1,
    n_steps: int = 10,
) -> tuple[AugmentedState, bool, float]:
    """One Hamiltonian transition over (log kappa, log theta).

    Targets the Gaussian likelihood of the current function values under
    the conditional prior plus the log-normal hyperparameter priors; the
    function values themselves are left untouched. Non-finite energies or
    gradients reject the transition. Returns the new state, whether the
    proposal was accepted, and the acceptance probability (used by step
    size adaptation).
    """
    pts = ctx.points(state)
    g = state.g_values
    rho = np.log(np.array([state.kappa, state.theta]))

    def energy_and_grad(r):
        return _hyper_energy(ctx.prior, pts, g, r, priors)

    try:
        u0, _ = energy_and_grad(rho)
    except NumericalError:
        return state.copy(), False, 0.0
    p0 = rng.standard_normal(2)
    h0 = u0 + 0.5 * float(p0 @ p0)
    rho_new, p_new, u_new, ok = leapfrog(energy_and_grad, rho, p0, step_size, n_steps)
    new = state.copy()
    if not ok:
        return new, False, 0.0
    h_new = u_new + 0.5 * float(p_new @ p_new)
    accept_prob = float(min(1.0, np.exp(min(h0 - h_new, 0.0))))
    if np.log(rng.random()) < h0 - h_new:
        if not np.array_equal(rho_new, rho):  # avoid log/exp round-trip drift
            new.kappa, new.theta = float(np.exp(rho_new[0])), float(np.exp(rho_new[1]))
        return new, True, accept_prob
    return new, False, accept_prob


def lambda_posterior(
    state: AugmentedState, region: Region, priors: PriorConfig, ladder: RateLadder
) -> tuple[float, float, np.ndarray]:
    """Gamma shape and rate of the bound's conditional posterior.

    The shape uses the level-weighted point total, with the observed
    points' notional levels refreshed from their current sigmoids; with a
    one-level ladder the total is exactly K + M. Returns the refreshed
    data levels as well.
    """
    data_levels = np.asarray(assign_rate(expit(state.g_data), ladder), dtype=int).reshape(-1)
    total = estimate_total(data_levels, state.rate_idx, ladder)
    return priors.lambda_alpha + total, priors.lambda_beta + region.volume, data_levels


def gibbs_lambda_star(
    state: AugmentedState,
    region: Region,
    priors: PriorConfig,
    ladder: RateLadder,
    rng: np.random.Generator,
) -> AugmentedState:
    """Conjugate Gamma resample of the intensity bound."""
    state = state.copy()
    shape, rate, data_levels = lambda_posterior(state, region, priors, ladder)
    state.data_rate_idx = data_levels
    state.lambda_star = float(rng.gamma(shape, 1.0 / rate))
    return state
