"""Full MCMC orchestration over all observed processes.

Each iteration runs the five per-process kernels (optionally in parallel,
one worker per process with its own keyed random stream), then at a
barrier draws the latent grid values from their joint posterior and
updates the latent variances. Results are merged in process order, so a
fixed seed gives identical output regardless of worker count.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .convolution import (
    ConvolutionPrior,
    CouplingParams,
    IndependentPrior,
    LatentState,
    latent_grid,
    phi_mh_update,
    sample_latent_posterior,
)
from .errors import NumericalError, ValidationError
from .gaussian import Mvn, cholesky_with_jitter, mvn_sample
from .sgcp import (
    AugmentedState,
    EventSet,
    GpContext,
    PriorConfig,
    Region,
    assign_rate,
    birth_death_step,
    ess_function_update,
    gibbs_lambda_star,
    hmc_hyper_update,
    move_step,
)
from .thinning import RateLadder


@dataclass
class RunConfig:
    """Everything a chain run needs besides the data and the region."""

    n_iters: int = 1000
    burn_in: int = 0
    thin_every: int = 1
    seed: int = 0
    parallel_workers: int = 1
    ladder: RateLadder = field(default_factory=RateLadder)
    n_latent: int = 1
    grid_per_axis: int = 20
    grid_pad: float = 0.1
    priors: PriorConfig = field(default_factory=PriorConfig)
    insert_prob: float = 0.5
    hmc_steps: int = 10
    hmc_step_size: float = 0.1
    phi_step_size: float = 0.1
    adapt: bool = True
    independent: bool = False

    def __post_init__(self):
        if self.n_iters < 1 or not 0 <= self.burn_in < self.n_iters:
            raise ValidationError("need 0 <= burn_in < n_iters")
        if self.thin_every < 1:
            raise ValidationError("thin_every must be at least 1")
        if self.parallel_workers < 1:
            raise ValidationError("parallel_workers must be at least 1")
        if self.n_latent < 1 or self.grid_per_axis < 2:
            raise ValidationError("need at least one latent function and two grid points")
        if not 0.0 < self.insert_prob < 1.0:
            raise ValidationError("insert_prob must lie in (0, 1)")


@dataclass
class PosteriorSample:
    """One retained draw of the full augmented state."""

    iteration: int
    thinned: list
    rate_idx: list
    g_values: list
    lambda_stars: np.ndarray
    kappas: np.ndarray
    thetas: np.ndarray
    latent_values: np.ndarray  # (Q, J); empty for independent runs
    phis: np.ndarray


@dataclass
class RunInfo:
    """Bookkeeping from a chain run that is not part of the posterior."""

    timings: dict
    iterations_per_second: float
    hmc_accept_rate: np.ndarray
    phi_accept_rate: float
    inducing_grid: np.ndarray


def run_chain(data, region: Region, config: RunConfig):
    """Run the full sampler; returns the retained posterior samples."""
    samples, _ = run_chain_with_info(data, region, config)
    return samples


def _latent_ess_move(states, x_list, latent: LatentState, params, ladder, rng):
    """Joint slice move of the latent values and all function values.

    Holds each process's residual (function values minus the smoothed
    latent) fixed while the latent grid values slide along an ellipse of
    their own prior; the point likelihood is evaluated through the implied
    function values. This is the non-centered counterpart of the exact
    latent resample: when the inducing grid resolves the kernels well the
    residuals are tiny and the centered alternation alone would move the
    latent only by hairline steps per sweep.
    """
    from .gaussian import gauss_gram
    from .sgcp import elliptical_slice, point_loglik

    prior = ConvolutionPrior(latent)
    A_list = [
        prior.coupling_matrix(x_list[d], params.kappas[d], params.thetas[d])
        if x_list[d].shape[0]
        else np.zeros((0, latent.n_latent * latent.n_grid))
        for d in range(len(states))
    ]
    u_flat = latent.values.ravel()
    residuals = [states[d].g_values - A_list[d] @ u_flat for d in range(len(states))]
    J = latent.n_grid
    cov = np.zeros((latent.n_latent * J, latent.n_latent * J))
    for q in range(latent.n_latent):
        sl = slice(q * J, (q + 1) * J)
        cov[sl, sl] = gauss_gram(latent.grid, latent.grid, latent.phis[q])
    prior_dist = Mvn(np.zeros(u_flat.size), cov)

    def loglik(u):
        total = 0.0
        for d, state in enumerate(states):
            g = A_list[d] @ u + residuals[d]
            total += point_loglik(g, state.n_data, state.rate_idx, ladder)
            if not np.isfinite(total):
                return -np.inf
        return total

    u_new = elliptical_slice(u_flat, prior_dist, loglik, rng)
    latent.values = u_new.reshape(latent.n_latent, J)
    for d, state in enumerate(states):
        state.g_values = A_list[d] @ u_new + residuals[d]


def run_chain_with_info(data, region: Region, config: RunConfig):
    data = [d if isinstance(d, EventSet) else EventSet(d) for d in data]
    n_proc = len(data)
    if n_proc == 0:
        raise ValidationError("at least one event set required")
    for d, ev in enumerate(data):
        if len(ev) and not np.all(region.contains(ev.points)):
            raise ValidationError(f"events of process {d} fall outside the region")

    priors = config.priors
    ladder = config.ladder
    streams = [
        np.random.default_rng(s)
        for s in np.random.SeedSequence(config.seed).spawn(n_proc + 1)
    ]
    latent_rng = streams[n_proc]

    grid = latent_grid(region, config.grid_per_axis, config.grid_pad)
    if config.independent:
        latent = None
        prior = IndependentPrior(np.exp(priors.phi_log_mean), region.dim)
    else:
        phis = np.full(config.n_latent, np.exp(priors.phi_log_mean))
        values = np.zeros((config.n_latent, grid.shape[0]))
        latent = LatentState(grid, values, phis)
        prior = ConvolutionPrior(latent)
        for q in range(config.n_latent):
            L = prior._Ls[q]
            latent.values[q] = L @ latent_rng.standard_normal(grid.shape[0])
        prior = ConvolutionPrior(latent)

    states = []
    contexts = []
    for d, ev in enumerate(data):
        ctx = GpContext(ev.points, prior)
        kappa = float(np.exp(priors.kappa_log_mean))
        theta = float(np.exp(priors.theta_log_mean))
        m, C = prior.mean_cov(ctx.data, kappa, theta)
        g0 = mvn_sample(Mvn(m, C), streams[d])
        lam0 = (priors.lambda_alpha + len(ev)) / (priors.lambda_beta + region.volume)
        state = AugmentedState(
            thinned=np.zeros((0, region.dim)),
            rate_idx=np.zeros(0, dtype=int),
            g_values=g0,
            lambda_star=lam0,
            kappa=kappa,
            theta=theta,
            data_rate_idx=np.asarray(assign_rate(expit(g0), ladder), dtype=int).reshape(-1),
        )
        states.append(state)
        contexts.append(ctx)

    hmc_step = np.full(n_proc, config.hmc_step_size)
    phi_step = config.phi_step_size
    hmc_accepts = np.zeros(n_proc)
    hmc_tries = 0
    phi_accepts = 0.0
    phi_tries = 0
    # freeze adapted steps at their average over the late burn-in rather
    # than at the (noisy) last value
    avg_from = config.burn_in // 2
    log_step_sum = np.zeros(n_proc)
    log_phi_sum = 0.0
    avg_count = 0

    current_iter = 0

    def sweep_one(d):
        try:
            state = states[d]
            rng = streams[d]
            ctx = contexts[d]
            state = birth_death_step(state, region, ladder, ctx, rng, b=config.insert_prob)
            state = move_step(state, region, ladder, ctx, rng)
            m, C = ctx.prior.mean_cov(ctx.points(state), state.kappa, state.theta)
            state = ess_function_update(state, Mvn(m, C), ladder, rng)
            state, accepted, accept_prob = hmc_hyper_update(
                state, ctx, priors, rng, float(hmc_step[d]), config.hmc_steps
            )
            state = gibbs_lambda_star(state, region, priors, ladder, rng)
            state.validate(ladder)
            return state, accepted, accept_prob
        except (ValidationError, NumericalError) as exc:
            raise type(exc)(f"iteration {current_iter}, process {d}: {exc}") from exc

    samples = []
    timings = {"process_updates": 0.0, "latent_updates": 0.0}
    pool = (
        ThreadPoolExecutor(max_workers=config.parallel_workers)
        if config.parallel_workers > 1
        else None
    )
    t_start = time.perf_counter()
    try:
        for it in range(config.n_iters):
            current_iter = it
            t0 = time.perf_counter()
            if pool is not None:
                results = list(pool.map(sweep_one, range(n_proc)))
            else:
                results = [sweep_one(d) for d in range(n_proc)]
            in_burn = it < config.burn_in
            for d, (state, accepted, _) in enumerate(results):
                states[d] = state
                if not in_burn:  # acceptance reported for the post-adaptation phase
                    hmc_accepts[d] += accepted
            hmc_tries += 0 if in_burn else 1
            if config.adapt and in_burn:
                for d, (_, _, accept_prob) in enumerate(results):
                    hmc_step[d] *= np.exp(0.05 * (accept_prob - 0.65))
                if it >= avg_from:
                    log_step_sum += np.log(hmc_step)
                    avg_count += 1
            t1 = time.perf_counter()
            timings["process_updates"] += t1 - t0

            if latent is not None:
                params = CouplingParams(
                    np.array([s.kappa for s in states]),
                    np.array([s.theta for s in states]),
                )
                x_list = [contexts[d].points(states[d]) for d in range(n_proc)]
                _latent_ess_move(states, x_list, latent, params, ladder, latent_rng)
                g_list = [s.g_values for s in states]
                new_values = sample_latent_posterior(
                    g_list, x_list, latent, params, latent_rng
                )
                latent = LatentState(grid, new_values, latent.phis)
                latent, acc = phi_mh_update(
                    latent,
                    latent_rng,
                    step=phi_step,
                    log_mean=priors.phi_log_mean,
                    log_sd=priors.phi_log_sd,
                )
                if not in_burn:
                    phi_accepts += float(np.mean(acc))
                    phi_tries += 1
                if config.adapt and in_burn:
                    phi_step *= float(np.exp(0.05 * (np.mean(acc) - 0.3)))
                    if it >= avg_from:
                        log_phi_sum += np.log(phi_step)
                prior = ConvolutionPrior(latent)
                for ctx in contexts:
                    ctx.prior = prior
            timings["latent_updates"] += time.perf_counter() - t1

            if config.adapt and it == config.burn_in - 1 and avg_count > 0:
                hmc_step = np.exp(log_step_sum / avg_count)
                phi_step = float(np.exp(log_phi_sum / avg_count)) if latent is not None else phi_step

            if it >= config.burn_in and (it - config.burn_in) % config.thin_every == 0:
                samples.append(
                    PosteriorSample(
                        iteration=it,
                        thinned=[s.thinned.copy() for s in states],
                        rate_idx=[s.rate_idx.copy() for s in states],
                        g_values=[s.g_values.copy() for s in states],
                        lambda_stars=np.array([s.lambda_star for s in states]),
                        kappas=np.array([s.kappa for s in states]),
                        thetas=np.array([s.theta for s in states]),
                        latent_values=(
                            latent.values.copy() if latent is not None else np.zeros((0, 0))
                        ),
                        phis=(latent.phis.copy() if latent is not None else np.zeros(0)),
                    )
                )
    finally:
        if pool is not None:
            pool.shutdown()
    elapsed = time.perf_counter() - t_start
    info = RunInfo(
        timings=timings,
        iterations_per_second=config.n_iters / elapsed if elapsed > 0 else float("inf"),
        hmc_accept_rate=hmc_accepts / max(hmc_tries, 1),
        phi_accept_rate=phi_accepts / max(phi_tries, 1),
        inducing_grid=grid,
    )
    return samples, info


@dataclass
class GridSummary:
    grid: np.ndarray
    intensity_mean: np.ndarray  # (D, n_grid)
    intensity_sd: np.ndarray
    latent_mean: np.ndarray  # (Q, n_grid)
    latent_sd: np.ndarray


def _conditional_g_on_grid(prior, grid, pts, g, kappa, theta):
    """Posterior-mean extension of one sample's function values to a grid."""
    m_grid = prior.mean(grid, kappa, theta)
    if pts.shape[0] == 0:
        return m_grid
    m_pts, C = prior.mean_cov(pts, kappa, theta)
    L, _ = cholesky_with_jitter(C)
    from .gaussian import tri_solve

    v = tri_solve(L, g - m_pts)
    W = tri_solve(L, prior.cov(pts, grid, kappa, theta))
    return m_grid + W.T @ v


def summarize(samples, grid, data, region: Region, config: RunConfig) -> GridSummary:
    """Pointwise mean and standard deviation of the intensity of every
    process and of every latent function across posterior samples."""
    if len(samples) == 0:
        raise ValidationError("at least one posterior sample required")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim == 1:
        grid = grid[:, None]
    data = [d if isinstance(d, EventSet) else EventSet(d) for d in data]
    n_proc = len(data)
    n_grid = grid.shape[0]
    inducing = latent_grid(region, config.grid_per_axis, config.grid_pad)

    lam_acc = np.zeros((2, n_proc, n_grid))  # running sum and sum of squares
    n_latent = 0 if config.independent else config.n_latent
    lat_acc = np.zeros((2, n_latent, n_grid))
    for s in samples:
        if config.independent:
            prior = IndependentPrior(np.exp(config.priors.phi_log_mean), region.dim)
        else:
            prior = ConvolutionPrior(LatentState(inducing, s.latent_values, s.phis))
            interp = prior.latent_interpolant(grid)
            lat_acc[0] += interp
            lat_acc[1] += interp**2
        for d in range(n_proc):
            pts = (
                np.vstack([data[d].points, s.thinned[d]])
                if s.thinned[d].shape[0]
                else data[d].points
            )
            g_grid = _conditional_g_on_grid(
                prior, grid, pts, s.g_values[d], s.kappas[d], s.thetas[d]
            )
            lam = s.lambda_stars[d] * expit(g_grid)
            lam_acc[0, d] += lam
            lam_acc[1, d] += lam**2
    n = len(samples)
    lam_mean = lam_acc[0] / n
    lam_sd = np.sqrt(np.maximum(lam_acc[1] / n - lam_mean**2, 0.0))
    lat_mean = lat_acc[0] / n
    lat_sd = np.sqrt(np.maximum(lat_acc[1] / n - lat_mean**2, 0.0))
    return GridSummary(grid, lam_mean, lam_sd, lat_mean, lat_sd)


def intensity_samples(samples, X, data, region: Region, config: RunConfig) -> np.ndarray:
    """Per-sample intensity of every process at arbitrary points, (S, D, n).

    The function value at a new point is the conditional mean given that
    sample's state, extending each retained draw to the requested
    locations.
    """
    if len(samples) == 0:
        raise ValidationError("at least one posterior sample required")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    data = [d if isinstance(d, EventSet) else EventSet(d) for d in data]
    n_proc = len(data)
    inducing = latent_grid(region, config.grid_per_axis, config.grid_pad)
    out = np.zeros((len(samples), n_proc, X.shape[0]))
    for i, s in enumerate(samples):
        if config.independent:
            prior = IndependentPrior(np.exp(config.priors.phi_log_mean), region.dim)
        else:
            prior = ConvolutionPrior(LatentState(inducing, s.latent_values, s.phis))
        for d in range(n_proc):
            pts = (
                np.vstack([data[d].points, s.thinned[d]])
                if s.thinned[d].shape[0]
                else data[d].points
            )
            g_X = _conditional_g_on_grid(prior, X, pts, s.g_values[d], s.kappas[d], s.thetas[d])
            out[i, d] = s.lambda_stars[d] * expit(g_X)
    return out


def effective_sample_size(trace) -> float:
    """Autocorrelation-time estimate with pairwise-positive truncation,
    capped at the trace length."""
    x = np.asarray(trace, dtype=float)
    n = x.size
    if n < 2:
        return float(n)
    x = x - x.mean()
    var = float(x @ x) / n
    if var == 0.0:
        return float(n)
    acf = np.correlate(x, x, "full")[n - 1 :] / (n * var)
    tau = 1.0
    t = 1
    while t + 1 < n:
        pair = acf[t] + acf[t + 1]
        if pair < 0.0:
            break
        tau += 2.0 * pair
        t += 2
    return float(min(n, n / max(tau, 1e-12)))


def split_psrf(trace) -> float:
    """Potential scale reduction factor from the two halves of one trace."""
    x = np.asarray(trace, dtype=float)
    half = x.size // 2
    if half < 2:
        return 1.0
    a, b = x[:half], x[half : 2 * half]
    w = 0.5 * (np.var(a, ddof=1) + np.var(b, ddof=1))
    if w == 0.0:
        return 1.0
    means = np.array([a.mean(), b.mean()])
    bvar = half * np.var(means, ddof=1)
    var_plus = (half - 1) / half * w + bvar / half
    return float(max(1.0, np.sqrt(var_plus / w)))


def diagnostics(samples) -> dict:
    """Trace statistics per process for the bound and the mean function value."""
    if len(samples) < 2:
        raise ValidationError("diagnostics need at least two samples")
    n_proc = samples[0].lambda_stars.size
    rows = []
    for d in range(n_proc):
        lam = np.array([s.lambda_stars[d] for s in samples])
        gm = np.array(
            [s.g_values[d].mean() if s.g_values[d].size else 0.0 for s in samples]
        )
        rows.append(
            {
                "process": d,
                "ess_lambda_star": effective_sample_size(lam),
                "psrf_lambda_star": split_psrf(lam),
                "ess_g_mean": effective_sample_size(gm),
                "psrf_g_mean": split_psrf(gm),
            }
        )
    return {"processes": rows, "n_samples": len(samples)}
