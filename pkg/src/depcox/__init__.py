"""Inference for dependent Cox point processes.

Observed processes share latent functions through per-process Gaussian
smoothing kernels; intensities are bounded sigmoid transforms of the
resulting functions, and inference runs an augmented-variable MCMC with
multi-level thinning.
"""

from .convolution import (
    ConvolutionPrior,
    CouplingParams,
    FixedFunctionPrior,
    IndependentPrior,
    LatentState,
    cross_cov,
    latent_grid,
    latent_posterior,
    output_cov,
    phi_mh_update,
    sample_latent_posterior,
)
from .engine import (
    GridSummary,
    PosteriorSample,
    RunConfig,
    RunInfo,
    diagnostics,
    effective_sample_size,
    intensity_samples,
    run_chain,
    run_chain_with_info,
    split_psrf,
    summarize,
)
from .errors import NumericalError, ValidationError
from .gaussian import (
    Mvn,
    cholesky_with_jitter,
    conditional_mvn,
    gauss_density,
    gauss_gram,
    mvn_logpdf,
    mvn_sample,
)
from .generate import (
    GroundTruth,
    bump_intensity,
    low_intensity_fraction,
    make_benchmark_bank,
    sample_events,
    sample_ground_truth,
    thin_events,
)
from .metrics import (
    Quadrature,
    diffusion_bandwidth,
    kde_intensity,
    l2_error,
    poisson_loglik,
    predictive_loglik,
    sample_logliks,
)
from .sgcp import (
    AugmentedState,
    EventSet,
    GpContext,
    PriorConfig,
    Region,
    birth_death_step,
    elliptical_slice,
    ess_function_update,
    gibbs_lambda_star,
    hmc_hyper_update,
    lambda_posterior,
    leapfrog,
    move_step,
    point_loglik,
)
from .thinning import (
    RateLadder,
    accept_delete,
    accept_insert,
    accept_move,
    assign_rate,
    default_ladder,
    estimate_total,
    thinned_prob,
)

__version__ = "0.1.0"
