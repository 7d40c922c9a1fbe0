"""Finite-horizon portfolio allocation under return-distribution uncertainty.

Three solvers for the same terminal-utility maximization problem: a
nonparametric Bayesian-learning method whose belief about the return law
is carried in the state, and two parametric baselines (strong robust and
time-consistent adaptive), plus a paired out-of-sample evaluation harness
and a brute-force oracle for small discrete instances.
"""

from .baselines import (
    AdaptiveEstimate,
    ConfidenceRegion,
    adaptive_update,
    confidence_region,
    gauss_hermite_expectation,
    initial_estimates,
    solve_adaptive,
    solve_strong_robust,
)
from .config import ExperimentConfig, Seeds, case_preset, derive_seeds, load_config
from .dynamics import AugmentedState, reduce_state, transition, utility, wealth_step
from .evaluate import EvalReport, quantile, simulate_out_of_sample, summarize
from .gp import ConstantSurrogate, KernelHyper, Surrogate, fit, matern52
from .measures import (
    MixtureMeasure,
    PosteriorState,
    gaussian_raw_moments,
    mixture_draw,
    posterior_moments,
    posterior_update,
    sample_posterior_mean,
)
from .solver_ab import (
    DesignMesh,
    Policy,
    backward_induction,
    generate_mesh,
    optimize_control,
    stage_value_estimate,
)

__version__ = "0.1.0"
