"""Grey-box Bayesian optimization of noise-free function networks."""

from .confidence import EnvelopeContext, propagate, propagate_chain, propagate_ffn, propagate_multi
from .gp import Dataset, PosteriorModel, add_observation, confidence_interval, fit, multi_posterior
from .kernels import Expansion, KernelSpec, kernel_matrix, matern, rkhs_norm
from .metrics import (
    bound_coefficients,
    cumulative_regret,
    fill_distance,
    info_gain,
    simple_regret,
    verify_bounds,
)
from .networks import (
    HardFamily,
    HardInstance,
    NetworkInstance,
    build_hard_instance,
    hard_family,
    load_instance,
    save_instance,
    select_u_utilde,
    synthesize_network,
)
from .optimizers import RunConfig, Trace, run, run_blackbox_ucb, run_gpn_ucb, run_nonadaptive

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "EnvelopeContext",
    "Expansion",
    "HardFamily",
    "HardInstance",
    "KernelSpec",
    "NetworkInstance",
    "PosteriorModel",
    "RunConfig",
    "Trace",
    "add_observation",
    "bound_coefficients",
    "build_hard_instance",
    "confidence_interval",
    "cumulative_regret",
    "fill_distance",
    "fit",
    "hard_family",
    "info_gain",
    "kernel_matrix",
    "load_instance",
    "matern",
    "multi_posterior",
    "propagate",
    "propagate_chain",
    "propagate_ffn",
    "propagate_multi",
    "rkhs_norm",
    "run",
    "run_blackbox_ucb",
    "run_gpn_ucb",
    "run_nonadaptive",
    "save_instance",
    "select_u_utilde",
    "simple_regret",
    "synthesize_network",
    "verify_bounds",
]
