"""Simulation and estimation for finite mixtures of Markov jump processes."""

from .em import EmOptions, e_step, fit_em, m_step, observed_loglik, path_log_joint
from .lrt import (
    TestReport,
    chi_square_sf,
    fit_markov,
    lrt_markov_vs_mixture,
    lrt_restricted_vs_unrestricted,
)
from .mle import FitResult, complete_loglik, mle_restricted, mle_unrestricted
from .model import (
    MixtureModel,
    RestrictedSpec,
    StateSpace,
    benchmark_model,
    build_intensity,
    embedded_chain,
    matrix_exponential,
    mixture_transition,
    n_step_matrix,
    validate_model,
)
from .simulate import RngStream, SamplePath, simulate_dataset, simulate_path
from .stats import aggregate, dataset_stats, sufficient_stats

__version__ = "0.1.0"
