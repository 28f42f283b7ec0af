"""Censoring-aware compressive sensing for wireless sensor networks.

Sensor nodes project a sparse scene onto random ternary-censored
measurements: large magnitudes are transmitted, small ones are reported
as hard zeros with a single symbol, and the middle band stays silent.
This package designs the censoring thresholds in closed form, simulates
the network, reconstructs the scene with weighted l1 programs, and
checks the spectral conditions behind the recovery guarantees.
"""

from .analysis import (
    ErrorBound,
    ErrorBoundInputs,
    RipReport,
    SampleBound,
    SampleBoundInputs,
    best_k_l1_tail,
    fan,
    nmse,
    pseudo_inverse,
    recovery_error_bound,
    restricted_extremes,
    rip_constant,
    rip_input_matrix,
    sample_count_bound,
    squared_relative_error,
)
from .censor import (
    CensorConfig,
    Decision,
    DecisionKind,
    Thresholds,
    brute_force_thresholds,
    compute_thresholds,
    expected_cost,
    likelihood_ratio,
    log_likelihood_ratio,
    overlap_pmf,
    overlap_priors,
    prob_censor,
    prob_false_alarm,
    prob_miss,
    tail_mass,
    tail_mass_inv,
)
from .cli import ConfigError, ExperimentConfig, TrialRecord, run_sweep, run_trial
from .fusion import (
    FusionBatch,
    StackedOperator,
    calibrated_epsilon,
    collect,
    epsilon_policy,
    from_text,
    stack_operator,
    to_text,
)
from .model import (
    ModelParams,
    SensingVector,
    SparseSignal,
    draw_sensing_vector,
    draw_signal,
    draw_support,
    measure,
    sigma_v_from_snr,
    substream,
)
from .recovery import (
    Certificate,
    RecoverySolution,
    SolverOptions,
    certify,
    reconstruct_csc_l1,
    solve_l1,
    solve_modified_l1,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # model
    "ModelParams", "SparseSignal", "SensingVector", "substream",
    "draw_support", "draw_signal", "draw_sensing_vector", "measure",
    "sigma_v_from_snr",
    # censor (the censor() op itself lives on the censorcs.censor module,
    # which this list would otherwise shadow)
    "CensorConfig", "Thresholds", "Decision", "DecisionKind",
    "overlap_priors", "overlap_pmf", "likelihood_ratio",
    "log_likelihood_ratio", "tail_mass", "tail_mass_inv",
    "compute_thresholds", "brute_force_thresholds",
    "prob_miss", "prob_false_alarm", "prob_censor", "expected_cost",
    # fusion
    "FusionBatch", "StackedOperator", "collect", "stack_operator",
    "epsilon_policy", "calibrated_epsilon", "to_text", "from_text",
    # recovery
    "SolverOptions", "RecoverySolution", "Certificate",
    "solve_l1", "solve_modified_l1", "reconstruct_csc_l1", "certify",
    # analysis
    "nmse", "squared_relative_error", "fan", "best_k_l1_tail",
    "RipReport", "rip_constant", "restricted_extremes", "pseudo_inverse",
    "rip_input_matrix", "ErrorBoundInputs", "ErrorBound",
    "recovery_error_bound", "SampleBoundInputs", "SampleBound",
    "sample_count_bound",
    # cli
    "ExperimentConfig", "TrialRecord", "ConfigError", "run_trial",
    "run_sweep",
]
