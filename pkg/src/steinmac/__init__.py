"""Stein exponents and sublinear-cost testing schemes over multiple-access
channels: channel classification, marker discovery, I-projection exponents,
scheme construction, and error-probability estimation."""

from .channels import (
    BudgetLaw,
    ChannelClass,
    CostBudget,
    CostModel,
    Dmmac,
    GgMac,
    GgRatioBound,
    MarkerSet,
    ToggleWitness,
    admissible,
    classify,
    cost_budget,
    find_markers,
    gg_channel_output,
    gg_constant,
    gg_dn_tail,
    gg_log_density,
    gg_ratio_bound,
    gg_sample,
    load_dmmac,
    parse_dmmac,
    prune_unreachable_outputs,
    toggle_predicate,
    verify_markers,
)
from .errors import (
    AbsoluteContinuityViolation,
    BlocklengthTooSmall,
    CostBudgetExceeded,
    DegenerateFit,
    DimensionTooLarge,
    EmptyOutputAlphabet,
    InstanceTooLarge,
    LengthMismatch,
    MarkerMismatch,
    NoFeasiblePoint,
    NoMarkers,
    NonConvergence,
    OutOfAlphabet,
    ParseError,
    SteinmacError,
    ZeroTiltOnSupport,
)
from .exponents import (
    IProjectionResult,
    MarginalConstraintSet,
    brute_force_min_kl,
    local_stein_exponent,
    min_kl_fixed_marginals,
)
from .prob import (
    Joint3Pmf,
    Pmf,
    SequenceType,
    empirical_type,
    is_strongly_typical,
    kl_divergence,
    marginal,
    quantile_map,
    sample_iid,
)
from .schemes import (
    RandomizedDecider,
    Scheme,
    build_full_sparse_scheme,
    build_local_scheme,
    build_scheme_for_class,
    build_sparse_full_scheme,
    build_sparse_scheme,
    class_exponent,
    derandomize,
    gamma_schedule,
)
from .simulate import (
    LadderPoint,
    SimConfig,
    SimReport,
    TestProblem,
    TrialEstimate,
    default_tilt,
    exact_error_probs,
    fit_exponent,
    importance_sample_beta,
    run_ladder,
    run_trials,
    wilson_interval,
)

__version__ = "0.1.0"

__all__ = [
    "AbsoluteContinuityViolation",
    "BlocklengthTooSmall",
    "BudgetLaw",
    "ChannelClass",
    "CostBudget",
    "CostBudgetExceeded",
    "CostModel",
    "DegenerateFit",
    "DimensionTooLarge",
    "Dmmac",
    "EmptyOutputAlphabet",
    "GgMac",
    "GgRatioBound",
    "IProjectionResult",
    "InstanceTooLarge",
    "Joint3Pmf",
    "LadderPoint",
    "LengthMismatch",
    "MarginalConstraintSet",
    "MarkerMismatch",
    "MarkerSet",
    "NoFeasiblePoint",
    "NoMarkers",
    "NonConvergence",
    "OutOfAlphabet",
    "ParseError",
    "Pmf",
    "RandomizedDecider",
    "Scheme",
    "SequenceType",
    "SimConfig",
    "SimReport",
    "SteinmacError",
    "TestProblem",
    "ToggleWitness",
    "TrialEstimate",
    "ZeroTiltOnSupport",
    "admissible",
    "brute_force_min_kl",
    "build_full_sparse_scheme",
    "build_local_scheme",
    "build_scheme_for_class",
    "build_sparse_full_scheme",
    "build_sparse_scheme",
    "class_exponent",
    "classify",
    "cost_budget",
    "default_tilt",
    "derandomize",
    "empirical_type",
    "exact_error_probs",
    "find_markers",
    "fit_exponent",
    "gamma_schedule",
    "gg_channel_output",
    "gg_constant",
    "gg_dn_tail",
    "gg_log_density",
    "gg_ratio_bound",
    "gg_sample",
    "importance_sample_beta",
    "is_strongly_typical",
    "kl_divergence",
    "load_dmmac",
    "local_stein_exponent",
    "marginal",
    "min_kl_fixed_marginals",
    "parse_dmmac",
    "prune_unreachable_outputs",
    "quantile_map",
    "run_ladder",
    "run_trials",
    "sample_iid",
    "toggle_predicate",
    "verify_markers",
    "wilson_interval",
]
