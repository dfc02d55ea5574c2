"""Optimization-free estimators for the matrix regression ``Y_t = A X_t B + E_t``."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BMLRError,
    ConfigError,
    DimensionError,
    IllConditionedError,
    NoRootError,
    RecoveryError,
    SingularDesignError,
)
from .estimators import (  # noqa: E402
    CHat,
    EstimatorOutput,
    ThresholdSpec,
    compute_C_hat,
    compute_gamma_hat,
    estimate_A_hat,
    estimate_A_tilde,
    estimate_B_hat,
    fit,
    hard_threshold_A,
    hard_threshold_B,
    recover_noiseless_canonical,
    recover_noiseless_general,
    solve_t_delta,
    support_of,
    threshold_tau_A,
    threshold_tau_B,
)
from .model import (  # noqa: E402
    Dataset,
    DesignKind,
    ModelParameters,
    forward_map,
    generate_A_star,
    generate_B_star,
    generate_dataset,
    generate_design,
    sample_matrix_normal,
)
