"""Laboratory for leaky-ReLU two-layer classifiers on mixture data.

Thin wrapper around the C++ core: data generation, gradient-descent training
with activation monitors, deterministic regime checks, closed-form limit
directions, and classification-error analysis.
"""

from ._core import (  # noqa: F401
    BlockGram,
    ConfigError,
    Dataset,
    DegenerateDataError,
    InitScheme,
    LimitDirection,
    MixtureSpec,
    NetShape,
    NetworkState,
    NoiseLaw,
    SigmaSpec,
    TrainConfig,
    a_matrix_inverse_action,
    activation_report,
    bayes_error,
    build_block_gram,
    c_w_bound,
    check_assumptions,
    data_functionals,
    decision_boundary_check,
    direction_diagnostics,
    empirical_loss,
    equivalence_failure_probe,
    exact_gaussian_error,
    forward,
    gaussian_bracket,
    gd_step,
    generate,
    init_network,
    kappa,
    log_kappa,
    margins,
    mc_error,
    measure_event_E,
    measure_tilde_events,
    min_norm_direction,
    phase_summary,
    qp_oracle,
    run_verify,
    sigma_max_tilde_bound,
    tilde_to_E_bridge,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
