"""Bayesian spatiotemporal count modeling with autoregressive gamma frailties.

Poisson counts on a sparse spatial graph share positive frailties that
evolve through a stationary autoregressive gamma process; a latent
Poisson decomposition makes every update conjugate, so posterior
sampling is a pure Gibbs sweep with linear per-iteration cost.
"""

from .diagnostics import (
    FitSummary,
    InfoCriteria,
    MetricError,
    dic_waic,
    ess,
    ess_matrix,
    fit_summary,
    mae,
    mape,
    medae,
    poisson_log_lik,
)
from .gibbs import (
    McmcSettings,
    PosteriorChain,
    bessel_conditional,
    beta_hessian,
    beta_log_conditional,
    full_conditional_U,
    full_conditional_c,
    full_conditional_kappa,
    full_conditional_rho,
    gibbs_sweep,
    initial_state,
    metropolis_beta,
    run_chain,
    run_chains,
    update_Z_row,
)
from .graph import (
    GraphError,
    NeighborGraph,
    build_knn_graph,
    build_reverse_adjacency,
    graph_from_json,
    graph_to_json,
    knn_for_new_location,
)
from .model import (
    ChainState,
    CountDataset,
    HYPERPARAMETER_PRESETS,
    ModelSpec,
    NumericError,
    SpecError,
    StationarityCheck,
    conditional_moments,
    contraction_iterate,
    dense_weight_matrix,
    log_joint,
    rate_lambda,
    stationarity_of_matrix,
    validate_stationarity,
)
from .predict import (
    PredictionRequest,
    PredictiveDraws,
    RequestError,
    forward_frailty_training,
    frailty_new_locations,
    predict,
)
from .rng import (
    BesselParams,
    DegenerateTruncationError,
    ParameterError,
    RandomStream,
    TruncGammaParams,
    bessel_logpmf,
    bessel_pmf,
    log_bessel_iv,
    noncentral_gamma_logpdf,
    sample_bessel,
    sample_gamma,
    sample_inverse_gamma,
    sample_noncentral_gamma,
    sample_truncated_gamma,
)
from .simulate import (
    SimDesign,
    SimResult,
    empirical_transition_check,
    grid_holdout_split,
    grid_locations,
    simulate_dataset,
    spiral_grid_locations,
)

__version__ = "0.1.0"
