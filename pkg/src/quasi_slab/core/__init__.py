"""Core inference, simulation and I/O for quasi-slab."""

from .config import (
    ConfigError,
    ExperimentConfig,
    load_config,
)
from .diagnostics import (
    BvmLimit,
    DiagnosticsError,
    ExactPosterior,
    KlEstimate,
    PosteriorSummary,
    SelectionReport,
    bvm_limit_from_fit,
    contraction_epsilon,
    enumerate_exact,
    gaussian_kl,
    kl_to_bvm,
    pinsker_tv_bound,
    selection_report,
    summarize_trace,
    summarize_variational,
)
from .ggm import (
    FitSettings,
    GgmError,
    GgmFit,
    fit_ggm,
    fit_regression,
    node_regression,
)
from .harness import (
    CostRow,
    HarnessError,
    fit_cost_exponent,
    replicate,
    run_benchmark,
    spca_regimes,
)
from .io import (
    IOFormatError,
    read_json,
    read_matrix,
    read_trace,
    read_vector,
    write_json,
    write_matrix,
    write_trace,
)
from .model import (
    BinaryModel,
    GaussianRegressionQL,
    ModelError,
    ModelState,
    NumericalError,
    PriorSpec,
    QuasiLikelihood,
    log_posterior,
    log_prior,
    loglik_coordinate_delta,
    sparsified_loglik,
)
from .rundir import (
    RunDir,
    RunDirError,
)
from .sampler import (
    RandomWalkKernel,
    SamplerConfig,
    SamplerError,
    Trace,
    lasso_init,
    make_rng,
    run_chain,
    step_delta,
    step_theta_generic,
    step_theta_linear,
)
from .simulate import (
    simulate_ggm,
    simulate_regression,
    simulate_spiked,
)
from .spca import (
    PcResponse,
    SpcaError,
    SpcaFit,
    fit_spca,
    pc_response,
    projection_error,
)
from .varapprox import (
    SparsityTemplate,
    VariationalError,
    VariationalState,
    build_template,
    cavi_update_alpha,
    cavi_update_gaussian,
    elbo,
    init_variational,
    run_cavi,
    zeta_gap,
)

__all__ = [
    # config module
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    # diagnostics module
    "BvmLimit",
    "DiagnosticsError",
    "ExactPosterior",
    "KlEstimate",
    "PosteriorSummary",
    "SelectionReport",
    "bvm_limit_from_fit",
    "contraction_epsilon",
    "enumerate_exact",
    "gaussian_kl",
    "kl_to_bvm",
    "pinsker_tv_bound",
    "selection_report",
    "summarize_trace",
    "summarize_variational",
    # ggm module
    "FitSettings",
    "GgmError",
    "GgmFit",
    "fit_ggm",
    "fit_regression",
    "node_regression",
    # harness module
    "CostRow",
    "HarnessError",
    "fit_cost_exponent",
    "replicate",
    "run_benchmark",
    "spca_regimes",
    # io module
    "IOFormatError",
    "read_json",
    "read_matrix",
    "read_trace",
    "read_vector",
    "write_json",
    "write_matrix",
    "write_trace",
    # model module
    "BinaryModel",
    "GaussianRegressionQL",
    "ModelError",
    "ModelState",
    "NumericalError",
    "PriorSpec",
    "QuasiLikelihood",
    "log_posterior",
    "log_prior",
    "loglik_coordinate_delta",
    "sparsified_loglik",
    # rundir module
    "RunDir",
    "RunDirError",
    # sampler module
    "RandomWalkKernel",
    "SamplerConfig",
    "SamplerError",
    "Trace",
    "lasso_init",
    "make_rng",
    "run_chain",
    "step_delta",
    "step_theta_generic",
    "step_theta_linear",
    # simulate module
    "simulate_ggm",
    "simulate_regression",
    "simulate_spiked",
    # spca module
    "PcResponse",
    "SpcaError",
    "SpcaFit",
    "fit_spca",
    "pc_response",
    "projection_error",
    # varapprox module
    "SparsityTemplate",
    "VariationalError",
    "VariationalState",
    "build_template",
    "cavi_update_alpha",
    "cavi_update_gaussian",
    "elbo",
    "init_variational",
    "run_cavi",
    "zeta_gap",
]
