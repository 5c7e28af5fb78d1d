"""Bayesian optimization with randomly alternating plain and warped kernels."""

__version__ = "0.1.0"

from .acquisition import AcquisitionConfig, expected_improvement, lcb, propose_next
from .benchmarks import (
    SETTING_NAMES,
    BenchmarkSetting,
    ackley,
    ackley_warp,
    get_setting,
    normalized_cost,
    rastrigin,
    rastrigin_warp,
)
from .gp import (
    Dataset,
    PosteriorModel,
    Prediction,
    fit_posterior,
    log_marginal_likelihood,
    optimize_hyperparameters,
    predict,
    predict_prior,
)
from .kernels import (
    AdditiveSE,
    AlternationStrategy,
    KernelChoice,
    KernelHyper,
    SEStrategy,
    SquaredExponential,
    SumStrategy,
    WarpedSE,
    WarpedStrategy,
    WarpFunction,
    draw_kernel,
    gram,
    se_eval,
    sum_eval,
    warped_eval,
)
from .optimizer import (
    ObjectiveSpec,
    RunTrace,
    TrialRecord,
    as_objective_spec,
    best_so_far_curve,
    make_strategy,
    run_bo,
    run_random_search,
)
from .space import Domain

__all__ = [
    "__version__",
    "AcquisitionConfig",
    "AdditiveSE",
    "AlternationStrategy",
    "BenchmarkSetting",
    "Dataset",
    "Domain",
    "KernelChoice",
    "KernelHyper",
    "ObjectiveSpec",
    "PosteriorModel",
    "Prediction",
    "RunTrace",
    "SEStrategy",
    "SETTING_NAMES",
    "SquaredExponential",
    "SumStrategy",
    "TrialRecord",
    "WarpFunction",
    "WarpedSE",
    "WarpedStrategy",
    "ackley",
    "ackley_warp",
    "as_objective_spec",
    "best_so_far_curve",
    "draw_kernel",
    "expected_improvement",
    "fit_posterior",
    "get_setting",
    "gram",
    "lcb",
    "log_marginal_likelihood",
    "make_strategy",
    "normalized_cost",
    "optimize_hyperparameters",
    "predict",
    "predict_prior",
    "propose_next",
    "rastrigin",
    "rastrigin_warp",
    "run_bo",
    "run_random_search",
    "se_eval",
    "sum_eval",
    "warped_eval",
]
