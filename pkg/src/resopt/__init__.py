"""resopt: regularized stochastic BFGS (RES) with SGD baselines, random
quadratic and synthetic SVM problem families, and a reproducible
experiment harness."""

from .experiments import (
    AlgorithmSummary,
    ConvergenceCriterion,
    ExperimentSpec,
    RateCheckReport,
    RecursionCheck,
    STUDY_KINDS,
    StudyResult,
    check_rate_recursion,
    convergence_time,
    default_spec,
    decay_bound_constant,
    max_objective_jump,
    run_rate_check,
    run_study,
    summarize,
    write_histogram_csv,
    write_summary_csv,
)
from .curvature import (
    EPS_C,
    EPS_V,
    HessianApprox,
    InternalStateError,
    SkipReason,
    VariationPair,
    classic_update,
    descent_direction,
    descent_matrix,
    initial_hessian,
    inverse_of_shifted,
    regularized_update,
)
from .objective import (
    CurvatureBounds,
    QuadraticProblem,
    SampleBatch,
    StochasticObjective,
    SvmProblem,
    classify_accuracy,
    generate_quadratic,
    generate_svm_data,
    load_training_csv,
    save_training_csv,
)
from .optimizer import (
    ConstantSchedule,
    DIVERGENCE_NORM,
    ResConfig,
    RunTrace,
    SgdConfig,
    StepSchedule,
    run_plain_sbfgs,
    run_res,
    run_sgd,
)

__version__ = "0.1.0"

__all__ = [
    "AlgorithmSummary",
    "ConvergenceCriterion",
    "CurvatureBounds",
    "ConstantSchedule",
    "DIVERGENCE_NORM",
    "ExperimentSpec",
    "RateCheckReport",
    "RecursionCheck",
    "STUDY_KINDS",
    "StudyResult",
    "check_rate_recursion",
    "convergence_time",
    "default_spec",
    "decay_bound_constant",
    "max_objective_jump",
    "run_rate_check",
    "run_study",
    "summarize",
    "write_histogram_csv",
    "write_summary_csv",
    "EPS_C",
    "EPS_V",
    "HessianApprox",
    "InternalStateError",
    "QuadraticProblem",
    "ResConfig",
    "RunTrace",
    "SampleBatch",
    "SgdConfig",
    "SkipReason",
    "StepSchedule",
    "StochasticObjective",
    "SvmProblem",
    "VariationPair",
    "classic_update",
    "classify_accuracy",
    "descent_direction",
    "descent_matrix",
    "generate_quadratic",
    "generate_svm_data",
    "initial_hessian",
    "inverse_of_shifted",
    "load_training_csv",
    "regularized_update",
    "run_plain_sbfgs",
    "run_res",
    "run_sgd",
    "save_training_csv",
]
