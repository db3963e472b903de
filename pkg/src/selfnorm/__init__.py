"""Exponential tail bounds for self-normalized martingales, their simulation
models, and Monte Carlo / exact-enumeration verification."""

from .bounds import (
    BOUND_KINDS,
    BoundSpec,
    RateInputs,
    clamp_probability,
    evaluate_bound,
    f_rate,
    optimal_lambda,
    optimal_lambda_beta,
    psi,
)
from .processes import (
    BatchStats,
    BoundedAbove,
    CenteredPareto,
    DifferenceModel,
    Gaussian,
    Path,
    PathStats,
    Rademacher,
    ScaledTwoPoint,
    SymmetricMixture,
    UnsupportedStatisticError,
    build_model,
    heavy_on_left_verdict,
    path_stats,
    sample_batch,
    sample_path,
    substream,
    truncated_mean,
)
from .montecarlo import (
    DominationVerdict,
    MCEstimate,
    MeanEstimate,
    Statistic,
    TailEvent,
    clopper_pearson,
    domination_check,
    estimate_tail,
    exact_tail_rademacher,
    expectation_bound,
    optimize_over_p,
    supermartingale_check,
)
from .experiments import (
    ExperimentSpec,
    ResultRecord,
    SpecValidationError,
    emit_report,
    load_report,
    load_spec,
    run_experiment,
)

__version__ = "0.1.0"
