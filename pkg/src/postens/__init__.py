"""Positive tensor decomposition, approximation, and completion.

Positive tensors admit a numerically well-posed factorization into one
coefficient block per facet of a simplicial complex over the index
positions.  Fitting the log-coefficients under a generalized I-divergence
loss is convex, so best approximations (including best rank-1) are computed
to certified accuracy by an interior-point method.  Completion estimates
which positions couple via pairwise risk gaps, then fits the resulting
partition; sparse and cross-validated variants, an ALS baseline, and a
seeded synthetic benchmark round out the toolkit.
"""

from .baselines import AlsResult, CpModel, als_fit, cp_eval, load_cp_model, save_cp_model, select_rank_cv
from .benchmark import BenchmarkConfig, BenchmarkReport, run_benchmark
from .completion import (
    DEFAULT_THRESHOLD_GRID,
    CompletionConfig,
    CompletionResult,
    CrossValidationResult,
    RiskGapEstimate,
    ThresholdPolicy,
    complete_tensor,
    cross_validate,
    estimate_partition,
    randomized_decompose,
    refines,
    risk_gap,
)
from .core import (
    DenseTensor,
    DimensionError,
    DomainError,
    FactorBoundError,
    FactorSet,
    IncorrectComplexError,
    LogFactorSet,
    PartitionComplex,
    TensorShape,
    UnsupportedFacetError,
    construct_exact_decomposition,
    effective_dimension,
    eval_decomposition,
    exp_reparam,
    load_factor_set,
    load_tensor_file,
    log_reparam,
    partition_to_cp,
    save_factor_set,
)
from .risk import (
    NoiseModel,
    ObservationSet,
    empirical_risk,
    empirical_risk_theta,
    loss_equivalence_constants,
    prediction_error,
    read_observations,
    risk_gradient,
    risk_hessian,
    risk_hessian_vector,
    squared_loss,
    write_observations,
)
from .solver import (
    ConfigurationError,
    SolveOptions,
    SolveReport,
    check_epsilon_solution,
    solve_convex,
    solve_sparse,
)
from .synth import (
    ExperimentSpec,
    benchmark_tensor,
    exhaustive_observations,
    sample_observations,
    trial_seed,
    zero_gap_tensor,
)

__version__ = "0.1.0"
