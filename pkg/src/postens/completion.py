"""Structure estimation and tensor completion from sampled entries.

The coupling of two index positions is scored by the risk gap: the best
two-variable fit with the pair coupled versus decoupled.  Decoupling can
only lose, so the gap is nonnegative (up to twice the solve tolerance), and
it vanishes across blocks of an exact product structure.  A greedy scan over
positions thresholds the empirical gaps into a partition, after which the
convex solver fits the coefficients.  Thresholds can be fixed, decaying in
n, or chosen by leave-half-out cross-validation.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DimensionError,
    FactorSet,
    PartitionComplex,
    TensorShape,
    effective_dimension,
    exp_reparam,
)
from .risk import ObservationSet, empirical_risk_theta
from .solver import SolveOptions, SolveReport, solve_convex

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD_GRID = (0.001, 0.005, 0.01, 0.05, 0.1, 0.5)

_PAIR_COUPLED = PartitionComplex.from_lists([[1, 2]])
_PAIR_DECOUPLED = PartitionComplex.from_lists([[1], [2]])


@dataclass(frozen=True)
class ThresholdPolicy:
    """Gap threshold rule: fixed at alpha/2, or decaying as c4/sqrt(log n)."""

    kind: str
    alpha: float = 0.0
    c4: float = 0.0

    def __post_init__(self):
        if self.kind == "fixed":
            if self.alpha <= 0:
                raise ValueError("fixed policy needs alpha > 0")
        elif self.kind == "decaying":
            if self.c4 <= 0:
                raise ValueError("decaying policy needs c4 > 0")
        else:
            raise ValueError(f"unknown threshold kind {self.kind!r}")

    @classmethod
    def fixed(cls, alpha: float) -> "ThresholdPolicy":
        return cls("fixed", alpha=float(alpha))

    @classmethod
    def decaying(cls, c4: float) -> "ThresholdPolicy":
        return cls("decaying", c4=float(c4))

    @classmethod
    def with_value(cls, threshold: float) -> "ThresholdPolicy":
        """Fixed policy whose threshold is exactly the given value."""
        return cls.fixed(2.0 * float(threshold))

    def value(self, n: int) -> float:
        if self.kind == "fixed":
            return self.alpha / 2.0
        return self.c4 / math.sqrt(math.log(max(n, 3)))


@dataclass
class RiskGapEstimate:
    """Empirical coupling score for a pair of index positions."""

    j: int
    q: int
    gap: float
    coupled_risk: float
    decoupled_risk: float
    degenerate: bool = False


@dataclass
class CompletionConfig:
    """Pipeline configuration: threshold rule or CV grid, solver, sampling budget."""

    threshold: ThresholdPolicy | None = None
    cv_grid: tuple[float, ...] | None = None
    solve: SolveOptions = field(default_factory=SolveOptions)
    delta: float = 0.1

    def __post_init__(self):
        if self.threshold is None and self.cv_grid is None:
            self.cv_grid = DEFAULT_THRESHOLD_GRID
        if self.threshold is not None and self.cv_grid is not None:
            raise ValueError("give a threshold policy or a CV grid, not both")
        if self.cv_grid is not None:
            self.cv_grid = tuple(float(t) for t in self.cv_grid)
            if not self.cv_grid:
                raise ValueError("the CV grid must be nonempty")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")


@dataclass
class CvEntry:
    threshold: float
    partition: PartitionComplex
    cv_error: float


@dataclass
class CompletionResult:
    partition: PartitionComplex
    params: FactorSet
    report: SolveReport
    threshold: float | None = None
    cv_entries: list[CvEntry] | None = None


def risk_gap(obs: ObservationSet, j: int, q: int, opts: SolveOptions | None = None) -> RiskGapEstimate:
    """Coupled-minus-decoupled two-variable fit risks for positions j, q.

    Both subproblems use the same bound M and epsilon, so the gap carries
    at most twice the solve tolerance of sign error.
    """
    if j == q:
        raise DimensionError("risk gap needs two distinct positions")
    opts = opts if opts is not None else SolveOptions()
    pair = obs.project([j, q])
    for col, pos in ((0, j), (1, q)):
        if np.unique(pair.indices[:, col]).size < 2:
            pair_name = f"position {pos}"
            warnings.warn(
                f"{pair_name} shows fewer than 2 distinct values; the risk gap "
                "is computed from degenerate data",
                stacklevel=2,
            )
    degenerate = any(
        np.unique(pair.indices[:, col]).size < 2 for col in (0, 1)
    )
    coupled = solve_convex(pair, _PAIR_COUPLED, opts)
    decoupled = solve_convex(pair, _PAIR_DECOUPLED, opts)
    return RiskGapEstimate(
        j=j,
        q=q,
        gap=decoupled.objective - coupled.objective,
        coupled_risk=coupled.objective,
        decoupled_risk=decoupled.objective,
        degenerate=degenerate,
    )


def estimate_partition(
    obs: ObservationSet,
    policy: ThresholdPolicy,
    opts: SolveOptions | None = None,
    gap_cache: dict | None = None,
) -> PartitionComplex:
    """Greedy facet scan: attach each position to the first facet whose
    representative exceeds the gap threshold, else open a new facet.

    The facet representative is its smallest position.  At most
    p(p-1)/2 gaps are computed; ``gap_cache`` (keyed by (j, q)) lets callers
    share gap computations across thresholds.
    """
    opts = opts if opts is not None else SolveOptions()
    cache = gap_cache if gap_cache is not None else {}
    t_n = policy.value(obs.n)
    facets: list[list[int]] = [[1]]
    for j in range(2, obs.shape.order + 1):
        placed = False
        for facet in facets:
            q = facet[0]
            key = (min(j, q), max(j, q))
            if key not in cache:
                cache[key] = risk_gap(obs, j, q, opts)
            if cache[key].gap > t_n:
                facet.append(j)
                placed = True
                break
        if not placed:
            facets.append([j])
    return PartitionComplex.from_lists([sorted(f) for f in facets])


def refines(a: PartitionComplex, b: PartitionComplex) -> bool:
    """True when every facet of ``a`` is contained in some facet of ``b``."""
    return all(any(set(fa) <= set(fb) for fb in b.facets) for fa in a.facets)


@dataclass
class CrossValidationResult:
    chosen: float
    partition: PartitionComplex
    params: FactorSet
    report: SolveReport
    entries: list[CvEntry]


def cross_validate(
    obs: ObservationSet,
    grid,
    opts: SolveOptions | None = None,
    fit=None,
) -> CrossValidationResult:
    """Leave-half-out threshold selection.

    Partitions come from the full data (gaps are threshold-independent and
    shared); coefficients are fit on the second half and scored on the first
    half with the fitting risk; ties pick the smallest threshold; the winner
    is refit on the full data.  ``fit`` defaults to the convex solve and may
    be swapped for a sparse one.
    """
    opts = opts if opts is not None else SolveOptions()
    grid = [float(t) for t in grid]
    if not grid:
        raise ValueError("the CV grid must be nonempty")
    if obs.n < 4:
        raise DimensionError(f"cross-validation needs at least 4 observations, got {obs.n}")
    fit = fit if fit is not None else solve_convex

    half = obs.n // 2
    val_obs = obs.take(np.arange(half))
    fit_obs = obs.take(np.arange(half, obs.n))

    cache: dict = {}
    entries: list[CvEntry] = []
    fits: dict[tuple, SolveReport] = {}
    failures = 0
    for t in sorted(grid):
        partition = estimate_partition(obs, ThresholdPolicy.with_value(t), opts, cache)
        key = partition.facets
        try:
            if key not in fits:
                fits[key] = fit(fit_obs, partition, opts)
            report = fits[key]
            params = exp_reparam(report.logparams)
            score = empirical_risk_theta(params, val_obs)
        except Exception:
            logger.exception("cross-validation fit failed at threshold %s", t)
            failures += 1
            score = math.inf
        entries.append(CvEntry(threshold=t, partition=partition, cv_error=score))
    if failures == len(entries):
        raise RuntimeError("every cross-validation fit failed")

    # higher thresholds should refine lower ones; log exceptions, never assert
    broken = [
        (earlier.threshold, later.threshold)
        for earlier, later in zip(entries, entries[1:])
        if not refines(later.partition, earlier.partition)
    ]
    if broken:
        logger.warning(
            "threshold family is not nested for %d of %d adjacent pairs (first: t=%s vs t=%s)",
            len(broken), len(entries) - 1, broken[0][0], broken[0][1],
        )

    best = min(entries, key=lambda e: e.cv_error)  # ties keep the smallest t
    final = fit(obs, best.partition, opts)
    params = exp_reparam(final.logparams)

    # soft holdout sanity: the refit should stay within the grid's complexity
    # allowance of the best half-fit score; diagnostic only, never asserted
    finite = [e for e in entries if math.isfinite(e.cv_error)]
    if finite:
        worst_complexity = max(
            e.partition.num_facets * effective_dimension(e.partition, obs.shape)
            for e in finite
        )
        allowance = 4.0 * math.sqrt(worst_complexity * math.log(max(obs.n, 3)) / obs.n)
        refit_holdout = empirical_risk_theta(params, val_obs)
        if refit_holdout > best.cv_error + allowance:
            logger.info(
                "holdout sanity: refit risk %.5f exceeds best grid score %.5f + %.5f",
                refit_holdout, best.cv_error, allowance,
            )

    return CrossValidationResult(
        chosen=best.threshold,
        partition=best.partition,
        params=params,
        report=final,
        entries=entries,
    )


def complete_tensor(obs: ObservationSet, config: CompletionConfig | None = None) -> CompletionResult:
    """Estimate the partition, then fit the coefficients on the full data."""
    config = config if config is not None else CompletionConfig()
    if obs.n < 1:
        raise DimensionError("completion needs at least one observation")
    opts = config.solve
    if config.threshold is not None:
        partition = estimate_partition(obs, config.threshold, opts)
        report = solve_convex(obs, partition, opts)
        return CompletionResult(
            partition=partition,
            params=exp_reparam(report.logparams),
            report=report,
            threshold=config.threshold.value(obs.n),
        )
    if obs.n < 4:
        # too small to split; fall back to the smallest grid threshold
        policy = ThresholdPolicy.with_value(min(config.cv_grid))
        partition = estimate_partition(obs, policy, opts)
        report = solve_convex(obs, partition, opts)
        return CompletionResult(
            partition=partition,
            params=exp_reparam(report.logparams),
            report=report,
            threshold=policy.value(obs.n),
        )
    cv = cross_validate(obs, config.cv_grid, opts)
    return CompletionResult(
        partition=cv.partition,
        params=cv.params,
        report=cv.report,
        threshold=cv.chosen,
        cv_entries=cv.entries,
    )


def randomized_decompose(
    sampler,
    shape: TensorShape,
    complex: PartitionComplex,
    delta: float,
    opts: SolveOptions | None = None,
) -> FactorSet:
    """Fit the facet coefficients from ceil(rho/delta) uniform random probes.

    ``sampler`` maps a 1-based multi-index tuple to a (possibly noisy)
    positive entry value.  Smaller delta draws more samples.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    opts = opts if opts is not None else SolveOptions()
    complex.validate_for(shape)
    rho = effective_dimension(complex, shape)
    n = int(math.ceil(rho / delta))
    rng = np.random.Generator(np.random.Philox(opts.seed))
    cols = [rng.integers(1, r + 1, size=n) for r in shape.dims]
    indices = np.column_stack(cols)
    values = np.array([float(sampler(tuple(int(v) for v in row))) for row in indices])
    obs = ObservationSet(shape, indices, values)
    report = solve_convex(obs, complex, opts)
    return exp_reparam(report.logparams)
