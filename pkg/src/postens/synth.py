"""Seeded synthetic data: ground-truth tensors, uniform sampling, gamma noise.

Sampling uses the counter-based Philox generator so observation sets are
bit-reproducible across platforms for a given seed.  Gamma noise is drawn
with numpy's standard rejection sampler (shape-boosting transform below
shape 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DenseTensor, FactorSet, PartitionComplex, TensorShape
from .risk import NoiseModel, ObservationSet


@dataclass
class ExperimentSpec:
    """One synthetic draw: a truth tensor, a sample budget, and a noise model."""

    truth: FactorSet | DenseTensor
    n: int
    noise: NoiseModel = field(default_factory=NoiseModel.none)
    seed: int = 0
    trials: int = 1

    def __post_init__(self):
        if self.n < 1 or self.trials < 1:
            raise ValueError("n and trials must be at least 1")


def trial_seed(seed: int, trial: int) -> int:
    """Per-trial derived seed; trials never share generator state."""
    return int(seed) + int(trial)


def _dense_truth(truth) -> DenseTensor:
    return truth if isinstance(truth, DenseTensor) else truth.dense()


def sample_observations(spec: ExperimentSpec) -> ObservationSet:
    """Draw n entries uniformly at random, with multiplicative noise if set.

    Deterministic for a given seed: indices are drawn column by column, then
    one noise factor per observation.
    """
    dense = _dense_truth(spec.truth)
    dims = dense.shape.dims
    rng = np.random.Generator(np.random.Philox(spec.seed))
    cols = [rng.integers(1, r + 1, size=spec.n) for r in dims]
    indices = np.column_stack(cols)
    flat = np.ravel_multi_index(tuple(indices[:, i] - 1 for i in range(len(dims))), dims)
    values = dense.entries[flat]
    if spec.noise.family == "gamma":
        factors = rng.gamma(shape=spec.noise.shape, scale=spec.noise.scale, size=spec.n)
        values = values * factors
    allow_zero = bool((values == 0).any())
    return ObservationSet(dense.shape, indices, values.copy(), allow_zero)


def exhaustive_observations(truth) -> ObservationSet:
    """Every entry observed exactly once, noiselessly (uniform coverage)."""
    dense = _dense_truth(truth)
    dims = dense.shape.dims
    grids = np.indices(dims).reshape(len(dims), -1).T + 1
    allow_zero = bool((dense.entries == 0).any())
    return ObservationSet(dense.shape, grids, dense.entries.copy(), allow_zero)


def benchmark_tensor() -> FactorSet:
    """Order-5 ground truth for the synthetic benchmark.

    A full-rank 3x3 block couples the first two positions; the remaining
    positions carry the vectors (1, 2, 3), (1, 1, 1), (1, 1, 1).  Entries
    span [1, 6].
    """
    shape = TensorShape((3, 3, 3, 3, 3))
    complex = PartitionComplex.from_lists([[1, 2], [3], [4], [5]])
    block = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]])
    factors = [block, np.array([1.0, 2.0, 3.0]), np.ones(3), np.ones(3)]
    return FactorSet(complex, shape, factors, 9.0)


def zero_gap_tensor() -> DenseTensor:
    """2x2x2 fixture whose pairwise couplings are invisible to risk gaps.

    Every two-position conditional mean is constant (equal to 1), yet the
    tensor is not a product across any partition.  It contains zeros, so it
    violates the positivity bound on purpose; use allow_zero observations.
    """
    arr = np.zeros((2, 2, 2))
    arr[:, :, 0] = [[2.0, 0.0], [0.0, 2.0]]
    arr[:, :, 1] = [[0.0, 2.0], [2.0, 0.0]]
    return DenseTensor.from_array(arr)
