"""Alternating-least-squares CP baseline for head-to-head comparisons."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import DenseTensor, DimensionError, DomainError, TensorShape
from .risk import ObservationSet


@dataclass
class CpModel:
    """Sum of ``rank`` outer products; one (r_i x rank) factor matrix per mode."""

    shape: TensorShape
    rank: int
    factors: list[np.ndarray]

    def __post_init__(self):
        if self.rank < 1:
            raise DomainError(f"rank must be positive, got {self.rank}")
        if len(self.factors) != self.shape.order:
            raise DimensionError("one factor matrix per mode is required")
        arrays = []
        for i, (arr, r) in enumerate(zip(self.factors, self.shape.dims)):
            arr = np.asarray(arr, dtype=float)
            if arr.shape != (r, self.rank):
                raise DimensionError(
                    f"mode {i + 1} factor has shape {arr.shape}, expected {(r, self.rank)}"
                )
            arrays.append(arr)
        self.factors = arrays

    def dense(self) -> DenseTensor:
        dims = self.shape.dims
        p = len(dims)
        full = np.zeros(dims)
        for j in range(self.rank):
            comp = self.factors[0][:, j]
            out = comp
            for i in range(1, p):
                out = np.multiply.outer(out, self.factors[i][:, j])
            full = full + out
        return DenseTensor.from_array(full)


def cp_eval(model: CpModel, x) -> float:
    """Value of the CP model at a 1-based multi-index."""
    x = model.shape.check_index(x)
    rows = np.ones(model.rank)
    for i, arr in enumerate(model.factors):
        rows = rows * arr[x[i] - 1, :]
    return float(rows.sum())


@dataclass
class AlsResult:
    model: CpModel
    losses: np.ndarray  # training squared loss after each sweep


def _training_loss(obs: ObservationSet, factors) -> float:
    pred = np.ones((obs.n, factors[0].shape[1]))
    for i, arr in enumerate(factors):
        pred = pred * arr[obs.indices[:, i] - 1, :]
    return float(np.mean((obs.values - pred.sum(axis=1)) ** 2))


def als_fit(
    obs: ObservationSet,
    rank: int,
    sweeps: int = 50,
    seed: int = 0,
    ridge: float = 1e-8,
) -> AlsResult:
    """Fit a CP model by cyclic least squares on each mode.

    Factors start uniform in [0.5, 1.5] (positive-leaning, seeded).  Each
    mode update solves one ridge-regularized normal system per index value;
    index values never observed keep their current rows.  The training
    squared loss is recorded after every sweep and is non-increasing up to
    the ridge term.
    """
    if rank < 1:
        raise DomainError(f"rank must be positive, got {rank}")
    if sweeps < 1:
        raise DomainError(f"sweeps must be positive, got {sweeps}")
    dims = obs.shape.dims
    p = len(dims)
    rng = np.random.Generator(np.random.Philox(seed))
    factors = [rng.uniform(0.5, 1.5, size=(r, rank)) for r in dims]

    losses = []
    eye = np.eye(rank)
    for _ in range(sweeps):
        for w in range(p):
            design = np.ones((obs.n, rank))
            for i in range(p):
                if i != w:
                    design = design * factors[i][obs.indices[:, i] - 1, :]
            col = obs.indices[:, w] - 1
            for a in range(dims[w]):
                mask = col == a
                if not mask.any():
                    continue
                G = design[mask]
                rhs = G.T @ obs.values[mask]
                gram = G.T @ G + ridge * eye
                factors[w][a, :] = np.linalg.solve(gram, rhs)
        losses.append(_training_loss(obs, factors))
    model = CpModel(obs.shape, rank, factors)
    return AlsResult(model=model, losses=np.asarray(losses))


def select_rank_cv(
    obs: ObservationSet,
    ranks=(1, 2, 3, 4),
    sweeps: int = 50,
    seed: int = 0,
) -> tuple[int, CpModel]:
    """Leave-half-out rank selection: fit on the second half, score squared
    error on the first half, refit the winner on everything."""
    ranks = [int(q) for q in ranks]
    if obs.n < 4:
        best = min(ranks)
        return best, als_fit(obs, best, sweeps=sweeps, seed=seed).model
    half = obs.n // 2
    val = obs.take(np.arange(half))
    fit_half = obs.take(np.arange(half, obs.n))
    scores = []
    for q in sorted(ranks):
        model = als_fit(fit_half, q, sweeps=sweeps, seed=seed).model
        pred = np.ones((val.n, q))
        for i, arr in enumerate(model.factors):
            pred = pred * arr[val.indices[:, i] - 1, :]
        scores.append((float(np.mean((val.values - pred.sum(axis=1)) ** 2)), q))
    _, best = min(scores)
    return best, als_fit(obs, best, sweeps=sweeps, seed=seed).model


def save_cp_model(model: CpModel, path) -> None:
    payload = {
        "dims": list(model.shape.dims),
        "rank": model.rank,
        "factors": [f.tolist() for f in model.factors],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_cp_model(path) -> CpModel:
    with open(path) as fh:
        payload = json.load(fh)
    for key in ("dims", "rank", "factors"):
        if key not in payload:
            raise DimensionError(f"CP model file {path} is missing {key!r}")
    shape = TensorShape(tuple(payload["dims"]))
    return CpModel(shape, int(payload["rank"]), [np.asarray(f) for f in payload["factors"]])
