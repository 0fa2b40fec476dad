"""Loss functions for fitting facet factorizations to sampled entries.

The fitting loss is a generalized I-divergence: for an observation (x, y)
and a factorization with log-coefficients u, the per-sample loss is
``-y * s + exp(s)`` with ``s`` the sum of the facet log-coefficients at x.
It is convex in the log-coefficients and has the same minimizer as the
squared loss when the facet structure is exact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import (
    DenseTensor,
    DimensionError,
    DomainError,
    FactorSet,
    LogFactorSet,
    TensorShape,
    coefficient_layout,
    observation_columns,
)


@dataclass
class ObservationSet:
    """Sampled entries: 1-based index rows and positive measured values.

    ``allow_zero`` admits y == 0 for fixtures built from tensors with zero
    entries; regular data must be strictly positive.
    """

    shape: TensorShape
    indices: np.ndarray
    values: np.ndarray
    allow_zero: bool = False

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.indices.ndim != 2 or self.indices.shape[1] != self.shape.order:
            raise DimensionError(
                f"index array must be (n, {self.shape.order}), got {self.indices.shape}"
            )
        if self.indices.shape[0] != self.values.size or self.values.size < 1:
            raise DimensionError("need one value per index row, and at least one row")
        dims = np.asarray(self.shape.dims)
        if (self.indices < 1).any() or (self.indices > dims[None, :]).any():
            bad = int(np.argmax(((self.indices < 1) | (self.indices > dims[None, :])).any(axis=1)))
            raise DimensionError(f"observation {bad + 1} has an index outside the dimensions")
        floor = 0.0 if self.allow_zero else np.nextafter(0.0, 1.0)
        if (self.values < floor).any():
            raise DomainError("observed values must be positive")

    @property
    def n(self) -> int:
        return self.values.size

    def take(self, rows) -> "ObservationSet":
        rows = np.asarray(rows)
        return ObservationSet(self.shape, self.indices[rows], self.values[rows], self.allow_zero)

    def project(self, positions) -> "ObservationSet":
        """Keep only the given 1-based positions (e.g. a pair, for risk gaps)."""
        positions = [int(j) for j in positions]
        for j in positions:
            if not 1 <= j <= self.shape.order:
                raise DimensionError(f"position {j} outside 1..{self.shape.order}")
        sub_shape = TensorShape(tuple(self.shape.dims[j - 1] for j in positions))
        cols = self.indices[:, [j - 1 for j in positions]]
        return ObservationSet(sub_shape, cols, self.values, self.allow_zero)


@dataclass(frozen=True)
class NoiseModel:
    """Multiplicative noise: y = (1 + z) * value with E(1 + z) = 1.

    The gamma family draws (1 + z) ~ Gamma(shape, scale) with
    shape * scale = 1 so the mean is exactly 1.
    """

    family: str = "none"
    shape: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in ("none", "gamma"):
            raise ValueError(f"unknown noise family {self.family!r}")
        if self.family == "gamma":
            if self.shape <= 0 or self.scale <= 0:
                raise DomainError("gamma shape and scale must be positive")
            if abs(self.shape * self.scale - 1.0) > 1e-9:
                raise DomainError("gamma shape * scale must equal 1 so E(1+z) = 1")

    @classmethod
    def none(cls) -> "NoiseModel":
        return cls("none")

    @classmethod
    def gamma(cls, shape: float) -> "NoiseModel":
        return cls("gamma", float(shape), 1.0 / float(shape))

    def upper_quantile(self, q: float = 0.999) -> float:
        """Diagnostic bound on (1 + z); the gamma family is unbounded above."""
        if self.family == "none":
            return 1.0
        from scipy.stats import gamma as gamma_dist

        return float(gamma_dist.ppf(q, a=self.shape, scale=self.scale))


def _log_sums(logparams: LogFactorSet, obs: ObservationSet) -> np.ndarray:
    if logparams.shape.dims != obs.shape.dims:
        raise DimensionError("observations and parameters have different shapes")
    cols = observation_columns(obs.indices, logparams.complex, logparams.shape)
    flat = np.concatenate([a.ravel() for a in logparams.logs])
    return flat[cols].sum(axis=1)


def _products(params: FactorSet, obs: ObservationSet) -> np.ndarray:
    if params.shape.dims != obs.shape.dims:
        raise DimensionError("observations and parameters have different shapes")
    cols = observation_columns(obs.indices, params.complex, params.shape)
    flat = np.concatenate([a.ravel() for a in params.factors])
    return flat[cols].prod(axis=1)


def empirical_risk(logparams: LogFactorSet, obs: ObservationSet) -> float:
    """Mean of ``-y * s + exp(s)`` over the observations."""
    s = _log_sums(logparams, obs)
    return float(np.mean(-obs.values * s + np.exp(s)))


def empirical_risk_theta(params: FactorSet, obs: ObservationSet) -> float:
    """Same risk in the multiplicative parametrization."""
    prod = _products(params, obs)
    if (prod <= 0).any():
        raise DomainError("factor products must be positive to evaluate the risk")
    return float(np.mean(-obs.values * np.log(prod) + prod))


def risk_gradient(logparams: LogFactorSet, obs: ObservationSet) -> list[np.ndarray]:
    """Gradient of the empirical risk in the log-coefficients.

    The coefficient for facet k at subindex X picks up ``(-y + exp(s)) / n``
    from exactly the observations whose facet-k restriction equals X.
    """
    s = _log_sums(logparams, obs)
    resid = (-obs.values + np.exp(s)) / obs.n
    cols = observation_columns(obs.indices, logparams.complex, logparams.shape)
    offsets, sizes = coefficient_layout(logparams.complex, logparams.shape)
    out = []
    for k, arr in enumerate(logparams.logs):
        local = cols[:, k] - offsets[k]
        g = np.bincount(local, weights=resid, minlength=sizes[k])
        out.append(g.reshape(arr.shape))
    return out


def risk_hessian_vector(logparams: LogFactorSet, obs: ObservationSet, vec: list[np.ndarray]) -> list[np.ndarray]:
    """Matrix-free Hessian action on a coefficient-shaped direction."""
    s = _log_sums(logparams, obs)
    cols = observation_columns(obs.indices, logparams.complex, logparams.shape)
    flat_vec = np.concatenate([np.asarray(v, dtype=float).ravel() for v in vec])
    dot = flat_vec[cols].sum(axis=1)
    weights = np.exp(s) * dot / obs.n
    offsets, sizes = coefficient_layout(logparams.complex, logparams.shape)
    out = []
    for k, arr in enumerate(logparams.logs):
        local = cols[:, k] - offsets[k]
        h = np.bincount(local, weights=weights, minlength=sizes[k])
        out.append(h.reshape(arr.shape))
    return out


def risk_hessian(logparams: LogFactorSet, obs: ObservationSet, max_dim: int = 2000) -> np.ndarray:
    """Dense Hessian of the empirical risk; guarded by a size cap."""
    offsets, sizes = coefficient_layout(logparams.complex, logparams.shape)
    rho = int(sizes.sum())
    if rho > max_dim:
        raise DimensionError(f"dense Hessian disabled for {rho} coefficients (> {max_dim})")
    s = _log_sums(logparams, obs)
    w = np.exp(s) / obs.n
    cols = observation_columns(obs.indices, logparams.complex, logparams.shape)
    H = np.zeros((rho, rho))
    m = logparams.complex.num_facets
    for a in range(m):
        for b in range(m):
            np.add.at(H, (cols[:, a], cols[:, b]), w)
    return H


def squared_loss(params: FactorSet, obs: ObservationSet) -> float:
    """Mean squared residual between observations and factor products."""
    prod = _products(params, obs)
    return float(np.mean((obs.values - prod) ** 2))


def prediction_error(truth: DenseTensor, fitted) -> float:
    """Mean squared entry error over the whole tensor."""
    if isinstance(fitted, DenseTensor):
        approx = fitted
    else:
        approx = fitted.dense()
    if approx.shape.dims != truth.shape.dims:
        raise DimensionError("truth and fit have different shapes")
    return float(np.mean((truth.entries - approx.entries) ** 2))


def loss_equivalence_constants(mu: float, M: float) -> tuple[float, float, float, float]:
    """Constants (a_l, b_l, a_u, b_u) sandwiching the risk by the squared loss.

    Valid when observations and factor products lie in [1/(mu*M), mu*M]:
    ``a_l * L + b_l <= R <= a_u * L + b_u``.
    """
    c = mu * M
    a_l = 1.0 / (2.0 * c**3)
    b_l = -c * np.log(c) + 1.0 / c
    a_u = c**3 / 2.0
    b_u = np.log(c) / c + c
    return a_l, float(b_l), a_u, float(b_u)


def read_observations(path, dims, allow_zero: bool = False) -> ObservationSet:
    """Read the observation CSV (header x1..xp,y; 1-based integer indices)."""
    shape = TensorShape(tuple(dims))
    p = shape.order
    expected = [f"x{j}" for j in range(1, p + 1)] + ["y"]
    rows = []
    vals = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DimensionError(f"{path}: empty observation file")
        header = [h.strip() for h in header]
        if header != expected:
            missing = [c for c in expected if c not in header]
            if missing:
                raise DimensionError(f"{path}: missing column(s) {missing}, expected {expected}")
            raise DimensionError(f"{path}: columns {header} are not in the order {expected}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != p + 1:
                raise DimensionError(f"{path}:{lineno}: expected {p + 1} fields, got {len(row)}")
            try:
                idx = [int(v) for v in row[:p]]
                y = float(row[p])
            except ValueError as exc:
                raise DimensionError(f"{path}:{lineno}: {exc}") from exc
            for j, (v, r) in enumerate(zip(idx, shape.dims), start=1):
                if not 1 <= v <= r:
                    raise DimensionError(f"{path}:{lineno}: x{j}={v} outside [1, {r}]")
            if y < 0 or (y == 0 and not allow_zero):
                raise DomainError(f"{path}:{lineno}: y must be positive, got {y}")
            rows.append(idx)
            vals.append(y)
    if not rows:
        raise DimensionError(f"{path}: no observation rows")
    return ObservationSet(shape, np.asarray(rows), np.asarray(vals), allow_zero)


def write_observations(obs: ObservationSet, path) -> None:
    p = obs.shape.order
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j}" for j in range(1, p + 1)] + ["y"])
        for row, y in zip(obs.indices, obs.values):
            writer.writerow([int(v) for v in row] + [repr(float(y))])
