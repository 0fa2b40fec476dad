"""Positive tensors, facet complexes, and multiplicative factorizations.

A positive tensor of order ``p`` is a dense array with entries in
``[1/M, M]`` for some bound ``M > 1``.  A factorization groups the index
positions ``1..p`` into facets and assigns one coefficient array per facet;
the tensor value at a multi-index is the product of one coefficient from
each facet array.  When the facets partition the positions this is a tensor
product of lower-order blocks, and a two-position facet of matrix rank ``q``
expands into ``q`` rank-1 components.

All external indices are 1-based.  Dense entries are stored flat in
row-major order (last index fastest).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """An index or shape disagrees with the declared dimensions."""


class DomainError(ValueError):
    """A value is outside the domain an operation requires (e.g. nonpositive)."""


class FactorBoundError(ValueError):
    """Entries escape the bound box implied by the tensor bound M."""


class IncorrectComplexError(ValueError):
    """The facet structure cannot reproduce the tensor within tolerance."""


class UnsupportedFacetError(ValueError):
    """A facet shape is not supported by the requested operation."""


@dataclass(frozen=True)
class TensorShape:
    """Dimensions ``r_1 .. r_p`` of an order-p tensor."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(r) for r in self.dims)
        if len(dims) < 1 or any(r < 1 for r in dims):
            raise DimensionError(f"dimensions must be positive integers, got {self.dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def order(self) -> int:
        return len(self.dims)

    @property
    def total_entries(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    def check_index(self, x) -> tuple[int, ...]:
        """Validate a 1-based multi-index and return it as a tuple."""
        x = tuple(int(v) for v in x)
        if len(x) != self.order:
            raise DimensionError(f"index {x} has length {len(x)}, expected {self.order}")
        for pos, (v, r) in enumerate(zip(x, self.dims), start=1):
            if not 1 <= v <= r:
                raise DimensionError(f"coordinate {v} at position {pos} outside [1, {r}]")
        return x

    def all_indices(self):
        """Iterate all 1-based multi-indices in row-major order."""
        for zero_based in np.ndindex(*self.dims):
            yield tuple(int(c) + 1 for c in zero_based)


@dataclass
class DenseTensor:
    """Dense tensor with a flat row-major entry array."""

    shape: TensorShape
    entries: np.ndarray

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float).ravel()
        if self.entries.size != self.shape.total_entries:
            raise DimensionError(
                f"{self.entries.size} entries for shape {self.shape.dims} "
                f"(expected {self.shape.total_entries})"
            )

    @classmethod
    def from_array(cls, arr) -> "DenseTensor":
        arr = np.asarray(arr, dtype=float)
        return cls(TensorShape(arr.shape), arr.ravel(order="C"))

    def to_array(self) -> np.ndarray:
        return self.entries.reshape(self.shape.dims)

    def value_at(self, x) -> float:
        x = self.shape.check_index(x)
        flat = np.ravel_multi_index(tuple(v - 1 for v in x), self.shape.dims)
        return float(self.entries[flat])

    def positivity_bound(self) -> float:
        """Smallest M > 1 with all entries in [1/M, M]."""
        lo, hi = float(self.entries.min()), float(self.entries.max())
        if lo <= 0:
            raise DomainError("tensor has nonpositive entries, no positivity bound exists")
        return max(hi, 1.0 / lo, 1.0 + 1e-12)


@dataclass(frozen=True)
class PartitionComplex:
    """Ordered facets of a simplicial complex over index positions 1..p.

    ``kind`` is "partition" when the facets are pairwise disjoint (the case
    used by the completion pipeline) and "general" otherwise.  Facets are
    stored sorted; no facet may contain another.
    """

    facets: tuple[tuple[int, ...], ...]
    kind: str = "partition"

    def __post_init__(self):
        if self.kind not in ("partition", "general"):
            raise ValueError(f"unknown complex kind {self.kind!r}")
        norm = []
        for f in self.facets:
            f = tuple(sorted(int(v) for v in f))
            if not f or any(v < 1 for v in f):
                raise DimensionError(f"facet {f} must be a nonempty set of positions >= 1")
            if len(set(f)) != len(f):
                raise DimensionError(f"facet {f} repeats a position")
            norm.append(f)
        if not norm:
            raise DimensionError("a complex needs at least one facet")
        for a, b in itertools.permutations(range(len(norm)), 2):
            if set(norm[a]) <= set(norm[b]):
                raise DimensionError(f"facet {norm[a]} is contained in facet {norm[b]}")
        if self.kind == "partition":
            seen: set[int] = set()
            for f in norm:
                if seen & set(f):
                    raise DimensionError("partition facets must be pairwise disjoint")
                seen |= set(f)
        object.__setattr__(self, "facets", tuple(norm))

    @property
    def num_facets(self) -> int:
        return len(self.facets)

    @property
    def positions(self) -> set[int]:
        return set().union(*(set(f) for f in self.facets))

    def validate_for(self, shape: TensorShape) -> None:
        p = shape.order
        if max(self.positions) > p:
            raise DimensionError(f"facet position {max(self.positions)} exceeds order {p}")
        if self.kind == "partition" and self.positions != set(range(1, p + 1)):
            raise DimensionError("partition facets must cover every index position")

    def facet_dims(self, shape: TensorShape) -> list[tuple[int, ...]]:
        return [tuple(shape.dims[j - 1] for j in f) for f in self.facets]

    @classmethod
    def singletons(cls, p: int) -> "PartitionComplex":
        return cls(tuple((j,) for j in range(1, p + 1)))

    @classmethod
    def single_facet(cls, p: int) -> "PartitionComplex":
        return cls((tuple(range(1, p + 1)),))

    @classmethod
    def from_lists(cls, facets, kind: str = "partition") -> "PartitionComplex":
        return cls(tuple(tuple(f) for f in facets), kind)


@dataclass
class FactorSet:
    """One positive coefficient array per facet, with the bound M."""

    complex: PartitionComplex
    shape: TensorShape
    factors: list[np.ndarray]
    bound: float

    def __post_init__(self):
        self.complex.validate_for(self.shape)
        if self.bound <= 1.0:
            raise DomainError(f"bound M must exceed 1, got {self.bound}")
        if len(self.factors) != self.complex.num_facets:
            raise DimensionError("one factor array per facet is required")
        expected = self.complex.facet_dims(self.shape)
        arrays = []
        for k, (arr, dims) in enumerate(zip(self.factors, expected)):
            arr = np.asarray(arr, dtype=float)
            if arr.shape != dims:
                raise DimensionError(
                    f"factor {k} has shape {arr.shape}, facet {self.complex.facets[k]} "
                    f"needs {dims}"
                )
            arrays.append(arr)
        self.factors = arrays

    def value_at(self, x) -> float:
        return eval_decomposition(self, x)

    def dense(self) -> DenseTensor:
        """Materialize the full tensor by broadcasting the facet factors."""
        dims = self.shape.dims
        full = np.ones(dims)
        for facet, arr in zip(self.complex.facets, self.factors):
            view_shape = tuple(dims[j - 1] if (j in facet) else 1 for j in range(1, len(dims) + 1))
            full = full * arr.reshape(view_shape)
        return DenseTensor.from_array(full)


@dataclass
class LogFactorSet:
    """Elementwise logarithm of a FactorSet, with per-facet log-bounds.

    ``eta[k] <= min(logs[k])`` and ``max(logs[k]) <= nu[k]`` witness the
    product bounds: ``sum(eta) >= -log M`` and ``sum(nu) <= log M``.
    """

    complex: PartitionComplex
    shape: TensorShape
    logs: list[np.ndarray]
    bound: float
    eta: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        self.logs = [np.asarray(a, dtype=float) for a in self.logs]
        self.eta = np.asarray(self.eta, dtype=float).ravel()
        self.nu = np.asarray(self.nu, dtype=float).ravel()
        m = self.complex.num_facets
        if len(self.logs) != m or self.eta.size != m or self.nu.size != m:
            raise DimensionError("logs, eta, nu must all have one entry per facet")

    def dense(self) -> DenseTensor:
        return exp_reparam(self).dense()


def eval_decomposition(params: FactorSet, x) -> float:
    """Product of one factor entry per facet at the multi-index ``x``."""
    x = params.shape.check_index(x)
    value = 1.0
    for facet, arr in zip(params.complex.facets, params.factors):
        value *= float(arr[tuple(x[j - 1] - 1 for j in facet)])
    return value


def effective_dimension(complex: PartitionComplex, shape: TensorShape) -> int:
    """Total coefficient count: sum over facets of the product of their dims."""
    complex.validate_for(shape)
    return int(sum(int(np.prod(d, dtype=np.int64)) for d in complex.facet_dims(shape)))


def coefficient_layout(complex: PartitionComplex, shape: TensorShape):
    """Flat layout of the stacked coefficient vector.

    Returns ``(offsets, sizes)`` where facet ``k`` occupies the slice
    ``offsets[k] : offsets[k] + sizes[k]`` with row-major order inside it.
    """
    sizes = [int(np.prod(d, dtype=np.int64)) for d in complex.facet_dims(shape)]
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int)
    return offsets, np.asarray(sizes, dtype=int)


def observation_columns(indices: np.ndarray, complex: PartitionComplex, shape: TensorShape) -> np.ndarray:
    """Map 1-based observation indices to flat coefficient ids, one column per facet."""
    offsets, _ = coefficient_layout(complex, shape)
    n = indices.shape[0]
    cols = np.empty((n, complex.num_facets), dtype=np.int64)
    for k, facet in enumerate(complex.facets):
        sub = tuple(indices[:, j - 1] - 1 for j in facet)
        dims = tuple(shape.dims[j - 1] for j in facet)
        cols[:, k] = offsets[k] + np.ravel_multi_index(sub, dims)
    return cols


def construct_exact_decomposition(
    tensor: DenseTensor,
    complex: PartitionComplex,
    M: float,
    rel_tol: float = 1e-9,
) -> FactorSet:
    """Peel an exact factorization out of a fully known tensor.

    Facets are processed in order; every stage anchors the not-yet-handled
    positions at the reference index (all ones, the lexicographically
    smallest), so each coefficient is a tensor value on the facet's
    reference slab divided by the already-fixed factors there.  For correct
    partitions this telescopes exactly and keeps every coefficient a ratio
    of at most two tensor entries, hence inside ``[M^-2, M^2]``; overlapping
    facet families telescope the same way.

    Raises IncorrectComplexError when the reconstruction misses any entry by
    more than ``rel_tol`` relative, and FactorBoundError when the input or
    the constructed factors escape their bound boxes.
    """
    complex.validate_for(tensor.shape)
    if M <= 1.0:
        raise DomainError(f"bound M must exceed 1, got {M}")
    arr = tensor.to_array()
    tol = 1e-12
    if arr.min() < 1.0 / M - tol or arr.max() > M + tol:
        raise FactorBoundError(f"tensor entries must lie in [1/{M}, {M}]")

    facets = complex.facets
    facet_dims = complex.facet_dims(tensor.shape)
    factors: list[np.ndarray] = []
    for j, (facet, fdims) in enumerate(zip(facets, facet_dims)):
        block = np.empty(fdims)
        for sub in np.ndindex(*fdims):
            anchor = [0] * tensor.shape.order
            for pos, value in zip(facet, sub):
                anchor[pos - 1] = value
            anchor = tuple(anchor)
            denom = 1.0
            for k in range(j):
                denom *= factors[k][tuple(anchor[pos - 1] for pos in facets[k])]
            block[sub] = arr[anchor] / denom
        factors.append(block)

    result = FactorSet(complex, tensor.shape, factors, M)
    recon = result.dense().to_array()
    rel = np.max(np.abs(recon - arr) / np.abs(arr))
    if rel > rel_tol:
        raise IncorrectComplexError(
            f"facets cannot reproduce the tensor (max relative error {rel:.3e})"
        )
    bound_tol = 1e-12 * M * M
    for k, f in enumerate(factors):
        if f.min() < 1.0 / M**2 - bound_tol or f.max() > M**2 + bound_tol:
            raise FactorBoundError(
                f"factor {k} escapes [M^-2, M^2] = [{M**-2:.3g}, {M**2:.3g}]"
            )
    return result


def partition_to_cp(params: FactorSet, rank_tol: float = 1e-12):
    """Expand a partition factorization with facets of size <= 2 into rank-1 terms.

    Matrix facets are split by SVD; the component count is the product of
    their matrix ranks.  Returns a list of components, each a list of ``p``
    mode vectors whose outer products sum to the factorization's tensor.
    """
    if params.complex.kind != "partition":
        raise UnsupportedFacetError("CP expansion needs a partition of the index positions")
    p = params.shape.order
    per_facet_terms = []
    for facet, arr in zip(params.complex.facets, params.factors):
        if len(facet) == 1:
            per_facet_terms.append([{facet[0]: arr.copy()}])
        elif len(facet) == 2:
            u, s, vt = np.linalg.svd(arr)
            rank = int(np.sum(s > rank_tol * max(s[0], 1.0)))
            terms = []
            for i in range(rank):
                terms.append({facet[0]: u[:, i] * s[i], facet[1]: vt[i, :].copy()})
            per_facet_terms.append(terms)
        else:
            raise UnsupportedFacetError(
                f"facet {facet} has {len(facet)} positions; CP expansion supports at most 2"
            )
    components = []
    for combo in itertools.product(*per_facet_terms):
        vectors: list[np.ndarray | None] = [None] * p
        for term in combo:
            for pos, vec in term.items():
                vectors[pos - 1] = vec
        components.append([v for v in vectors])
    return components


def log_reparam(params: FactorSet) -> LogFactorSet:
    """Elementwise log of the factors, with eta/nu set to per-facet min/max."""
    logs = []
    for k, arr in enumerate(params.factors):
        if arr.min() <= 0:
            raise DomainError(f"factor {k} has a nonpositive entry, log undefined")
        logs.append(np.log(arr))
    eta = np.array([a.min() for a in logs])
    nu = np.array([a.max() for a in logs])
    return LogFactorSet(params.complex, params.shape, logs, params.bound, eta, nu)


def exp_reparam(logparams: LogFactorSet) -> FactorSet:
    factors = [np.exp(a) for a in logparams.logs]
    return FactorSet(logparams.complex, logparams.shape, factors, logparams.bound)


def save_factor_set(params: FactorSet, path) -> None:
    """Write the fitted-model JSON: dims, facets, factors, M."""
    payload = {
        "dims": list(params.shape.dims),
        "facets": [list(f) for f in params.complex.facets],
        "factors": [f.tolist() for f in params.factors],
        "M": params.bound,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def _complex_kind(facets) -> str:
    flat = [v for f in facets for v in f]
    return "partition" if len(flat) == len(set(flat)) else "general"


def load_factor_set(path) -> FactorSet:
    with open(path) as fh:
        payload = json.load(fh)
    for key in ("dims", "facets", "factors"):
        if key not in payload:
            raise DimensionError(f"model file {path} is missing {key!r}")
    shape = TensorShape(tuple(payload["dims"]))
    complex = PartitionComplex.from_lists(payload["facets"], _complex_kind(payload["facets"]))
    factors = [np.asarray(f, dtype=float) for f in payload["factors"]]
    bound = float(payload.get("M", 0.0))
    if bound <= 1.0:
        flat = np.concatenate([f.ravel() for f in factors])
        bound = max(2.0, float(flat.max()) ** 2 if flat.max() > 0 else 2.0)
    return FactorSet(complex, shape, factors, bound)


def load_tensor_file(path):
    """Read a tensor spec file: dense entries or a facet factorization."""
    with open(path) as fh:
        payload = json.load(fh)
    if "dims" not in payload:
        raise DimensionError(f"tensor file {path} is missing 'dims'")
    shape = TensorShape(tuple(payload["dims"]))
    if "entries" in payload:
        entries = np.asarray(payload["entries"], dtype=float).ravel()
        return DenseTensor(shape, entries)
    if "facets" in payload and "factors" in payload:
        complex = PartitionComplex.from_lists(payload["facets"], _complex_kind(payload["facets"]))
        factors = [np.asarray(f, dtype=float) for f in payload["factors"]]
        bound = float(payload.get("M", 0.0))
        if bound <= 1.0:
            dense = FactorSet(complex, shape, factors, 2.0).dense()
            bound = dense.positivity_bound() * 1.5
        return FactorSet(complex, shape, factors, bound)
    raise DimensionError(f"tensor file {path} needs 'entries' or 'facets'+'factors'")
