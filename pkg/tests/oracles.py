"""Independent oracles used by the tests.

Everything here recomputes expected values from first principles (exhaustive
enumeration, closed-form conditional means, grid search, finite differences)
without touching the library's fitting or evaluation paths.
"""

from __future__ import annotations

import numpy as np


def exhaustive_fit_risk(dense: np.ndarray) -> float:
    """Mean of -psi*log(psi) + psi over all entries (risk at an exact fit)."""
    total = 0.0
    for value in dense.ravel():
        total += -value * np.log(value) + value
    return total / dense.size


def conditional_mean_gap(dense: np.ndarray, j: int, q: int):
    """Population risk gap of two 0-based axes under uniform exhaustive sampling.

    The coupled minimizer is the conditional mean on (x_j, x_q); the
    decoupled one is the product of marginal means over the global mean
    (derived from the alternating first-order conditions under independent
    uniform indices).  Returns (gap, coupled_risk, decoupled_risk).
    """
    dims = dense.shape
    p = len(dims)
    other = tuple(i for i in range(p) if i not in (j, q))
    pair_mean = dense.mean(axis=other)
    mean_j = dense.mean(axis=tuple(i for i in range(p) if i != j))
    mean_q = dense.mean(axis=tuple(i for i in range(p) if i != q))
    grand = dense.mean()
    risk_c = 0.0
    risk_d = 0.0
    for x in np.ndindex(*dims):
        y = dense[x]
        bc = pair_mean[x[j], x[q]]
        bd = mean_j[x[j]] * mean_q[x[q]] / grand
        risk_c += -y * np.log(bc) + bc
        risk_d += -y * np.log(bd) + bd
    n = dense.size
    return (risk_d - risk_c) / n, risk_c / n, risk_d / n


def scan_minimize_rank1(indices, values, dims, M, grid_step=1e-3, max_sweeps=300):
    """Brute-force best rank-1 log-fit over the feasible box.

    Coordinate-wise: a grid scan at ``grid_step`` lands near the minimum,
    then exact one-dimensional refinements (the coordinate restriction is
    a + b*exp(delta), minimized in closed form and clipped to the feasible
    interval) polish it.  Returns (coefficient vectors, risk value).
    """
    indices = np.asarray(indices)
    values = np.asarray(values, dtype=float)
    p = len(dims)
    logM = np.log(M)
    u = [np.zeros(r) for r in dims]
    n = values.size

    def s_vec():
        s = np.zeros(n)
        for k in range(p):
            s += u[k][indices[:, k] - 1]
        return s

    def risk():
        s = s_vec()
        return float(np.mean(-values * s + np.exp(s)))

    def interval(k, a):
        mins = [float(np.min(u[i])) for i in range(p)]
        maxs = [float(np.max(u[i])) for i in range(p)]
        smin_other = sum(mins[i] for i in range(p) if i != k)
        smax_other = sum(maxs[i] for i in range(p) if i != k)
        lo = max(-2 * logM, -logM - smin_other)
        hi = min(2 * logM, logM - smax_other)
        return lo, hi

    def coordinate_best(k, a, lo, hi, use_grid):
        mask = indices[:, k] == a + 1
        s = s_vec()
        s_other = s[mask] - u[k][a]
        fixed = float(np.sum(-values[~mask] * s[~mask] + np.exp(s[~mask])))
        fixed += float(np.sum(-values[mask] * s_other))
        A = float(np.sum(values[mask]))
        B = float(np.sum(np.exp(s_other)))
        candidates = []
        if use_grid and hi > lo:
            grid = np.arange(lo, hi + grid_step, grid_step)
            grid = grid[grid <= hi]
            vals = fixed - A * grid + B * np.exp(grid)
            candidates.append(float(grid[int(np.argmin(vals))]))
        if A > 0 and B > 0:
            candidates.append(min(max(np.log(A / B), lo), hi))
        else:
            candidates.append(lo)
        candidates.append(float(min(max(u[k][a], lo), hi)))
        scores = [fixed - A * c + B * np.exp(c) for c in candidates]
        return candidates[int(np.argmin(scores))]

    best = risk()
    for sweep in range(max_sweeps):
        for k in range(p):
            for a in range(dims[k]):
                lo, hi = interval(k, a)
                u[k][a] = coordinate_best(k, a, lo, hi, use_grid=(sweep == 0))
        now = risk()
        if best - now < 1e-14 * (1.0 + abs(best)):
            best = min(best, now)
            break
        best = now
    return u, best


def central_difference_gradient(fn, arrays, h=1e-6):
    """Central finite differences of ``fn`` over a list of coefficient arrays."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = fn()
            flat[i] = orig - h
            down = fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def random_product_tensor(rng, p_max=5, r_max=4, low=0.6, high=1.6):
    """Random partition, random positive facet blocks, and their product tensor.

    Returns (dims, facets (1-based lists), dense array).
    """
    p = int(rng.integers(2, p_max + 1))
    dims = tuple(int(rng.integers(2, r_max + 1)) for _ in range(p))
    positions = list(rng.permutation(p) + 1)
    facets = []
    while positions:
        take = int(rng.integers(1, min(3, len(positions)) + 1))
        facets.append(sorted(int(v) for v in positions[:take]))
        positions = positions[take:]
    facets.sort()
    dense = np.ones(dims)
    for facet in facets:
        block_dims = tuple(dims[j - 1] for j in facet)
        block = rng.uniform(low, high, size=block_dims)
        shape = tuple(dims[j - 1] if (j in facet) else 1 for j in range(1, p + 1))
        dense = dense * block.reshape(shape)
    return dims, facets, dense
