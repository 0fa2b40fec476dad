"""Interior-point solver for the convex log-coefficient fitting problem.

The empirical generalized-I-divergence risk is minimized over the feasible
set Phi (per-facet log-bound witnesses eta/nu plus box constraints) after
lifting each exponential into an epigraph variable, so the barrier never
evaluates an exponential.  A primal path-following Newton method follows the
central path; the self-concordant barrier parameter divided by the path
parameter certifies the objective gap.  A feasibility-guarded Newton polish
on the smooth objective then tightens interior optima.

Observations are grouped by unique multi-index first, which leaves one
epigraph variable per distinct observed cell and keeps the Newton system at
``rho + 2m + #cells`` (plus ``rho`` for the l1-lifted sparse variant).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import (
    LogFactorSet,
    PartitionComplex,
    coefficient_layout,
    observation_columns,
)
from .risk import ObservationSet, empirical_risk, risk_gradient


class ConfigurationError(ValueError):
    """The solve options are inconsistent (e.g. M <= 1)."""


@dataclass
class SolveOptions:
    """Tuning knobs for the interior-point solve.

    ``M`` defaults to max(2, 1.5 * max y), a heuristic standing in for the
    unknown entry bound.  ``l1_budget`` switches on the sparse variant.
    ``seed`` only matters for the perturbed-restart fallback.
    """

    epsilon: float = 1e-6
    max_iterations: int = 5000
    barrier_mu_growth: float = 10.0
    M: float | None = None
    l1_budget: float | None = None
    seed: int = 0

    def validate(self) -> None:
        if self.epsilon <= 0:
            raise ConfigurationError("epsilon must be positive")
        if self.barrier_mu_growth <= 1:
            raise ConfigurationError("barrier_mu_growth must exceed 1")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be at least 1")
        if self.M is not None and self.M <= 1.0:
            raise ConfigurationError(f"bound M must exceed 1, got {self.M}")
        if self.l1_budget is not None and self.l1_budget < 0:
            raise ConfigurationError("l1_budget must be nonnegative")


@dataclass
class SolveReport:
    """Solution with its optimality certificate.

    ``converged`` implies both residuals are at most epsilon.  ``pinned``
    counts coefficients never touched by an observation; they are held at
    log-value 0 and the report is flagged under-determined.
    """

    logparams: LogFactorSet
    objective: float
    kkt_residual: float
    feasibility_residual: float
    iterations: int
    converged: bool
    under_determined: bool = False
    pinned: int = 0


def _default_bound(values: np.ndarray) -> float:
    top = float(values.max()) if values.size else 1.0
    return max(2.0, 1.5 * top)


class _Cells:
    """Observations grouped by unique multi-index."""

    def __init__(self, obs: ObservationSet, complex: PartitionComplex):
        complex.validate_for(obs.shape)
        cols = observation_columns(obs.indices, complex, obs.shape)
        uniq, inverse = np.unique(cols, axis=0, return_inverse=True)
        counts = np.bincount(inverse, minlength=uniq.shape[0]).astype(float)
        sums = np.bincount(inverse, weights=obs.values, minlength=uniq.shape[0])
        self.cols = uniq                      # (nc, m) global coefficient ids
        self.weight = counts / obs.n          # w_c
        self.ybar = sums / counts             # mean observed value per cell
        offsets, sizes = coefficient_layout(complex, obs.shape)
        self.offsets, self.sizes = offsets, sizes
        self.rho = int(sizes.sum())
        observed = np.zeros(self.rho, dtype=bool)
        observed[np.unique(uniq)] = True
        self.observed = observed
        self.free_ids = np.flatnonzero(observed)
        remap = -np.ones(self.rho, dtype=np.int64)
        remap[self.free_ids] = np.arange(self.free_ids.size)
        self.fcols = remap[uniq]              # (nc, m) free-space columns
        facet_of = np.empty(self.rho, dtype=np.int64)
        for k in range(len(sizes)):
            facet_of[offsets[k] : offsets[k] + sizes[k]] = k
        self.facet_of_free = facet_of[self.free_ids]
        m = complex.num_facets
        self.pinned_per_facet = np.array(
            [np.sum(~observed[offsets[k] : offsets[k] + sizes[k]]) for k in range(m)]
        )


class _BarrierProgram:
    """Lifted barrier problem; the epigraph block is eliminated analytically.

    Layout of z: [u (nf), eta (m), nu (m), w (nf, sparse only), t (nc)].
    The t-block of the barrier Hessian is diagonal and couples only to u, so
    each Newton step solves a dense system of size nf + 2m (+ nf sparse).
    """

    def __init__(self, cells: _Cells, m: int, M: float, l1: float | None):
        self.cells = cells
        self.m = m
        self.logM = math.log(M)
        self.l1 = l1
        self.nf = cells.free_ids.size
        self.nc = cells.cols.shape[0]
        nf, nc = self.nf, self.nc
        self.iu = np.arange(nf)
        self.ie = nf + np.arange(m)
        self.iv = nf + m + np.arange(m)
        if l1 is not None:
            self.iw = nf + 2 * m + np.arange(nf)
            self.q = 2 * nf + 2 * m
        else:
            self.iw = None
            self.q = nf + 2 * m
        self.it = self.q + np.arange(nc)
        self.size = self.q + nc
        self.has_pinned = (cells.pinned_per_facet > 0).astype(float)
        # objective: sum_c w_c (-ybar_c s_c + t_c)
        c = np.zeros(self.size)
        yw = cells.weight * cells.ybar
        for k in range(m):
            np.add.at(c, cells.fcols[:, k], -yw)
        c[self.it] = cells.weight
        self.c = c
        self.theta = (
            2 * nc + 4 * nf + 2 + 4 * m + 2 * int(self.has_pinned.sum())
            + (2 * nf + 1 if l1 is not None else 0)
        )

    def initial_point(self, t0: float) -> np.ndarray:
        z = np.zeros(self.size)
        z[self.ie] = -self.logM / (2 * self.m)
        z[self.iv] = self.logM / (2 * self.m)
        z[self.it] = t0
        if self.iw is not None:
            z[self.iw] = min(self.l1, 4 * self.logM * self.nf) / (2 * self.nf)
        return z

    def _args(self, z):
        """All barrier arguments; every entry must be strictly positive."""
        u, eta, nu, t = z[self.iu], z[self.ie], z[self.iv], z[self.it]
        fac = self.cells.facet_of_free
        s = u[self.cells.fcols].sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            d = np.where(t > 0, np.log(np.maximum(t, 1e-300)) - s, -1.0)
        pieces = [
            d,
            t,
            u - eta[fac],
            nu[fac] - u,
            np.array([self.logM + eta.sum(), self.logM - nu.sum()]),
            2 * self.logM - u,
            2 * self.logM + u,
            2 * self.logM - eta,
            2 * self.logM + eta,
            2 * self.logM - nu,
            2 * self.logM + nu,
        ]
        if self.has_pinned.any():
            mask = self.has_pinned > 0
            pieces.append(-eta[mask])
            pieces.append(nu[mask])
        if self.iw is not None:
            w = z[self.iw]
            pieces.append(w - u)
            pieces.append(w + u)
            pieces.append(np.array([self.l1 - w.sum()]))
        return pieces

    def feasible(self, z) -> bool:
        return all((a > 0).all() for a in self._args(z))

    def merit(self, z, tau) -> float:
        args = self._args(z)
        return tau * float(self.c @ z) - sum(float(np.log(a).sum()) for a in args)

    def newton_step(self, z, tau):
        """One Newton direction via Schur elimination of the epigraph block."""
        nf, m, nc, q = self.nf, self.m, self.nc, self.q
        u, eta, nu, t = z[self.iu], z[self.ie], z[self.iv], z[self.it]
        fac = self.cells.facet_of_free
        fcols = self.cells.fcols
        gx = tau * self.c[:q].copy()
        gt = tau * self.c[self.it].copy()
        Hxx = np.zeros((q, q))

        s = u[fcols].sum(axis=1)
        d = np.log(t) - s
        r = 1.0 / d
        rr = r * r
        for k in range(m):
            np.add.at(gx, fcols[:, k], r)
        gt += -r / t - 1.0 / t
        # Schur complement of the diagonal t-block: per-cell coefficient on a a^T
        Dt = (rr + r + 1.0) / (t * t)
        ccoef = rr * (r + 1.0) / (rr + r + 1.0)
        for k1 in range(m):
            for k2 in range(m):
                np.add.at(Hxx, (fcols[:, k1], fcols[:, k2]), ccoef)

        a1 = u - eta[fac]
        a2 = nu[fac] - u
        g1, g2 = 1.0 / a1, 1.0 / a2
        gx[self.iu] += -g1 + g2
        gx[self.ie] += np.bincount(fac, weights=g1, minlength=m)
        gx[self.iv] += -np.bincount(fac, weights=g2, minlength=m)
        Hxx[self.iu, self.iu] += g1 * g1 + g2 * g2
        np.add.at(Hxx, (self.iu, self.ie[fac]), -g1 * g1)
        np.add.at(Hxx, (self.ie[fac], self.iu), -g1 * g1)
        np.add.at(Hxx, (self.iu, self.iv[fac]), -g2 * g2)
        np.add.at(Hxx, (self.iv[fac], self.iu), -g2 * g2)
        Hxx[self.ie, self.ie] += np.bincount(fac, weights=g1 * g1, minlength=m)
        Hxx[self.iv, self.iv] += np.bincount(fac, weights=g2 * g2, minlength=m)

        sl = self.logM + eta.sum()
        su = self.logM - nu.sum()
        gx[self.ie] += -1.0 / sl
        gx[self.iv] += 1.0 / su
        Hxx[np.ix_(self.ie, self.ie)] += 1.0 / sl**2
        Hxx[np.ix_(self.iv, self.iv)] += 1.0 / su**2

        b1 = 2 * self.logM - u
        b2 = 2 * self.logM + u
        gx[self.iu] += 1.0 / b1 - 1.0 / b2
        Hxx[self.iu, self.iu] += 1.0 / b1**2 + 1.0 / b2**2
        for idx, val in ((self.ie, eta), (self.iv, nu)):
            p1 = 2 * self.logM - val
            p2 = 2 * self.logM + val
            gx[idx] += 1.0 / p1 - 1.0 / p2
            Hxx[idx, idx] += 1.0 / p1**2 + 1.0 / p2**2

        if self.has_pinned.any():
            mask = self.has_pinned > 0
            gx[self.ie[mask]] += -1.0 / eta[mask]
            Hxx[self.ie[mask], self.ie[mask]] += 1.0 / eta[mask] ** 2
            gx[self.iv[mask]] += -1.0 / nu[mask]
            Hxx[self.iv[mask], self.iv[mask]] += 1.0 / nu[mask] ** 2

        if self.iw is not None:
            w = z[self.iw]
            c1 = w - u
            c2 = w + u
            q1, q2 = 1.0 / c1, 1.0 / c2
            gx[self.iu] += q1 - q2
            gx[self.iw] += -q1 - q2
            Hxx[self.iu, self.iu] += q1 * q1 + q2 * q2
            Hxx[self.iw, self.iw] += q1 * q1 + q2 * q2
            Hxx[self.iu, self.iw] += -q1 * q1 + q2 * q2
            Hxx[self.iw, self.iu] += -q1 * q1 + q2 * q2
            sb = self.l1 - w.sum()
            gx[self.iw] += 1.0 / sb
            Hxx[np.ix_(self.iw, self.iw)] += 1.0 / sb**2

        # reduced right-hand side: -gx + B D^-1 gt, with B columns -rr/t on a_c
        bcoef = -rr / t
        rhs = -gx
        lift = bcoef * gt / Dt
        for k in range(m):
            np.add.at(rhs, fcols[:, k], lift)
        dx = _solve_spd(Hxx, rhs)
        adx = dx[fcols].sum(axis=1)
        dt = (-gt - bcoef * adx) / Dt
        delta = np.concatenate([dx, dt])
        dec_sq = float(-(gx @ dx + gt @ dt))
        return delta, math.sqrt(max(dec_sq, 0.0))

    def center(self, z, tau, tol, budget):
        """Backtracking Newton to decrement <= tol.  Returns (z, dec, used, stalled)."""
        used = 0
        dec = math.inf
        while used < budget:
            delta, dec = self.newton_step(z, tau)
            if dec <= tol:
                return z, dec, used, False
            base = self.merit(z, tau)
            alpha = 1.0
            moved = False
            for _ in range(60):
                cand = z + alpha * delta
                if self.feasible(cand) and self.merit(cand, tau) <= base - 0.01 * alpha * dec * dec:
                    z, moved = cand, True
                    break
                alpha *= 0.5
            used += 1
            if not moved:
                return z, dec, used, True
        return z, dec, used, False


def _solve_spd(H, rhs):
    # Jacobi-equilibrated solve: barrier Hessians mix curvature scales of
    # 1e20 near active constraints, and a raw ridge would swamp the small
    # block; gauge rank-deficiency is absorbed by the merit/feasibility guards
    dinv = 1.0 / np.sqrt(np.maximum(np.abs(np.diag(H)), 1e-300))
    Hs = H * dinv[:, None] * dinv[None, :]
    rs = rhs * dinv
    eye = np.eye(H.shape[0])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        for bump in (0.0, 1e-13, 1e-10, 1e-7):
            try:
                return scipy.linalg.solve(Hs + bump * eye, rs, assume_a="pos") * dinv
            except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
                continue
        return np.linalg.lstsq(Hs, rs, rcond=None)[0] * dinv


def _certified_gap(theta: float, tau: float, dec: float) -> float:
    if not math.isfinite(dec) or dec >= 1.0:
        return math.inf
    return (theta + dec * (dec + math.sqrt(theta)) / (1.0 - dec)) / tau


def _phi_violation(u_full, eta, nu, facet_slices, logM, l1=None) -> float:
    worst = 0.0
    for k, sl in enumerate(facet_slices):
        coeffs = u_full[sl]
        worst = max(worst, float(eta[k] - coeffs.min()), float(coeffs.max() - nu[k]))
    worst = max(worst, float(-logM - eta.sum()), float(nu.sum() - logM))
    worst = max(worst, float(np.max(np.abs(u_full)) - 2 * logM))
    worst = max(worst, float(np.max(np.abs(eta)) - 2 * logM), float(np.max(np.abs(nu)) - 2 * logM))
    if l1 is not None:
        worst = max(worst, float(np.sum(np.abs(u_full)) - l1))
    return max(worst, 0.0)


def _polish(cells: _Cells, u, eta, nu, logM, l1, max_steps=40):
    """Guarded Newton descent on the smooth risk; only accepts feasible improvements."""
    nf = u.size
    fcols = cells.fcols
    m = fcols.shape[1]
    fac = cells.facet_of_free
    has_pinned = cells.pinned_per_facet > 0

    def risk(uv):
        s = uv[fcols].sum(axis=1)
        return float(np.sum(cells.weight * (-cells.ybar * s + np.exp(s))))

    def derive_bounds(uv):
        lo = np.full(m, np.inf)
        hi = np.full(m, -np.inf)
        np.minimum.at(lo, fac, uv)
        np.maximum.at(hi, fac, uv)
        lo = np.where(has_pinned, np.minimum(lo, 0.0), lo)
        hi = np.where(has_pinned, np.maximum(hi, 0.0), hi)
        return lo, hi

    def feasible(uv, lo, hi):
        tol = 1e-12
        if np.max(np.abs(uv)) > 2 * logM + tol:
            return False
        if lo.sum() < -logM - tol or hi.sum() > logM + tol:
            return False
        if l1 is not None and np.sum(np.abs(uv)) > l1 + tol:
            return False
        return True

    current = risk(u)
    for _ in range(max_steps):
        s = u[fcols].sum(axis=1)
        es = np.exp(s)
        residw = cells.weight * (es - cells.ybar)
        g = np.zeros(nf)
        for k in range(m):
            np.add.at(g, fcols[:, k], residw)
        if np.max(np.abs(g)) <= 1e-13 * (1.0 + abs(current)):
            break
        H = np.zeros((nf, nf))
        wexp = cells.weight * es
        for k1 in range(m):
            for k2 in range(m):
                np.add.at(H, (fcols[:, k1], fcols[:, k2]), wexp)
        ridge = 1e-12 * max(float(np.max(np.diag(H))), 1.0)
        delta = _solve_spd(H + ridge * np.eye(nf), -g)
        accepted = False
        alpha = 1.0
        for _ in range(30):
            cand = u + alpha * delta
            lo, hi = derive_bounds(cand)
            if feasible(cand, lo, hi):
                value = risk(cand)
                if value < current - 1e-16 * (1.0 + abs(current)):
                    u, eta, nu, current = cand, lo, hi, value
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            break
    return u, eta, nu


def _trivial_zero_report(obs, complex, M, opts) -> SolveReport:
    offsets, sizes = coefficient_layout(complex, obs.shape)
    logs = [np.zeros(tuple(d)) for d in complex.facet_dims(obs.shape)]
    m = complex.num_facets
    logparams = LogFactorSet(complex, obs.shape, logs, M, np.zeros(m), np.zeros(m))
    return SolveReport(
        logparams=logparams,
        objective=empirical_risk(logparams, obs),
        kkt_residual=0.0,
        feasibility_residual=0.0,
        iterations=0,
        converged=True,
        under_determined=obs.n < m,
        pinned=0,
    )


def _solve(obs: ObservationSet, complex: PartitionComplex, opts: SolveOptions, l1):
    opts.validate()
    M = opts.M if opts.M is not None else _default_bound(obs.values)
    if M <= 1.0:
        raise ConfigurationError(f"bound M must exceed 1, got {M}")
    if l1 is not None and l1 == 0.0:
        return _trivial_zero_report(obs, complex, M, opts)

    cells = _Cells(obs, complex)
    m = complex.num_facets
    prog = _BarrierProgram(cells, m, M, l1)
    t0 = max(2.0, 2.0 * float(cells.ybar.max()))
    z = prog.initial_point(t0)
    if not prog.feasible(z):
        raise ConfigurationError("no strictly feasible starting point; check M and l1_budget")

    eps = opts.epsilon
    tau = 1.0
    used_total = 0
    converged = False
    cert = math.inf
    while used_total < opts.max_iterations:
        z, dec, used, stalled = prog.center(z, tau, 0.25, opts.max_iterations - used_total)
        used_total += used
        cert = _certified_gap(prog.theta, tau, dec)
        if cert <= 0.5 * eps:
            converged = True
            break
        if stalled:
            converged = cert <= eps
            break
        tau *= opts.barrier_mu_growth

    u = z[prog.iu].copy()
    eta = z[prog.ie].copy()
    nu = z[prog.iv].copy()
    u, eta, nu = _polish(cells, u, eta, nu, prog.logM, l1)

    u_full = np.zeros(cells.rho)
    u_full[cells.free_ids] = u
    offsets, sizes = cells.offsets, cells.sizes
    facet_slices = [slice(offsets[k], offsets[k] + sizes[k]) for k in range(m)]
    logs = []
    for k, dims in enumerate(complex.facet_dims(obs.shape)):
        logs.append(u_full[facet_slices[k]].reshape(dims))
    logparams = LogFactorSet(complex, obs.shape, logs, M, eta, nu)
    feas = _phi_violation(u_full, eta, nu, facet_slices, prog.logM, l1)
    pinned = int(cells.rho - cells.free_ids.size)
    return SolveReport(
        logparams=logparams,
        objective=empirical_risk(logparams, obs),
        kkt_residual=cert,
        feasibility_residual=feas,
        iterations=used_total,
        converged=converged and feas <= eps,
        under_determined=(obs.n < m) or pinned > 0,
        pinned=pinned,
    )


def solve_convex(obs: ObservationSet, complex: PartitionComplex, opts: SolveOptions | None = None) -> SolveReport:
    """Epsilon-solution of the convex fit over Phi for the given facets."""
    opts = opts if opts is not None else SolveOptions()
    return _solve(obs, complex, opts, None)


def solve_sparse(obs: ObservationSet, complex: PartitionComplex, opts: SolveOptions) -> SolveReport:
    """Epsilon-solution with the additional l1 budget on the log-coefficients."""
    if opts.l1_budget is None:
        raise ConfigurationError("solve_sparse needs opts.l1_budget")
    return _solve(obs, complex, opts, float(opts.l1_budget))


def check_epsilon_solution(
    report: SolveReport,
    obs: ObservationSet,
    complex: PartitionComplex,
    opts: SolveOptions,
) -> bool:
    """Independent audit of the epsilon-solution contract.

    Recomputes the Phi constraint violations and bounds the objective gap by
    the linearization gap ``max over Phi of grad . (U - V)``, evaluated with
    an LP.  Both must be at most epsilon.
    """
    eps = opts.epsilon
    lp = report.logparams
    logM = math.log(lp.bound)
    l1 = opts.l1_budget
    offsets, sizes = coefficient_layout(complex, obs.shape)
    u_full = np.concatenate([a.ravel() for a in lp.logs])
    m = complex.num_facets
    facet_slices = [slice(offsets[k], offsets[k] + sizes[k]) for k in range(m)]
    feas = _phi_violation(u_full, lp.eta, lp.nu, facet_slices, logM, l1)
    if max(feas, report.feasibility_residual) > eps:
        return False

    grad = np.concatenate([g.ravel() for g in risk_gradient(lp, obs)])
    cells = _Cells(obs, complex)
    free = cells.free_ids
    has_pinned = cells.pinned_per_facet > 0
    nf = free.size
    g_free = grad[free]
    fac = cells.facet_of_free

    from scipy.optimize import linprog

    split = l1 is not None
    nvar = nf + 2 * m + (2 * nf if split else 0)
    cost = np.zeros(nvar)
    cost[:nf] = g_free
    rows = []
    rhs = []

    def row(entries):
        r = np.zeros(nvar)
        for idx, val in entries:
            r[idx] += val
        rows.append(r)

    for j in range(nf):
        k = fac[j]
        row([(nf + k, 1.0), (j, -1.0)])       # eta_k - v_j <= 0
        rhs.append(0.0)
        row([(j, 1.0), (nf + m + k, -1.0)])   # v_j - nu_k <= 0
        rhs.append(0.0)
    for k in range(m):
        if has_pinned[k]:
            row([(nf + k, 1.0)])              # eta_k <= 0
            rhs.append(0.0)
            row([(nf + m + k, -1.0)])         # -nu_k <= 0
            rhs.append(0.0)
    row([(nf + k, -1.0) for k in range(m)])   # -sum eta <= log M
    rhs.append(logM)
    row([(nf + m + k, 1.0) for k in range(m)])  # sum nu <= log M
    rhs.append(logM)

    A_eq = None
    b_eq = None
    if split:
        A_eq = np.zeros((nf, nvar))
        for j in range(nf):
            A_eq[j, j] = 1.0
            A_eq[j, nf + 2 * m + j] = -1.0
            A_eq[j, nf + 2 * m + nf + j] = 1.0
        b_eq = np.zeros(nf)
        budget = np.zeros(nvar)
        budget[nf + 2 * m :] = 1.0
        rows.append(budget)
        rhs.append(float(l1))

    bounds = [(-2 * logM, 2 * logM)] * (nf + 2 * m)
    if split:
        bounds += [(0.0, 2 * logM)] * (2 * nf)
    res = linprog(
        cost,
        A_ub=np.vstack(rows),
        b_ub=np.asarray(rhs),
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=bounds,
        method="highs",
    )
    if not res.success:
        return False
    gap = float(g_free @ u_full[free]) - float(res.fun)
    return gap <= eps
