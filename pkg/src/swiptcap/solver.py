"""Capacity-achieving discrete input search with KKT certification.

For a fixed number of mass points m the entropy H(F) is maximised over
positions in [0, r_p] and probabilities on the simplex, subject to the
average-power constraint and either the delivered-power or the coverage
constraint. Many random starts are tried per m; the best candidate is
certified against the Lagrangian optimality conditions

    Phi(r) = h(r; F) - mu1 r^2 + mu2 c(r) - K,   K = H(F) - mu1 P_a + mu2 floor

(Phi = 0 on the support, Phi <= 0 on [0, r_p]), where c is g for the
delivered-power problem and Q(., A_l) - Q(., A_u) for the coverage problem.
If certification fails, m is increased by one.
"""

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, linprog, minimize, nnls

from .channel import (
    QUAD_TOL,
    DiscreteAmplitudeDistribution,
    entropy_terms,
    marginal_entropy_density,
)
from .constraints import _two_point_maximum, check_feasible

log = logging.getLogger(__name__)

PRUNE_PROB = 1e-6
MERGE_DIST = 1e-4
MULTIPLIER_FLOOR = -1e-12


@dataclass(frozen=True)
class SolverConfig:
    m_init: int = 2
    m_max: int = 12
    restarts_per_m: int = 50
    kkt_grid_size: int = 2000
    tol_eq: float = 1e-4
    tol_ineq: float = 1e-4
    tol_constraint: float = 1e-8
    tol_active: float = 1e-6
    max_iter: int = 150
    ftol: float = 1e-12
    polish_rounds: int = 3
    newton_steps: int = 15
    polish_below: float = 1e-2
    seed: int = 1

    def __post_init__(self):
        if self.m_init < 1 or self.m_max < self.m_init:
            raise ValueError("need 1 <= m_init <= m_max")
        if self.restarts_per_m < 1:
            raise ValueError("restarts_per_m must be >= 1")
        for name in ("tol_eq", "tol_ineq", "tol_constraint", "tol_active", "ftol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class KktReport:
    multipliers: tuple
    K_const: float
    max_support_residual: float
    max_grid_violation: float
    passed: bool
    argmax_r: float = math.nan
    underdetermined: bool = False
    distribution_points: tuple = ()


@dataclass
class Candidate:
    points: np.ndarray
    probs: np.ndarray
    H: float
    success: bool
    message: str
    nit: int
    seed: tuple = ()

    @property
    def distribution(self):
        return DiscreteAmplitudeDistribution(tuple(self.points), tuple(self.probs))


@dataclass
class Solution:
    problem: object
    distribution: DiscreteAmplitudeDistribution
    mi_nats: float
    kkt: KktReport
    m_used: int
    constraint_values: tuple
    trace: list = field(default_factory=list)
    config: SolverConfig = None

    @property
    def mi_bits(self):
        return self.mi_nats / math.log(2.0)


def entropy_gradient(F, tol=QUAD_TOL):
    """(dH/dp_i, dH/dr_i) for a discrete law; the p-block ignores the simplex."""
    _, h, dr = entropy_terms(F.r, F.p, tol=tol, with_position_grad=True)
    return h - 1.0, dr


# -- local search -----------------------------------------------------------


def _constraint_values(problem, r, p):
    return float(np.dot(p, r * r)), float(np.dot(p, problem.extra_constraint(r)))


def _violation(problem, r, p):
    power, extra = _constraint_values(problem, r, p)
    return max(power - problem.P_a, problem.extra_floor - extra, abs(p.sum() - 1.0), 0.0)


def _slsqp(problem, r0, p0, config):
    m = r0.size
    cache = {}

    def evaluate(x):
        key = x.tobytes()
        if key not in cache:
            cache.clear()
            r, p = x[:m], np.clip(x[m:], 0.0, None)
            H, h, dr = entropy_terms(r, p, with_position_grad=True)
            cache[key] = (-H, -np.concatenate([dr, h - 1.0]))
        return cache[key]

    constraints = [
        {
            "type": "eq",
            "fun": lambda x: np.sum(x[m:]) - 1.0,
            "jac": lambda x: np.concatenate([np.zeros(m), np.ones(m)]),
        },
        {
            "type": "ineq",
            "fun": lambda x: problem.P_a - np.dot(x[m:], x[:m] ** 2),
            "jac": lambda x: -np.concatenate([2.0 * x[m:] * x[:m], x[:m] ** 2]),
        },
    ]
    if problem.extra_floor > 0:
        constraints.append(
            {
                "type": "ineq",
                "fun": lambda x: np.dot(x[m:], problem.extra_constraint(x[:m])) - problem.extra_floor,
                "jac": lambda x: np.concatenate(
                    [x[m:] * problem.extra_constraint_derivative(x[:m]), problem.extra_constraint(x[:m])]
                ),
            }
        )
    bounds = [(0.0, problem.r_p)] * m + [(0.0, 1.0)] * m
    res = minimize(
        evaluate,
        np.concatenate([r0, p0]),
        jac=True,
        method="SLSQP",
        bounds=bounds,
        constraints=constraints,
        options={"maxiter": config.max_iter, "ftol": config.ftol},
    )
    r = np.clip(res.x[:m], 0.0, problem.r_p)
    p = np.clip(res.x[m:], 0.0, 1.0)
    return r, p, res


def clean_support(r, p):
    """Drop masses below PRUNE_PROB and merge points closer than MERGE_DIST.

    Merged points sit at the root-mean-square of their amplitudes so the
    average power is unchanged.
    """
    keep = p >= PRUNE_PROB
    r, p = r[keep], p[keep]
    order = np.argsort(r, kind="stable")
    r, p = r[order], p[order]
    out_r, out_p = [], []
    for ri, pi in zip(r, p):
        if out_r and ri - out_r[-1][-1] < MERGE_DIST:
            out_r[-1].append(ri)
            out_p[-1].append(pi)
        else:
            out_r.append([ri])
            out_p.append([pi])
    rr = np.array([math.sqrt(np.dot(pp, np.square(gr)) / sum(pp)) for gr, pp in zip(out_r, out_p)])
    pp = np.array([sum(q) for q in out_p])
    return rr, pp / pp.sum()


def maximize_entropy(problem, m, seed=None, config=None, init=None):
    """Local maximiser of H over m-point laws, from a random or given start.

    ``seed`` feeds ``numpy.random.SeedSequence``; ``init`` is an optional
    ``(points, probs)`` pair that replaces the random draw.
    """
    config = config or SolverConfig()
    if not math.isfinite(problem.r_p):
        raise ValueError("the discrete solver needs a finite peak amplitude r_p")
    if init is None:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        r0 = rng.uniform(0.0, problem.r_p, m)
        p0 = rng.dirichlet(np.ones(m))
    else:
        r0 = np.clip(np.asarray(init[0], dtype=float), 0.0, problem.r_p)
        p0 = np.asarray(init[1], dtype=float)
        p0 = p0 / p0.sum()

    r, p, res = _slsqp(problem, r0, p0, config)
    nit = res.nit
    for _ in range(config.polish_rounds):
        rc, pc = clean_support(r, p)
        if rc.size == r.size:
            break
        # pruning moved the constraints; re-solve on the reduced support
        r, p, res = _slsqp(problem, rc, pc, config)
        nit += res.nit
    r, p = clean_support(r, p)
    H, _, _ = entropy_terms(r, p)
    return Candidate(r, p, H, bool(res.success), str(res.message), int(nit), tuple(np.atleast_1d(seed or ())))


def _newton_residual(problem, r, p, nu, mu, free, active):
    """Stationarity of the Lagrangian plus active constraints, as one vector."""
    H, h, dr = entropy_terms(r, p, with_position_grad=True)
    c = problem.extra_constraint(r)
    dc = problem.extra_constraint_derivative(r)
    mu1, mu2 = mu
    rows = [
        h - 1.0 - nu - mu1 * r * r + mu2 * c,
        (dr - 2.0 * mu1 * p * r + mu2 * p * dc)[free],
        [p.sum() - 1.0],
    ]
    if active[0]:
        rows.append([np.dot(p, r * r) - problem.P_a])
    if active[1]:
        rows.append([np.dot(p, c) - problem.extra_floor])
    return np.concatenate(rows), H


def _initial_multipliers(problem, r, p, free, active):
    """Least-squares (nu, mu1, mu2) from the stationarity rows at fixed (r, p)."""
    _, h, dr = entropy_terms(r, p, with_position_grad=True)
    c = problem.extra_constraint(r)
    dc = problem.extra_constraint_derivative(r)
    m = r.size
    A = np.zeros((m + int(free.sum()), 3))
    b = np.concatenate([h - 1.0, dr[free]])
    A[:m, 0] = 1.0
    A[:m, 1] = r * r
    A[:m, 2] = -c
    A[m:, 1] = (2.0 * p * r)[free]
    A[m:, 2] = -(p * dc)[free]
    cols = [0] + [1 + i for i in range(2) if active[i]]
    sol = np.zeros(3)
    sol[cols] = np.linalg.lstsq(A[:, cols], b, rcond=None)[0]
    return sol[0], np.clip(sol[1:], 0.0, None)


def _kkt_solve(problem, r, p, free, active, config):
    """Bounded trust-region least squares on the KKT system for a fixed active set.

    The stationarity system is badly conditioned near flat optima, so plain
    Newton steps overshoot; the trust region keeps steps honest. Returns
    ``(r, p, mu, max_residual)``.
    """
    m = r.size
    nu, mu = _initial_multipliers(problem, r, p, free, active)
    nf = int(free.sum())
    na = [i for i in range(2) if active[i]]

    def unpack(z):
        rr = r.copy()
        rr[free] = z[:nf]
        mu_ = np.zeros(2)
        mu_[na] = z[nf + m + 1 :]
        return rr, z[nf : nf + m], z[nf + m], mu_

    def residual(z):
        rr, pp, nu_, mu_ = unpack(z)
        return _newton_residual(problem, rr, pp, nu_, mu_, free, active)[0]

    z0 = np.concatenate([r[free], p, [nu], mu[na]])
    lower = np.concatenate([np.zeros(nf), np.zeros(m), [-np.inf], np.zeros(len(na))])
    upper = np.concatenate([np.full(nf, problem.r_p), np.ones(m), [np.inf], np.full(len(na), np.inf)])
    z0 = np.clip(z0, lower, upper)
    res = least_squares(
        residual, z0, bounds=(lower, upper), method="trf", x_scale="jac",
        xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=config.newton_steps * (z0.size + 1),
    )
    rr, pp, _, mu_ = unpack(res.x)
    return rr, pp, mu_, float(np.max(np.abs(res.fun)))


def newton_polish(problem, r, p, config):
    """Drive a local maximiser onto its KKT point.

    Points at r = 0 or r = r_p are held there; nearly tight inequality
    constraints are treated as equalities. Interior points that end on a
    bound are pinned and vanishing masses dropped, then the solve repeats.
    Returns ``(r, p, ok)``; on failure the input comes back unchanged.
    """
    r0, p0 = r, p
    r, p = r.copy(), p.copy()
    power, extra = _constraint_values(problem, r, p)
    active = [
        problem.P_a - power <= 1e-5 * max(1.0, problem.P_a),
        problem.extra_floor > 0 and extra - problem.extra_floor <= 1e-5 * max(1.0, problem.extra_floor),
    ]
    start_resid = None
    for _ in range(r.size + 3):
        r[r <= 1e-7] = 0.0
        r[r >= problem.r_p - 1e-7] = problem.r_p
        free = (r > 0) & (r < problem.r_p)
        rr, pp, mu, resid = _kkt_solve(problem, r, p, free, active, config)
        if start_resid is None:
            start_resid = resid
        log.debug("kkt polish: m=%d residual=%.3e", r.size, resid)
        small = pp < PRUNE_PROB
        if np.any(small) and r.size > 1:
            r, p = rr[~small], pp[~small] / pp[~small].sum()
            continue
        hit = free & ((rr <= 1e-7) | (rr >= problem.r_p - 1e-7))
        if np.any(hit):
            r, p = rr, pp / pp.sum()
            continue
        negative = [i for i in range(2) if active[i] and mu[i] < -1e-10]
        if negative:
            for i in negative:
                active[i] = False
            continue
        pp = pp / pp.sum()
        if resid > 1e-6 or _violation(problem, rr, pp) > config.tol_constraint:
            break
        return rr, pp, True
    return r0, p0, False


# -- certification ------------------------------------------------------------


def _phi_rows(problem, r, h, H):
    """Rows of Phi(r) = base + A @ mu for active-or-not multipliers (mu1, mu2)."""
    base = h - H
    A = np.column_stack([-(r * r - problem.P_a), problem.extra_constraint(r) - problem.extra_floor])
    return base, A


def _active_set(problem, F, tol):
    power, extra = _constraint_values(problem, F.r, F.p)
    return np.array([problem.P_a - power <= tol, extra - problem.extra_floor <= tol])


def kkt_grid(problem, size):
    return np.linspace(0.0, problem.r_p, size)


def recover_multipliers(F, problem, config=None, grid=None):
    """Multipliers (mu1, mu2) (or (lambda1, lambda2)) and K from the support equalities.

    Solves  h(r_i) - H = mu1 (r_i^2 - P_a) - mu2 (c(r_i) - floor)  by
    nonnegative least squares over the active constraints; constraints
    slack by more than ``config.tol_active`` get a zero multiplier. When the
    active columns are rank deficient on the support, the solution line is
    searched (LP) for the point that minimises the worst Phi on ``grid``.

    Returns ``(multipliers, K, underdetermined)``.
    """
    config = config or SolverConfig()
    H, h, _ = entropy_terms(F.r, F.p)
    base, A = _phi_rows(problem, F.r, h, H)
    active = _active_set(problem, F, config.tol_active)
    mu = np.zeros(2)
    idx = np.flatnonzero(active)
    underdetermined = False
    if idx.size:
        Aa = A[:, idx]
        # Phi(r_i) = 0  <=>  Aa @ mu = -base
        sol, _ = nnls(Aa, -base)
        mu[idx] = sol
        sv = np.linalg.svd(Aa, compute_uv=False)
        rank = int(np.sum(sv > 1e-9 * max(sv.max(), 1e-300)))
        if rank < idx.size:
            underdetermined = True
            log.info("multiplier system underdetermined (rank %d < %d active)", rank, idx.size)
            mu[idx] = _null_space_search(problem, F, Aa, base, idx, grid, config)
    K = H - mu[0] * problem.P_a + mu[1] * problem.extra_floor
    return (float(mu[0]), float(mu[1])), float(K), underdetermined


def _null_space_search(problem, F, Aa, base, idx, grid, config):
    """Pseudoinverse solution moved along the null space to minimise max grid Phi."""
    mu0 = np.linalg.pinv(Aa) @ (-base)
    _, sv, vt = np.linalg.svd(Aa)
    rank = int(np.sum(sv > 1e-9 * max(sv.max(), 1e-300)))
    N = vt[rank:].T
    if grid is None:
        grid = kkt_grid(problem, config.kkt_grid_size)
    Hg, _, _ = entropy_terms(F.r, F.p)
    hg = marginal_entropy_density(grid, F)
    gbase, gA = _phi_rows(problem, grid, hg, Hg)
    gA = gA[:, idx]
    k = N.shape[1]
    # variables [t (k), s]; minimise s + tiny * sum(mu)
    c = np.concatenate([1e-9 * N.sum(axis=0), [1.0]])
    A_ub = np.vstack(
        [
            np.hstack([gA @ N, -np.ones((grid.size, 1))]),
            np.hstack([-N, np.zeros((N.shape[0], 1))]),
        ]
    )
    b_ub = np.concatenate([-gbase - gA @ mu0, mu0])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(-1e6, 1e6)] * k + [(None, None)], method="highs")
    if not res.success:
        return np.clip(mu0, 0.0, None)
    return np.clip(mu0 + N @ res.x[:k], 0.0, None)


def _refined_grid(grid, phi):
    """Extra points at 10x density around each local maximum of phi."""
    n = grid.size
    interior = np.r_[False, (phi[1:-1] >= phi[:-2]) & (phi[1:-1] >= phi[2:]), False]
    idx = set(np.flatnonzero(interior))
    if phi[0] >= phi[1]:
        idx.add(0)
    if phi[-1] >= phi[-2]:
        idx.add(n - 1)
    # the top few maxima are enough to locate the worst violation
    ranked = sorted(idx, key=lambda j: -phi[j])[:20]
    extra = [np.linspace(grid[max(j - 1, 0)], grid[min(j + 1, n - 1)], 21) for j in ranked]
    return np.unique(np.concatenate(extra)) if extra else np.empty(0)


def verify_kkt(F, multipliers, problem, grid_size=2000, config=None):
    """Evaluate the optimality certificate for F under the given multipliers."""
    config = config or SolverConfig()
    mu1, mu2 = multipliers
    H, h_supp, _ = entropy_terms(F.r, F.p)
    K = H - mu1 * problem.P_a + mu2 * problem.extra_floor

    def phi(r, h):
        return h - mu1 * r * r + mu2 * problem.extra_constraint(r) - K

    support = np.abs(phi(F.r, h_supp))
    grid = kkt_grid(problem, grid_size)
    phig = phi(grid, marginal_entropy_density(grid, F))
    fine = _refined_grid(grid, phig)
    worst = float(phig.max())
    argmax = float(grid[np.argmax(phig)])
    if fine.size:
        phif = phi(fine, marginal_entropy_density(fine, F))
        if phif.max() > worst:
            worst, argmax = float(phif.max()), float(fine[np.argmax(phif)])
    violation = max(worst, 0.0)
    resid = float(support.max())
    passed = resid <= config.tol_eq and violation <= config.tol_ineq and min(multipliers) >= MULTIPLIER_FLOOR
    return KktReport(
        multipliers=(float(mu1), float(mu2)),
        K_const=float(K),
        max_support_residual=resid,
        max_grid_violation=violation,
        passed=bool(passed),
        argmax_r=argmax,
        distribution_points=tuple(F.points),
    )


def certify(F, problem, config=None):
    config = config or SolverConfig()
    grid = kkt_grid(problem, config.kkt_grid_size)
    mult, _, under = recover_multipliers(F, problem, config, grid=grid)
    report = verify_kkt(F, mult, problem, config.kkt_grid_size, config)
    if under:
        report = KktReport(**{**report.__dict__, "underdetermined": True})
    return report


# -- driver -----------------------------------------------------------------


def _rank_key(c):
    return (-c.H, c.points.size, tuple(c.points))


def _trace_entry(m, restart, c, seconds):
    return {
        "m": m,
        "restart": restart,
        "seed": [int(v) for v in c.seed],
        "H": c.H,
        "m_after_prune": int(c.points.size),
        "success": c.success,
        "nit": c.nit,
        "message": c.message,
        "seconds": round(seconds, 6),
    }


def _make_solution(problem, cand, report, m, trace, config):
    F = cand.distribution
    return Solution(
        problem=problem,
        distribution=F,
        mi_nats=max(cand.H - 1.0, 0.0),
        kkt=report,
        m_used=m,
        constraint_values=_constraint_values(problem, F.r, F.p),
        trace=trace,
        config=config,
    )


def _polish(problem, cand, config):
    r, p, ok = newton_polish(problem, cand.points, cand.probs, config)
    if not ok:
        return cand
    r, p = clean_support(r, p)
    if _violation(problem, r, p) > config.tol_constraint:
        return cand
    H, _, _ = entropy_terms(r, p)
    # the polish must not trade entropy for stationarity
    if H < cand.H - 1e-9:
        return cand
    return Candidate(r, p, H, cand.success, cand.message + "; newton-polished", cand.nit, cand.seed)


def _insert_point(cand, r_new, r_p):
    """Add a light mass point at r_new (where Phi is largest) to seed m+1."""
    r = np.append(cand.points, min(max(r_new, 0.0), r_p))
    p = np.append(cand.probs * 0.95, 0.05)
    return r, p


def solve(problem, config=None, warm_start=None):
    """Mass-point escalation with multi-start local search and KKT certification.

    Parameters
    ----------
    problem : RdpProblem or OopProblem
    config : SolverConfig
    warm_start : DiscreteAmplitudeDistribution, optional
        Extra deterministic start (used by sweeps), tried at its own size.

    Raises
    ------
    InfeasibleProblemError
        If the delivered-power or coverage floor cannot be met.
    """
    config = config or SolverConfig()
    if not math.isfinite(problem.r_p):
        raise ValueError("the discrete solver needs a finite peak amplitude r_p")
    bound = check_feasible(problem)
    trace = []

    if problem.extra_floor > 0 and problem.extra_floor >= bound - config.tol_constraint:
        # the feasible set collapses to the maximising law
        _, law = _two_point_maximum(problem.extra_constraint, problem.P_a, problem.r_p)
        H, _, _ = entropy_terms(law.r, law.p)
        cand = Candidate(law.r, law.p, H, True, "forced by feasibility boundary", 0)
        trace.append(_trace_entry(law.size, 0, cand, 0.0))
        return _make_solution(problem, cand, certify(law, problem, config), law.size, trace, config)

    best_overall, best_report, best_m = None, None, None
    previous = None
    for m in range(config.m_init, config.m_max + 1):
        starts = []
        if warm_start is not None and warm_start.size == m:
            starts.append(("warm", (warm_start.r, warm_start.p)))
        if previous is not None and previous[0].points.size == m - 1:
            starts.append(("insert", _insert_point(previous[0], previous[1].argmax_r, problem.r_p)))
        starts += [(k, None) for k in range(config.restarts_per_m)]

        best, report = None, None
        for label, init in starts:
            t0 = time.perf_counter()
            seed = None if init is not None else (config.seed, m, label)
            c = maximize_entropy(problem, m, seed=seed, config=config, init=init)
            trace.append(_trace_entry(m, label, c, time.perf_counter() - t0))
            if _violation(problem, c.points, c.probs) > config.tol_constraint:
                continue
            # only a clear entropy gain is worth another certificate
            if best is not None and c.H <= best.H + 1e-9:
                if c.H >= best.H - 1e-9 and _rank_key(c) < _rank_key(best):
                    best = c
                continue
            best, report = c, certify(c.distribution, problem, config)
            if report.passed:
                break
        if best is None:
            log.info("m=%d: no feasible candidate", m)
            continue
        if report.distribution_points != tuple(best.points):
            report = certify(best.distribution, problem, config)
        if not report.passed and report.max_grid_violation < config.polish_below:
            polished = _polish(problem, best, config)
            if polished is not best:
                second = certify(polished.distribution, problem, config)
                if second.passed or second.max_grid_violation < report.max_grid_violation:
                    best, report = polished, second
        log.info(
            "m=%d: H=%.10f support=%d residual=%.2e violation=%.2e passed=%s",
            m, best.H, best.points.size, report.max_support_residual, report.max_grid_violation, report.passed,
        )
        if report.passed:
            return _make_solution(problem, best, report, m, trace, config)
        previous = (best, report)
        if best_overall is None or _rank_key(best) < _rank_key(best_overall):
            best_overall, best_report, best_m = best, report, m
    if best_overall is None:
        raise RuntimeError("no feasible candidate found; increase restarts or m_max")
    return _make_solution(problem, best_overall, best_report, best_m, trace, config)
