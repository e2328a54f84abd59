"""Constraint functionals and problem definitions.

Three linear functionals of the input amplitude law F:

* average power      E[r^2]               <= P_a
* delivered power    E[g(r)]              >= P_d   (g an even polynomial)
* output coverage    P(A_l <= |y| <= A_u) >= eps

plus the largest achievable delivered power (or coverage) at a given
(P_a, r_p), which decides feasibility.
"""

import math
from dataclasses import dataclass

import numpy as np

from .channel import DiscreteAmplitudeDistribution
from .specfun import bessel_i1_over_i0, log_bessel_i0, marcum_q1

POSITIVITY_CHECK_RADIUS = 20.0
SCAN_GRID = 2000


class InfeasibleProblemError(ValueError):
    """The constraint set is empty; ``bound`` is the best achievable value."""

    def __init__(self, message, *, bound, requested):
        super().__init__(message)
        self.bound = bound
        self.requested = requested


@dataclass(frozen=True)
class EvenPolynomial:
    """Harvester model g(r) = sum_i alphas[i] * r^(2 i)."""

    alphas: tuple

    def __post_init__(self):
        a = tuple(float(v) for v in self.alphas)
        object.__setattr__(self, "alphas", a)
        if len(a) < 3:
            raise ValueError("g needs degree n >= 2 (at least alpha_0, alpha_1, alpha_2)")
        if not all(math.isfinite(v) for v in a):
            raise ValueError("coefficients must be finite")
        if a[-1] <= 0:
            raise ValueError("leading coefficient alpha_n must be positive")
        self.check_positive(POSITIVITY_CHECK_RADIUS)

    def check_positive(self, radius):
        grid = np.linspace(0.0, radius, 4001)
        if np.any(self(grid) <= 0):
            raise ValueError(f"g must be positive on [0, {radius:g}]")

    @property
    def degree(self):
        return len(self.alphas) - 1

    def __call__(self, r):
        return _even_poly(self.alphas, r)

    def derivative(self, r):
        """dg/dr."""
        r = np.asarray(r, dtype=float)
        u = r * r
        out = np.zeros_like(u)
        for i in range(len(self.alphas) - 1, 0, -1):
            out = out * u + 2 * i * self.alphas[i]
        return out * r


def _even_poly(alphas, r):
    r = np.asarray(r, dtype=float)
    u = r * r
    out = np.zeros_like(u)
    for a in reversed(alphas):
        out = out * u + a
    return out


@dataclass(frozen=True)
class RdpProblem:
    """Average power, peak amplitude and delivered power constraints."""

    P_a: float
    P_d: float
    r_p: float
    g: EvenPolynomial

    def __post_init__(self):
        if not self.P_a > 0:
            raise ValueError("P_a must be positive")
        if not self.P_d >= 0:
            raise ValueError("P_d must be nonnegative")
        if not self.r_p > 0:
            raise ValueError("r_p must be positive")
        if math.isfinite(self.r_p) and self.r_p > POSITIVITY_CHECK_RADIUS:
            self.g.check_positive(self.r_p)

    kind = "rdp"

    def extra_constraint(self, r):
        return self.g(r)

    def extra_constraint_derivative(self, r):
        return self.g.derivative(r)

    @property
    def extra_floor(self):
        return self.P_d


@dataclass(frozen=True)
class OopProblem:
    """Average power, peak amplitude and output-outage (coverage) constraints."""

    P_a: float
    r_p: float
    A_l: float
    A_u: float
    eps: float

    def __post_init__(self):
        if not self.P_a > 0:
            raise ValueError("P_a must be positive")
        if not (self.r_p > 0 and math.isfinite(self.r_p)):
            raise ValueError("r_p must be positive and finite")
        _check_window(self.A_l, self.A_u)
        if not 0 <= self.eps < 1:
            raise ValueError("eps must lie in [0, 1)")

    kind = "oop"

    def extra_constraint(self, r):
        return coverage_function(r, self.A_l, self.A_u)

    def extra_constraint_derivative(self, r):
        return coverage_derivative(r, self.A_l, self.A_u)

    @property
    def extra_floor(self):
        return self.eps


def _check_window(A_l, A_u):
    if not (0 <= A_l < A_u) or math.isnan(A_u):
        raise ValueError(f"invalid outage window [{A_l}, {A_u}]")


def average_power(F):
    return float(np.dot(F.p, F.r**2))


def delivered_power(F, g):
    return float(np.dot(F.p, g(F.r)))


def coverage_function(r, A_l, A_u):
    """Q(r, A_l) - Q(r, A_u): probability the output amplitude lands in the window."""
    _check_window(A_l, A_u)
    upper = 0.0 if math.isinf(A_u) else marcum_q1(r, A_u)
    return marcum_q1(r, A_l) - upper


def _dq_dr(r, A):
    # dQ1(r, A)/dr = A exp(-(r^2 + A^2)/2) I1(r A)
    if A == 0 or math.isinf(A):
        return np.zeros_like(r)
    x = r * A
    return A * np.exp(-0.5 * (r - A) ** 2 - x + log_bessel_i0(x)) * bessel_i1_over_i0(x)


def coverage_derivative(r, A_l, A_u):
    r = np.asarray(r, dtype=float)
    return _dq_dr(r, A_l) - _dq_dr(r, A_u)


def oop_coverage(F, A_l, A_u):
    """P(A_l <= |y| <= A_u) under input amplitude law F; ``A_u`` may be inf."""
    return float(np.dot(F.p, coverage_function(F.r, A_l, A_u)))


def _pair_scan(u, v, P_a):
    """Best value of (1-w) v_a + w v_b over pairs with u_a <= P_a < u_b."""
    below = np.flatnonzero(u <= P_a)
    above = np.flatnonzero(u > P_a)
    best_single = below[np.argmax(v[below])]
    best = (v[best_single], best_single, best_single, 0.0)
    if above.size and below.size:
        ua, ub = u[below][:, None], u[above][None, :]
        w = (P_a - ua) / (ub - ua)
        val = (1 - w) * v[below][:, None] + w * v[above][None, :]
        i, j = np.unravel_index(np.argmax(val), val.shape)
        if val[i, j] > best[0]:
            best = (val[i, j], below[i], above[j], w[i, j])
    return best


def _two_point_maximum(func, P_a, r_p, n_grid=SCAN_GRID):
    """max_F E[func(r)] s.t. E[r^2] <= P_a, supp F in [0, r_p].

    One linear moment constraint over the simplex, so a two-point law
    attains the maximum. Scan all grid pairs, then rescan a 10x finer grid
    around the winning pair.
    """
    if not math.isfinite(r_p):
        raise ValueError("r_p must be finite")
    grid = np.linspace(0.0, r_p, n_grid)
    vals = np.asarray(func(grid), dtype=float)
    value, ia, ib, w = _pair_scan(grid**2, vals, P_a)
    step = grid[1] - grid[0]
    local = []
    for idx in {ia, ib}:
        c = grid[idx]
        local.append(np.linspace(max(c - step, 0.0), min(c + step, r_p), 201))
    fine = np.unique(np.concatenate(local + [grid]))
    fvals = np.asarray(func(fine), dtype=float)
    value, ia, ib, w = _pair_scan(fine**2, fvals, P_a)
    if ia == ib or w <= 0:
        law = DiscreteAmplitudeDistribution.point_mass(fine[ia])
    elif w >= 1:
        law = DiscreteAmplitudeDistribution.point_mass(fine[ib])
    else:
        law = DiscreteAmplitudeDistribution((fine[ia], fine[ib]), (1.0 - w, w))
    return float(value), law


def feasible_pd_max(P_a, r_p, g):
    """Largest delivered power reachable under E[r^2] <= P_a and r <= r_p."""
    return _two_point_maximum(g, P_a, r_p)[0]


def max_delivered_power_law(P_a, r_p, g):
    """The (at most two-point) law attaining ``feasible_pd_max``."""
    return _two_point_maximum(g, P_a, r_p)[1]


def max_coverage(P_a, r_p, A_l, A_u):
    """Largest achievable output coverage, and a law attaining it."""
    return _two_point_maximum(lambda r: coverage_function(r, A_l, A_u), P_a, r_p)


def check_feasible(problem):
    """Raise InfeasibleProblemError naming the violated bound, else return the bound."""
    if problem.kind == "rdp":
        if not math.isfinite(problem.r_p):
            return math.inf
        bound = feasible_pd_max(problem.P_a, problem.r_p, problem.g)
        if problem.P_d > bound + 1e-12:
            raise InfeasibleProblemError(
                f"P_d = {problem.P_d:g} exceeds feasible_pd_max = {bound:.6g} "
                f"at P_a = {problem.P_a:g}, r_p = {problem.r_p:g}",
                bound=bound,
                requested=problem.P_d,
            )
        return bound
    bound, _ = max_coverage(problem.P_a, problem.r_p, problem.A_l, problem.A_u)
    if problem.eps > bound + 1e-12:
        raise InfeasibleProblemError(
            f"eps = {problem.eps:g} exceeds the maximum coverage {bound:.6g} "
            f"at P_a = {problem.P_a:g}, r_p = {problem.r_p:g}",
            bound=bound,
            requested=problem.eps,
        )
    return bound
