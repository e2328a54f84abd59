"""Complex AWGN amplitude channel with CN(0, 2) noise.

With uniform, independent input phase the output amplitude R has density
f_R(R; F) = sum_i p_i K(R, r_i), where K is the Rician kernel with unit
per-component noise variance. Mutual information in nats is H(F) - 1 with
H(F) = -int f_R ln(f_R / R) dR.

Everything here works with ``ln(f_R / R)`` rather than ``f_R`` so that the
Bessel factor never leaves the log domain.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .quadrature import integrate
from .specfun import log_bessel_i0, log_bessel_i0_and_ratio

QUAD_TOL = 1e-9
TAIL_MARGIN = 8.0  # integrate R up to (largest amplitude) + TAIL_MARGIN
DENSITY_FLOOR = 1e-300
PANEL_WIDTH = 1.0


@dataclass(frozen=True)
class DiscreteAmplitudeDistribution:
    """Finite input amplitude law: mass ``probs[i]`` at ``points[i]``."""

    points: tuple
    probs: tuple

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        prb = np.asarray(self.probs, dtype=float)
        if pts.ndim != 1 or pts.shape != prb.shape or pts.size == 0:
            raise ValueError("points and probs must be non-empty 1-D sequences of equal length")
        if not np.all(np.isfinite(pts)) or np.any(pts < 0):
            raise ValueError("points must be finite and nonnegative")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("points must be strictly increasing")
        if np.any(prb <= 0):
            raise ValueError("probabilities must be positive")
        if abs(prb.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {prb.sum():.15g}, not 1")
        object.__setattr__(self, "points", tuple(float(v) for v in pts))
        object.__setattr__(self, "probs", tuple(float(v) for v in prb))

    @classmethod
    def from_arrays(cls, points, probs, normalize=True):
        """Build from unsorted arrays; sorts, and optionally renormalises."""
        pts = np.asarray(points, dtype=float)
        prb = np.asarray(probs, dtype=float)
        order = np.argsort(pts, kind="stable")
        pts, prb = pts[order], prb[order]
        if normalize:
            prb = prb / prb.sum()
        return cls(tuple(pts), tuple(prb))

    @classmethod
    def point_mass(cls, a):
        return cls((float(a),), (1.0,))

    @property
    def r(self):
        return np.asarray(self.points)

    @property
    def p(self):
        return np.asarray(self.probs)

    @property
    def size(self):
        return len(self.points)

    def __repr__(self):
        body = ", ".join(f"({r:.6g}, {p:.6g})" for r, p in zip(self.points, self.probs))
        return f"DiscreteAmplitudeDistribution([{body}])"


@dataclass(frozen=True)
class MixtureDistribution:
    """Time-sharing law: Rayleigh(E[r^2] = rayleigh_power) mixed with a discrete law."""

    rayleigh_weight: float
    rayleigh_power: float
    discrete_weight: float
    discrete: DiscreteAmplitudeDistribution

    def __post_init__(self):
        w0, w1 = self.rayleigh_weight, self.discrete_weight
        if not (0.0 <= w0 <= 1.0 and 0.0 <= w1 <= 1.0) or abs(w0 + w1 - 1.0) > 1e-12:
            raise ValueError("mixture weights must lie in [0, 1] and sum to 1")
        if not self.rayleigh_power > 0:
            raise ValueError("rayleigh_power must be positive")

    @classmethod
    def time_sharing(cls, tau, P_a, discrete):
        return cls(1.0 - tau, P_a, tau, discrete)


def rayleigh_quantization(P_a, n):
    """Equiprobable ``n``-point quantization of the Rayleigh law with E[r^2] = P_a.

    Each point carries the conditional mean of r^2 over its quantile cell,
    so the second moment is preserved exactly.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        edges = -np.log1p(-np.arange(n + 1) / n)  # Exp(1) quantiles, last is inf
        a, b = edges[:-1], edges[1:]
        ea, eb = np.exp(-a), np.exp(-b)
        b_eb = np.where(np.isinf(b), 0.0, b * eb)
    cond_mean = (a * ea + ea - b_eb - eb) / (ea - eb)
    pts = np.sqrt(P_a * cond_mean)
    prb = np.full(n, 1.0 / n)
    prb[-1] = 1.0 - prb[:-1].sum()
    return DiscreteAmplitudeDistribution(tuple(pts), tuple(prb))


def log_kernel(R, r):
    """ln K(R, r) = ln R - (R^2 + r^2)/2 + ln I0(r R), for R > 0."""
    R = np.asarray(R, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(R <= 0) or not np.all(np.isfinite(R)):
        raise ValueError("R must be positive and finite")
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise ValueError("r must be nonnegative and finite")
    out = np.log(R) - 0.5 * (R * R + r * r) + log_bessel_i0(R * r)
    return float(out) if out.ndim == 0 else out


def _log_kernel_over_R(R, r):
    """ln(K(R, r)/R) on the outer grid ``R[:, None]`` x ``r[None, :]``; finite at R = 0."""
    R = R[:, None]
    r = r[None, :]
    return -0.5 * (R * R + r * r) + log_bessel_i0(R * r)


def _log_density_over_R(R, points, probs):
    """ln(f_R(R)/R) for a discrete law, via log-sum-exp; also returns ln(K/R)."""
    lk = _log_kernel_over_R(R, points)
    return logsumexp(lk + np.log(probs)[None, :], axis=1), lk


def output_density(R, F):
    """Output amplitude density f_R(R; F) = sum_i p_i K(R, r_i)."""
    R = np.asarray(R, dtype=float)
    if np.any(R < 0):
        raise ValueError("R must be nonnegative")
    flat = np.atleast_1d(R).ravel()
    logf, _ = _log_density_over_R(flat, F.r, F.p)
    with np.errstate(divide="ignore"):
        out = np.where(flat > 0, flat * np.exp(logf), 0.0).reshape(np.shape(R))
    return float(out) if out.ndim == 0 else out


def _xlogx_guard(weight, log_ratio):
    """weight * log_ratio, with 0 wherever the weight is below the density floor."""
    return np.where(weight < DENSITY_FLOOR, 0.0, weight * log_ratio)


def entropy_terms(points, probs, tol=QUAD_TOL, with_position_grad=False):
    """One quadrature pass for H, h(r_i; F) and optionally dH/dr_i.

    ``points``/``probs`` are raw arrays (zeros and duplicates allowed), which
    the optimizer needs. Returns ``(H, h, dH_dr)`` with ``dH_dr`` None unless
    requested.
    """
    points = np.asarray(points, dtype=float)
    probs = np.asarray(probs, dtype=float)
    m = points.size
    keep = probs > 0
    logp = np.full(m, -np.inf)
    logp[keep] = np.log(probs[keep])
    ncol = 1 + m + (m if with_position_grad else 0)

    def integrand(R):
        x = R[:, None] * points[None, :]
        if with_position_grad:
            log_i0, ratio = log_bessel_i0_and_ratio(x)
        else:
            log_i0 = log_bessel_i0(x)
        lk = log_i0 - 0.5 * (R[:, None] ** 2 + points[None, :] ** 2)
        L = logsumexp(lk + logp[None, :], axis=1)
        out = np.empty((R.size, ncol))
        f = R * np.exp(L)
        out[:, 0] = -_xlogx_guard(f, L)
        K = R[:, None] * np.exp(lk)
        out[:, 1 : 1 + m] = -_xlogx_guard(K, L[:, None])
        if with_position_grad:
            dK = K * (R[:, None] * ratio - points[None, :])
            out[:, 1 + m :] = np.where(K < DENSITY_FLOOR, 0.0, dK * (L[:, None] + 1.0))
        return out

    upper = float(points.max()) + TAIL_MARGIN
    val, _ = integrate(integrand, 0.0, upper, tol=tol, panel_width=PANEL_WIDTH)
    H = float(val[0])
    h = val[1 : 1 + m]
    grad = -probs * val[1 + m :] if with_position_grad else None
    return H, h, grad


def entropy_H(F, tol=QUAD_TOL):
    """Output-amplitude entropy functional H(F) in nats."""
    def integrand(R):
        L, _ = _log_density_over_R(R, F.r, F.p)
        return -_xlogx_guard(R * np.exp(L), L)

    val, _ = integrate(integrand, 0.0, max(F.points) + TAIL_MARGIN, tol=tol, panel_width=PANEL_WIDTH)
    return val


def marginal_entropy_density(r, F, tol=QUAD_TOL):
    """h(r; F) = -int K(R, r) ln(f_R(R; F)/R) dR; ``r`` may be an array."""
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r_arr < 0) or not np.all(np.isfinite(r_arr)):
        raise ValueError("r must be nonnegative and finite")

    def integrand(R):
        L, _ = _log_density_over_R(R, F.r, F.p)
        K = R[:, None] * np.exp(_log_kernel_over_R(R, r_arr))
        return -_xlogx_guard(K, L[:, None])

    upper = max(max(F.points), float(r_arr.max())) + TAIL_MARGIN
    val, _ = integrate(integrand, 0.0, upper, tol=tol, panel_width=PANEL_WIDTH)
    return float(val[0]) if np.ndim(r) == 0 else val


def mutual_information(F, tol=QUAD_TOL):
    """I(x; y) in nats for amplitude law F with uniform independent phase."""
    mi = entropy_H(F, tol=tol) - 1.0
    # H(delta_0) = 1 exactly; absorb quadrature noise around zero
    if -10 * tol < mi < 0:
        return 0.0
    return mi


def awgn_capacity(P_a):
    """ln(1 + P_a/2): capacity with only an average-power constraint."""
    if not P_a > 0:
        raise ValueError("P_a must be positive")
    return float(np.log1p(P_a / 2.0))


def _mixture_log_density_over_R(R, M):
    s = M.rayleigh_power + 2.0
    parts = []
    if M.rayleigh_weight > 0:
        parts.append(np.log(M.rayleigh_weight) + np.log(2.0 / s) - R * R / s)
    if M.discrete_weight > 0:
        L, _ = _log_density_over_R(R, M.discrete.r, M.discrete.p)
        parts.append(np.log(M.discrete_weight) + L)
    return parts[0] if len(parts) == 1 else np.logaddexp(*parts)


def mixture_output_density(R, M):
    """Output amplitude density of a time-sharing mixture."""
    R = np.asarray(R, dtype=float)
    flat = np.atleast_1d(R).ravel()
    L = _mixture_log_density_over_R(flat, M)
    out = (flat * np.exp(L)).reshape(np.shape(R))
    return float(out) if out.ndim == 0 else out


def mixture_entropy_H(M, tol=QUAD_TOL):
    """H of a time-sharing mixture; the Rayleigh part has closed-form output law."""
    def integrand(R):
        L = _mixture_log_density_over_R(R, M)
        return -_xlogx_guard(R * np.exp(L), L)

    spread = max(1.0, np.sqrt((M.rayleigh_power + 2.0) / 2.0))
    upper = max(M.discrete.points) + TAIL_MARGIN * spread
    val, _ = integrate(integrand, 0.0, upper, tol=tol, panel_width=PANEL_WIDTH)
    return val
