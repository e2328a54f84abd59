"""Special functions for the Rician amplitude kernel.

All routines accept scalars or numpy arrays and work in double precision.
``log_bessel_i0`` never forms I0 itself, so arguments up to 1e4 (and beyond)
are safe.
"""

import numpy as np
from scipy.special import gammaincc, gammaln

from .quadrature import integrate

# Below this argument the power series is used, above it the Hankel
# asymptotic expansion. Both agree to ~1e-13 relative at the seam.
SERIES_ASYMPTOTIC_SEAM = 15.0

# Marcum Q switches from the Poisson series to log-domain kernel quadrature
# when the noncentrality r exceeds this.
MARCUM_SERIES_MAX_R = 20.0
MARCUM_QUAD_TOL = 1e-11

_ASYMPTOTIC_TERMS = 40


def _check_domain(x, name="x"):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise ValueError(f"{name} must be finite and nonnegative")
    return x


def _series_terms(x):
    # terms of sum (x^2/4)^k / (k!)^2 decay once k > x/2
    return int(np.ceil(np.max(x, initial=0.0) / 2.0)) + 32


def _i0_i1_series(x, with_i1=True):
    """Power series for I0 - 1 and I1 (use only for moderate x)."""
    q = 0.25 * x * x
    term = np.ones_like(x)
    s0 = np.zeros_like(x)  # I0 - 1, kept separate for log1p
    # I1 = (x/2) * sum q^k / (k! (k+1)!)
    t1 = np.ones_like(x)
    s1 = np.ones_like(x)
    for k in range(1, _series_terms(x)):
        term = term * (q / (k * k))
        s0 = s0 + term
        if with_i1:
            t1 = t1 * (q / (k * (k + 1)))
            s1 = s1 + t1
    return s0, (0.5 * x * s1 if with_i1 else None)


def _hankel_terms(x_min, nu):
    """Number of terms to keep for the smallest argument in a batch.

    Stops at the smallest term (the series is divergent) or once terms drop
    below double resolution. Larger arguments only shrink every term, so
    the same count is safe for the whole batch.
    """
    mu = 4.0 * nu * nu
    term = 1.0
    for k in range(1, _ASYMPTOTIC_TERMS):
        new = abs(term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x_min))
        if new >= term or new < 1e-18:
            return k
        term = new
    return _ASYMPTOTIC_TERMS


def _hankel_sum(x, nu):
    """sum_k (-1)^k a_k(nu) / (8x)^k, where I_nu(x) ~ e^x/sqrt(2 pi x) * sum."""
    mu = 4.0 * nu * nu
    inv = 1.0 / (8.0 * x)
    total = np.ones_like(x)
    term = np.ones_like(x)
    for k in range(1, _hankel_terms(float(x.min()), nu)):
        term = term * (-(mu - (2 * k - 1) ** 2) / k) * inv
        total = total + term
    return total


def _bessel_parts(x, with_ratio):
    """(ln I0(x), I1(x)/I0(x) or None) for a validated 1-D array."""
    log_i0 = np.empty_like(x)
    ratio = np.empty_like(x) if with_ratio else None
    small = x < SERIES_ASYMPTOTIC_SEAM
    if np.any(small):
        s0m1, s1 = _i0_i1_series(x[small], with_ratio)
        log_i0[small] = np.log1p(s0m1)
        if with_ratio:
            ratio[small] = s1 / (1.0 + s0m1)
    big = ~small
    if np.any(big):
        xb = x[big]
        h0 = _hankel_sum(xb, 0.0)
        log_i0[big] = xb - 0.5 * np.log(2.0 * np.pi * xb) + np.log(h0)
        if with_ratio:
            ratio[big] = _hankel_sum(xb, 1.0) / h0
    return log_i0, ratio


def log_bessel_i0(x):
    """Natural log of the modified Bessel function I0.

    Parameters
    ----------
    x : float or array_like
        Nonnegative finite argument(s).

    Returns
    -------
    float or ndarray
        ln I0(x), evaluated without overflow.
    """
    x = _check_domain(x)
    shape = x.shape
    out, _ = _bessel_parts(x.ravel(), False)
    return float(out[0]) if shape == () else out.reshape(shape)


def bessel_i1_over_i0(x):
    """Ratio I1(x)/I0(x), in [0, 1) and increasing in x."""
    x = _check_domain(x)
    shape = x.shape
    _, out = _bessel_parts(x.ravel(), True)
    return float(out[0]) if shape == () else out.reshape(shape)


def log_bessel_i0_and_ratio(x):
    """Both ln I0(x) and I1(x)/I0(x), sharing one series evaluation."""
    x = _check_domain(x)
    shape = x.shape
    a, b = _bessel_parts(x.ravel(), True)
    if shape == ():
        return float(a[0]), float(b[0])
    return a.reshape(shape), b.reshape(shape)


def _marcum_series(r, A):
    """Q1 as a Poisson mixture of regularized upper incomplete gammas."""
    lam = 0.5 * r * r
    kmax = int(np.ceil(np.max(lam, initial=0.0) + 12.0 * np.sqrt(np.max(lam, initial=0.0)) + 40))
    k = np.arange(kmax + 1, dtype=float)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        logw = np.where(lam > 0, -lam + k * np.log(np.where(lam > 0, lam, 1.0)) - gammaln(k + 1), 0.0)
    logw = np.where((lam == 0) & (k > 0), -np.inf, logw)
    weights = np.exp(logw)
    # truncated mass is < 1e-30; renormalising removes gammaln rounding drift
    weights /= weights.sum(axis=0)
    tails = gammaincc(k + 1, 0.5 * A * A)
    return np.clip(np.sum(weights * tails, axis=0), 0.0, 1.0)


def _marcum_quadrature(r, A):
    """Q1 for large noncentrality, by integrating the kernel near its peak."""
    # the kernel is ~N(r, 1) in R, so +-40 covers everything in double
    lo, hi = max(r - 40.0, 0.0), r + 40.0

    def kernel(R):
        R = np.maximum(R, 1e-300)
        return np.exp(np.log(R) - 0.5 * (R - r) ** 2 - r * R + log_bessel_i0(r * R))

    if A <= lo:
        return 1.0
    if A >= hi:
        return 0.0
    # exp(-rR + ln I0(rR)) carries ~1e-13 rounding at rR ~ 1e3, so a tighter
    # tolerance would only chase noise
    if A >= r:
        val, _ = integrate(kernel, A, hi, tol=MARCUM_QUAD_TOL, panel_width=1.0)
        return float(np.clip(val, 0.0, 1.0))
    val, _ = integrate(kernel, lo, A, tol=MARCUM_QUAD_TOL, panel_width=1.0)
    return float(np.clip(1.0 - val, 0.0, 1.0))


def marcum_q1(r, A):
    """First-order Marcum Q function Q(r, A) = P(R >= A | input amplitude r).

    ``A`` may be ``inf`` (returns 0). Broadcasts over array inputs.
    """
    r = _check_domain(r, "r")
    A = np.asarray(A, dtype=float)
    if np.any(np.isnan(A)) or np.any(A < 0):
        raise ValueError("A must be nonnegative")
    r, A = np.broadcast_arrays(r, A)
    shape = r.shape
    r = r.astype(float).ravel()
    A = A.astype(float).ravel()
    out = np.zeros(r.shape)
    finite = np.isfinite(A)
    series = finite & (r <= MARCUM_SERIES_MAX_R)
    if np.any(series):
        out[series] = _marcum_series(r[series], A[series])
    for idx in np.flatnonzero(finite & ~series):
        out[idx] = _marcum_quadrature(r[idx], A[idx])
    return float(out[0]) if shape == () else out.reshape(shape)
