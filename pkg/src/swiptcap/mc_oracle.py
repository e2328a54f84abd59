"""Monte-Carlo cross-checks of mutual information and output coverage.

Samples are drawn from the full complex channel y = r e^{i theta} + n with
n ~ CN(0, 2), so nothing here goes through the quadrature path. Each
purpose (amplitude, phase, noise real part, noise imaginary part) has its
own Philox stream, derived per fixed-size batch from the base seed, so the
result does not depend on how batches are scheduled. Sums use math.fsum.

With f_y(y) = f_R(|y|) / (2 pi |y|) and the bivariate Gaussian f_{y|x},

    ln f_{y|x}(y|x) - ln f_y(y) = -|n|^2 / 2 - ln(f_R(|y|) / |y|).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import i0e

MIN_SAMPLES = 10_000
BATCH = 1 << 15
CHUNK_ELEMENTS = 1 << 22  # bound on samples x mass points per density pass
RNG_NAME = "Philox4x64"
_STREAMS = {"amplitude": 0, "phase": 1, "noise_re": 2, "noise_im": 3}


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_samples: int
    seed: int


def _stream(seed, purpose, batch):
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_STREAMS[purpose], int(batch)))
    return np.random.Generator(np.random.Philox(ss))


def _batches(n):
    full, rest = divmod(n, BATCH)
    sizes = [BATCH] * full + ([rest] if rest else [])
    return list(enumerate(sizes))


def _draw(F, seed, batch, size):
    """Input amplitude, phase and complex noise for one batch."""
    u = _stream(seed, "amplitude", batch).random(size)
    cdf = np.cumsum(F.p)
    idx = np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), F.size - 1)
    r = F.r[idx]
    theta = _stream(seed, "phase", batch).uniform(0.0, 2.0 * np.pi, size)
    n = _stream(seed, "noise_re", batch).standard_normal(size) + 1j * _stream(
        seed, "noise_im", batch
    ).standard_normal(size)
    return r, theta, n


def _log_density_over_R(R, F):
    """ln(f_R(R)/R), with ln I0 from scipy's scaled Bessel (not the specfun path)."""
    logp = np.log(F.p)[None, :]
    r = F.r[None, :]
    out = np.empty(R.size)
    step = max(1, CHUNK_ELEMENTS // F.size)
    for s in range(0, R.size, step):
        x = R[s : s + step, None]
        z = x * r
        # ln K/R = -(R^2 + r^2)/2 + ln I0(rR) = -(R - r)^2/2 + ln i0e(rR)
        lk = -0.5 * (x - r) ** 2 + np.log(i0e(z)) + logp
        top = lk.max(axis=1)
        out[s : s + step] = top + np.log(np.exp(lk - top[:, None]).sum(axis=1))
    return out


def _check_n(n):
    if int(n) != n or n < MIN_SAMPLES:
        raise ValueError(f"need an integer n >= {MIN_SAMPLES}, got {n}")
    return int(n)


def _summarise(values, n, seed):
    mean = math.fsum(values) / n
    var = math.fsum((values - mean) ** 2) / (n - 1)
    return McEstimate(mean=mean, std_error=math.sqrt(var / n), n_samples=n, seed=int(seed))


def estimate_mi(F, n, seed):
    """Monte-Carlo mutual information (nats) of amplitude law ``F``.

    Parameters
    ----------
    F : DiscreteAmplitudeDistribution
    n : int
        Number of channel uses, at least 10^4.
    seed : int

    Returns
    -------
    McEstimate
    """
    n = _check_n(n)
    out = np.empty(n)
    pos = 0
    for b, size in _batches(n):
        r, theta, noise = _draw(F, seed, b, size)
        y = r * np.exp(1j * theta) + noise
        L = _log_density_over_R(np.abs(y), F)
        out[pos : pos + size] = -0.5 * np.abs(noise) ** 2 - L
        pos += size
    return _summarise(out, n, seed)


def estimate_coverage(F, A_l, A_u, n, seed):
    """Empirical frequency of A_l <= |y| <= A_u; ``A_u`` may be inf."""
    n = _check_n(n)
    if not (0 <= A_l < A_u) or math.isnan(A_u):
        raise ValueError(f"invalid outage window [{A_l}, {A_u}]")
    out = np.empty(n)
    pos = 0
    for b, size in _batches(n):
        r, theta, noise = _draw(F, seed, b, size)
        R = np.abs(r * np.exp(1j * theta) + noise)
        out[pos : pos + size] = (R >= A_l) & (R <= A_u)
        pos += size
    return _summarise(out, n, seed)
