"""Closed-form results for the peak-unconstrained problem (r_p = inf).

Capacity is ln(1 + P_a/2) for every delivered-power floor. Up to the CSCG
delivered power P_R it is achieved by the CSCG input; above P_R it is only
approached, by time-sharing the CSCG input with a two-point law that puts a
vanishing mass 1/l^2 at amplitude sqrt(P_a) l.
"""

import math
from dataclasses import dataclass

import numpy as np

from .channel import (
    DiscreteAmplitudeDistribution,
    MixtureDistribution,
    awgn_capacity,
    entropy_H,
    mixture_entropy_H,
)
from .constraints import EvenPolynomial


def _alphas(g):
    return tuple(g.alphas) if isinstance(g, EvenPolynomial) else tuple(float(a) for a in g)


def rdp_of_cscg(P_a, g):
    """Delivered power E[g(r)] of the CSCG input with E[r^2] = P_a.

    ``g`` is an EvenPolynomial or a raw coefficient sequence. Uses the
    Rayleigh even moments E[r^(2i)] = i! P_a^i.
    """
    if not P_a > 0:
        raise ValueError("P_a must be positive")
    return float(sum(a * math.factorial(i) * P_a**i for i, a in enumerate(_alphas(g))))


def tail_delivered_power(l, P_a, g):
    """E[g] under the tail law: alpha_0 + alpha_1 P_a + sum_{i>=2} alpha_i P_a^i l^(2i-2)."""
    return float(sum(a * P_a**i * (l ** (2 * i - 2) if i >= 1 else 1.0) for i, a in enumerate(_alphas(g))))


def tail_sequence_distribution(l, P_a):
    """Mass 1 - 1/l^2 at 0 and 1/l^2 at sqrt(P_a) l; E[r^2] = P_a for every l."""
    if l < 2:
        raise ValueError("tail index l must be >= 2")
    q = 1.0 / (l * l)
    return DiscreteAmplitudeDistribution((0.0, math.sqrt(P_a) * l), (1.0 - q, q))


class TailIndexTooSmall(ValueError):
    def __init__(self, l, minimal_l):
        super().__init__(f"tail index l={l} cannot reach P_d; increase l to at least {minimal_l}")
        self.minimal_l = minimal_l


def minimal_tail_index(P_a, P_d, g):
    """Smallest integer l >= 2 with P_{d,l} >= P_d (doubling, then bisection)."""
    if tail_delivered_power(2, P_a, g) >= P_d:
        return 2
    lo, hi = 2, 4
    while tail_delivered_power(hi, P_a, g) < P_d:
        lo, hi = hi, 2 * hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tail_delivered_power(mid, P_a, g) >= P_d:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class TimeSharingPlan:
    tau: float
    l: int
    mixture: MixtureDistribution
    mi_nats: float
    gap_nats: float
    average_power: float
    delivered_power: float


def time_sharing_plan(P_a, P_d, g, l):
    """Time-share Rayleigh(P_a) with the order-``l`` tail law to meet P_d.

    Returns a degenerate plan (tau = 0) when P_d <= P_R.
    """
    P_R = rdp_of_cscg(P_a, g)
    tail = tail_sequence_distribution(l, P_a)
    P_dl = tail_delivered_power(l, P_a, g)
    if P_d <= P_R:
        tau = 0.0
    else:
        if P_dl < P_d:
            raise TailIndexTooSmall(l, minimal_tail_index(P_a, P_d, g))
        tau = (P_d - P_R) / (P_dl - P_R)
    mixture = MixtureDistribution.time_sharing(tau, P_a, tail)
    mi = mixture_entropy_H(mixture) - 1.0
    return TimeSharingPlan(
        tau=tau,
        l=int(l),
        mixture=mixture,
        mi_nats=mi,
        gap_nats=awgn_capacity(P_a) - mi,
        # both components have E[r^2] = P_a
        average_power=P_a,
        delivered_power=(1.0 - tau) * P_R + tau * P_dl,
    )


def concavity_sandwich(plan):
    """(H_rayleigh, H_mixture, (1-tau) H_rayleigh + tau H_tail) for a plan."""
    P_a = plan.mixture.rayleigh_power
    h_ray = math.log((P_a + 2.0) / 2.0) + 1.0
    h_tail = entropy_H(plan.mixture.discrete)
    h_mix = plan.mi_nats + 1.0
    return h_ray, h_mix, (1.0 - plan.tau) * h_ray + plan.tau * h_tail


def time_sharing_table(P_a, P_d, g, ls):
    return [time_sharing_plan(P_a, P_d, g, l) for l in ls]


def cscg_rdp_quadrature(P_a, g):
    """Independent check of rdp_of_cscg: integrate g against the Rayleigh density."""
    from scipy.integrate import quad

    alphas = _alphas(g)

    def f(r):
        return float(np.polyval(alphas[::-1], r * r)) * (2.0 * r / P_a) * math.exp(-r * r / P_a)

    scale = math.sqrt(P_a)
    val, _ = quad(f, 0.0, 60.0 * scale, epsabs=0.0, epsrel=1e-13, limit=500, points=[scale, 5 * scale])
    return val
