import math

import numpy as np
import pytest

from swiptcap.channel import awgn_capacity
from swiptcap.constraints import EvenPolynomial, average_power, delivered_power
from swiptcap.theory import (
    TailIndexTooSmall,
    concavity_sandwich,
    cscg_rdp_quadrature,
    minimal_tail_index,
    rdp_of_cscg,
    tail_delivered_power,
    tail_sequence_distribution,
    time_sharing_plan,
    time_sharing_table,
)

G = EvenPolynomial((0.01, 0.01, 0.01))


def test_rdp_of_cscg_examples():
    assert rdp_of_cscg(5.0, G) == pytest.approx(0.56, rel=1e-14)
    assert rdp_of_cscg(3.7, (0.0, 1.0)) == pytest.approx(3.7, rel=1e-15)
    assert rdp_of_cscg(3.7, (2.5,)) == 2.5


@pytest.mark.parametrize("P_a", [0.5, 5.0, 10.0])
@pytest.mark.parametrize("alphas", [(0.01, 0.01, 0.01), (0.2, -0.01, 0.003, 1e-4)])
def test_rdp_closed_form_against_quadrature(P_a, alphas):
    closed = rdp_of_cscg(P_a, alphas)
    assert abs(closed - cscg_rdp_quadrature(P_a, alphas)) < 1e-10 * abs(closed)


def test_tail_sequence():
    F = tail_sequence_distribution(2, 5.0)
    assert F.points == (0.0, math.sqrt(20.0))
    assert F.probs == (0.75, 0.25)
    with pytest.raises(ValueError):
        tail_sequence_distribution(1, 5.0)
    pdl = [tail_delivered_power(l, 5.0, G) for l in (2, 4, 8, 16)]
    assert np.all(np.diff(pdl) > 0)
    for l in (2, 4, 8, 16):
        F = tail_sequence_distribution(l, 5.0)
        assert delivered_power(F, G) == pytest.approx(tail_delivered_power(l, 5.0, G), rel=1e-12)
    assert tail_delivered_power(2, 5.0, G) == pytest.approx(1.06, rel=1e-14)


def test_time_sharing_anchor():
    plan = time_sharing_plan(5.0, 0.8, G, 2)
    assert plan.tau == pytest.approx(0.48, abs=1e-12)
    assert plan.average_power == pytest.approx(5.0)
    assert plan.delivered_power == pytest.approx(0.8, abs=1e-12)


def test_time_sharing_table_trends():
    plans = time_sharing_table(5.0, 0.8, G, [2, 8, 32, 128])
    taus = [p.tau for p in plans]
    gaps = [p.gap_nats for p in plans]
    assert np.all(np.diff(taus) < 0)
    assert np.all(np.diff(gaps) < 0)
    assert gaps[-1] < 0.02
    assert all(g > 0 for g in gaps)
    for p in plans:
        h_ray, h_mix, chord = concavity_sandwich(p)
        assert h_ray > h_mix + 1e-8
        assert h_mix > chord + 1e-8
        # constraints of the peak-free problem
        assert average_power(p.mixture.discrete) == pytest.approx(5.0)
        assert p.delivered_power >= 0.8 - 1e-12


def test_degenerate_plan_below_cscg_power():
    plan = time_sharing_plan(5.0, 0.3, G, 2)
    assert plan.tau == 0.0
    assert plan.gap_nats < 2e-3
    assert plan.mi_nats == pytest.approx(awgn_capacity(5.0), abs=1e-8)


def test_tail_index_too_small_carries_minimum():
    P_d = tail_delivered_power(7, 5.0, G) - 1e-9
    with pytest.raises(TailIndexTooSmall) as info:
        time_sharing_plan(5.0, P_d, G, 3)
    assert info.value.minimal_l == 7
    assert "increase l" in str(info.value)


@pytest.mark.parametrize("P_d", [0.1, 1.0, 1.5, 5.0, 30.0, 1e3, 1e9])
def test_minimal_tail_index_is_minimal(P_d):
    l = minimal_tail_index(5.0, P_d, G)
    assert tail_delivered_power(l, 5.0, G) >= P_d
    if l > 2:
        assert tail_delivered_power(l - 1, 5.0, G) < P_d
