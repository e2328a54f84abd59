import math

import numpy as np
import pytest

from swiptcap.channel import DiscreteAmplitudeDistribution as D, entropy_H, mutual_information, rayleigh_quantization
from swiptcap.constraints import (
    EvenPolynomial,
    InfeasibleProblemError,
    OopProblem,
    RdpProblem,
    feasible_pd_max,
)
from swiptcap.solver import (
    SolverConfig,
    certify,
    clean_support,
    entropy_gradient,
    maximize_entropy,
    recover_multipliers,
    solve,
    verify_kkt,
)

G = EvenPolynomial((0.01, 0.01, 0.01))
FAST = SolverConfig(restarts_per_m=8)


@pytest.fixture(scope="module")
def small_rdp_solution():
    return solve(RdpProblem(5.0, 0.3, 4.0, G), FAST)


def fd_gradient(F, h=1e-5):
    r, p = F.r.copy(), F.p.copy()
    gp, gr = np.empty(r.size), np.empty(r.size)
    for i in range(r.size):
        for vec, out in ((p, gp), (r, gr)):
            up, dn = vec.copy(), vec.copy()
            up[i] += h
            dn[i] -= h
            if vec is p:
                Hu, Hd = _H(r, up), _H(r, dn)
            else:
                Hu, Hd = _H(up, p), _H(dn, p)
            out[i] = (Hu - Hd) / (2 * h)
    return gp, gr


def _H(r, p):
    from swiptcap.channel import entropy_terms

    return entropy_terms(r, p, tol=1e-12)[0]


def test_gradient_delta_zero():
    dp, dr = entropy_gradient(D.point_mass(0.0))
    assert abs(dp[0]) < 1e-9
    assert abs(dr[0]) < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_gradient_against_finite_differences(seed):
    rng = np.random.default_rng(seed)
    F = D.from_arrays(np.sort(rng.uniform(0.3, 6.0, 3)), rng.dirichlet(np.ones(3)))
    dp, dr = entropy_gradient(F)
    fp, fr = fd_gradient(F)
    np.testing.assert_allclose(dp, fp, rtol=1e-5)
    np.testing.assert_allclose(dr, fr, rtol=1e-5)


def test_gradient_at_zero_mass_point_one_sided():
    F = D((0.0, 2.0), (0.4, 0.6))
    _, dr = entropy_gradient(F)
    h = 1e-5
    one_sided = (_H(np.array([h, 2.0]), F.p) - _H(F.r, F.p)) / h
    assert abs(dr[0]) < 1e-9
    assert abs(one_sided) < 1e-4  # H is even in r_i, so the slope is O(h)


def test_clean_support_prunes_and_merges():
    r, p = clean_support(np.array([0.5, 1.0, 1.00005, 3.0]), np.array([0.3, 0.2, 0.2, 5e-7]))
    assert r.size == 2
    assert p.sum() == pytest.approx(1.0)
    # merged point keeps the RMS amplitude
    assert r[1] == pytest.approx(math.sqrt((1.0**2 + 1.00005**2) / 2), rel=1e-12)


def test_maximize_entropy_deterministic_and_feasible():
    problem = RdpProblem(5.0, 0.3, 4.0, G)
    a = maximize_entropy(problem, 3, seed=(1, 3, 0))
    b = maximize_entropy(problem, 3, seed=(1, 3, 0))
    np.testing.assert_array_equal(a.points, b.points)
    np.testing.assert_array_equal(a.probs, b.probs)
    assert np.dot(a.probs, a.points**2) <= 5.0 + 1e-8
    assert np.dot(a.probs, G(a.points)) >= 0.3 - 1e-8
    assert np.all((a.points >= 0) & (a.points <= 4.0))


def test_forced_two_point_law_at_feasibility_boundary():
    P_d = feasible_pd_max(5.0, 4.0, G)
    sol = solve(RdpProblem(5.0, P_d, 4.0, G), FAST)
    assert sol.distribution.points == pytest.approx((0.0, 4.0), abs=1e-9)
    assert sol.distribution.probs[1] == pytest.approx(5 / 16, abs=1e-4)
    assert sol.mi_nats == pytest.approx(mutual_information(D((0.0, 4.0), (11 / 16, 5 / 16))), abs=1e-7)
    assert sol.kkt.passed
    # two support points, two multipliers: exactly determined
    assert sol.kkt.max_support_residual < 1e-6


def test_infeasible_raises_with_bound():
    with pytest.raises(InfeasibleProblemError) as info:
        solve(RdpProblem(5.0, 99.0, 4.0, G), FAST)
    assert info.value.bound == pytest.approx(0.86, abs=1e-3)


def test_solution_invariants(small_rdp_solution):
    sol = small_rdp_solution
    F = sol.distribution
    assert sol.kkt.passed
    assert sol.kkt.max_support_residual <= 1e-4
    assert sol.kkt.max_grid_violation <= 1e-4
    assert min(sol.kkt.multipliers) >= -1e-12
    assert sum(F.probs) == pytest.approx(1.0, abs=1e-12)
    assert sol.constraint_values[0] <= 5.0 + 1e-8
    assert sol.constraint_values[1] >= 0.3 - 1e-8
    assert sol.mi_nats == pytest.approx(mutual_information(F), abs=1e-8)
    assert sol.mi_nats <= math.log(3.5)
    assert len(sol.trace) >= 1


def test_solver_deterministic(small_rdp_solution):
    again = solve(RdpProblem(5.0, 0.3, 4.0, G), FAST)
    assert again.distribution == small_rdp_solution.distribution
    assert again.mi_nats == small_rdp_solution.mi_nats
    assert again.kkt == small_rdp_solution.kkt


def test_slack_delivered_power_has_zero_multiplier(small_rdp_solution):
    # E[g] at the optimum exceeds 0.3, so complementary slackness forces mu2 = 0
    assert small_rdp_solution.constraint_values[1] > 0.3 + 1e-3
    mult, K, _ = recover_multipliers(small_rdp_solution.distribution, small_rdp_solution.problem)
    assert mult[1] == 0.0
    assert mult[0] > 0.0


@pytest.mark.parametrize("shift", [0.2, -0.2])
def test_certificate_rejects_moved_point(small_rdp_solution, shift):
    F = small_rdp_solution.distribution
    problem = small_rdp_solution.problem
    base_H = entropy_H(F)
    for i in range(F.size):
        r = F.r.copy()
        r[i] = min(max(r[i] + shift, 0.0), problem.r_p)
        if np.any(np.diff(r) <= 0) or r[i] == F.r[i]:
            continue
        G2 = D(tuple(r), F.probs)
        report = certify(G2, problem)
        assert (not report.passed) or entropy_H(G2) < base_H


def test_certificate_rejects_reweighted_law(small_rdp_solution):
    F = small_rdp_solution.distribution
    base_H = entropy_H(F)
    for i in range(F.size):
        p = F.p.copy()
        p[i] += 0.05
        p /= p.sum()
        G2 = D(F.points, tuple(p))
        report = certify(G2, small_rdp_solution.problem)
        assert (not report.passed) or entropy_H(G2) < base_H


def test_rayleigh_quantization_nearly_satisfies_kkt():
    # CSCG is optimal without a peak limit; Phi ~ 0 is only expected where the
    # quantized law has mass, since its output tail is Gaussian, not Rayleigh
    F = rayleigh_quantization(5.0, 300)
    problem = RdpProblem(5.0, 0.0, F.points[-1], G)
    mult, _, _ = recover_multipliers(F, problem)
    report = verify_kkt(F, mult, problem, grid_size=2000)
    assert mult[1] == 0.0
    assert mult[0] == pytest.approx(1 / 7, rel=1e-2)  # d C / d P_a = 1/(P_a + 2)
    assert report.max_grid_violation < 5e-3


def test_verify_kkt_flags_perturbed_law():
    P_d = feasible_pd_max(5.0, 4.0, G)
    problem = RdpProblem(5.0, P_d, 4.0, G)
    sol = solve(problem, FAST)
    assert sol.kkt.passed
    moved = D((0.2, 4.0), sol.distribution.probs)
    report = verify_kkt(moved, sol.kkt.multipliers, problem)
    assert not report.passed


def test_oop_with_zero_eps_matches_rdp_with_zero_pd():
    rdp = solve(RdpProblem(5.0, 0.0, 4.0, G), FAST)
    oop = solve(OopProblem(5.0, 4.0, 1.0, 4.0, 0.0), FAST)
    assert rdp.kkt.passed and oop.kkt.passed
    assert oop.mi_nats == pytest.approx(rdp.mi_nats, abs=1e-4)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(m_init=0)
    with pytest.raises(ValueError):
        SolverConfig(tol_eq=0.0)
    with pytest.raises(ValueError):
        solve(RdpProblem(5.0, 0.3, math.inf, G))
