import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from harvestsim.distributions import DistributionSpec
from harvestsim.policies import (NodeState, PolicySpec, SensingConfig, decide,
                                 decide_constant_rate, decide_fading_linear_to,
                                 decide_greedy, decide_mto, decide_mwf,
                                 decide_to, decide_wf, find_min_rate_constant,
                                 mean_excess_power, solve_waterfilling_level,
                                 stability_bounds, waterfilling_rate)
from harvestsim.rates import linear_rate, log_rate

LOG = log_rate()
FADING_ATOMS = [(0.1, 0.1), (0.5, 0.3), (1.0, 0.4), (2.2, 0.2)]


def fading():
    return DistributionSpec.discrete(FADING_ATOMS)


# -- TO ------------------------------------------------------------------

def test_to_spends_mean_harvest_minus_margin():
    p = PolicySpec.to(1.0, LOG, epsilon=0.01)
    assert decide_to(NodeState(3.0, 5.0), p) == pytest.approx(0.99)


def test_to_energy_limited():
    p = PolicySpec.to(1.0, LOG, epsilon=0.01)
    assert decide_to(NodeState(3.0, 0.5), p) == pytest.approx(0.5)
    assert decide_to(NodeState(3.0, 0.0), p) == 0.0


# -- greedy ----------------------------------------------------------------

def test_greedy_linear():
    p = PolicySpec.greedy(linear_rate(10.0))
    assert decide_greedy(NodeState(2.0, 5.0), p) == pytest.approx(0.2)


def test_greedy_log_closed_form():
    p = PolicySpec.greedy(LOG)
    assert decide_greedy(NodeState(1.0, 10.0), p) == pytest.approx(
        math.e - 1.0, rel=1e-12)


def test_greedy_empty_queue_spends_nothing():
    p = PolicySpec.greedy(LOG)
    assert decide_greedy(NodeState(0.0, 3.0), p) == 0.0


# -- MTO ---------------------------------------------------------------------

def test_mto_surplus_correction():
    p = PolicySpec.mto(1.0, LOG, c=0.1)
    # min(e^5-1, 2, 0.99*(1 + 0.001*(2 - 0.5))) = 0.99 * 1.0015
    assert decide_mto(NodeState(5.0, 2.0), p) == pytest.approx(0.9914850)


def test_mto_empty_queue():
    p = PolicySpec.mto(1.0, LOG)
    assert decide_mto(NodeState(0.0, 7.0), p) == 0.0


def test_mto_cap_binds_with_large_battery():
    p = PolicySpec.mto(1.0, LOG, c=0.1)
    # 0.99*(1 + 0.001*(50 - 10)) = 1.0296
    assert decide_mto(NodeState(100.0, 50.0), p) == pytest.approx(1.0296)


# -- water filling -------------------------------------------------------------

def test_wf_below_threshold_is_silent():
    p = PolicySpec(kind="wf", rf=LOG, mean_harvest=1.0, epsilon=0.01, h0=0.5)
    assert decide_wf(NodeState(9.0, 100.0), 0.4, p) == 0.0
    assert decide_wf(NodeState(9.0, 100.0), 0.5, p) == 0.0
    assert decide_wf(NodeState(9.0, 100.0), 0.0, p) == 0.0


def test_wf_allocation_value():
    p = PolicySpec(kind="wf", rf=LOG, mean_harvest=1.0, epsilon=0.01, h0=0.5)
    assert decide_wf(NodeState(9.0, 1e18), 2.0, p) == pytest.approx(1.5)


def test_wf_battery_clamp():
    p = PolicySpec(kind="wf", rf=LOG, mean_harvest=1.0, epsilon=0.01, h0=0.5)
    assert decide_wf(NodeState(9.0, 0.7, ), 2.0, p) == pytest.approx(0.7)


def test_wf_level_meets_budget_to_1e9():
    h0 = solve_waterfilling_level(fading(), 0.99)
    assert mean_excess_power(fading(), 1.0 / h0) == pytest.approx(0.99,
                                                                  abs=1e-9)
    # closed-form check: only the top three atoms participate,
    # 0.9/h0 - 1.0909... = 0.99
    assert h0 == pytest.approx(0.9 / (0.99 + 0.3 / 0.5 + 0.4 + 0.2 / 2.2),
                               abs=1e-9)


def test_wf_map_nondecreasing_in_gain():
    p = PolicySpec(kind="wf", rf=LOG, mean_harvest=1.0, epsilon=0.01,
                   h0=solve_waterfilling_level(fading(), 0.99))
    s = NodeState(50.0, 1e18)
    gains = np.linspace(0.01, 5.0, 300)
    ts = [decide_wf(s, h, p) for h in gains]
    assert all(a <= b + 1e-15 for a, b in zip(ts, ts[1:]))


def test_wf_is_optimal_among_general_allocations():
    # independent oracle: convex program over arbitrary per-state energies
    cvxpy = pytest.importorskip("cvxpy")
    h = np.array([a for a, _ in FADING_ATOMS])
    prob = np.array([b for _, b in FADING_ATOMS])
    t = cvxpy.Variable(4, nonneg=True)
    objective = cvxpy.Maximize(prob @ cvxpy.log(1 + cvxpy.multiply(h, t)))
    problem = cvxpy.Problem(objective, [prob @ t == 0.99])
    problem.solve()
    h0 = solve_waterfilling_level(fading(), 0.99)
    wf_rate = waterfilling_rate(fading(), LOG, h0)
    assert wf_rate == pytest.approx(problem.value, abs=1e-6)
    assert wf_rate == pytest.approx(0.7040961570, abs=1e-6)


def test_wf_solver_rejects_zero_budget():
    with pytest.raises(ValueError):
        solve_waterfilling_level(fading(), 0.0)


def test_wf_level_exponential_fading_closed_form():
    d = DistributionSpec.exponential(1.0)
    h0 = solve_waterfilling_level(d, 0.99)
    # cross-check the exp1 fast path against direct quadrature
    from scipy import integrate
    val, _ = integrate.quad(lambda h: max(0.0, 1 / h0 - 1 / h) * math.exp(-h),
                            0, np.inf, limit=200)
    assert val == pytest.approx(0.99, abs=1e-7)


# -- MWF -----------------------------------------------------------------------

def test_mwf_empty_queue():
    p = PolicySpec(kind="mwf", rf=LOG, mean_harvest=1.0, epsilon=0.01, h0=0.5)
    assert decide_mwf(NodeState(0.0, 100.0), 2.2, p) == 0.0


def test_mwf_no_surplus_at_threshold_gain():
    p = PolicySpec(kind="mwf", rf=LOG, mean_harvest=1.0, epsilon=0.01, h0=0.5,
                   c_mto=0.1)
    # E <= c*q kills the correction and h = h0 kills the water-filling term
    assert decide_mwf(NodeState(10.0, 1.0), 0.5, p) == 0.0


def test_mwf_combined_value():
    p = PolicySpec(kind="mwf", rf=LOG, mean_harvest=1.0, epsilon=0.01, h0=0.5,
                   c_mto=0.1)
    # min(e^10 - 1, 100, 1.5 + 0.001*99) = 1.599
    assert decide_mwf(NodeState(10.0, 100.0), 2.0, p) == pytest.approx(1.599)


# -- fading linear TO -----------------------------------------------------------

def test_fading_linear_to_transmits_only_at_best_state():
    p = PolicySpec.fading_linear_to(1.0, linear_rate(10.0), hbar=2.2,
                                    p_hbar=0.2, epsilon=0.01)
    s = NodeState(5.0, 100.0)
    assert decide_fading_linear_to(s, 2.2, p) == pytest.approx(4.95)
    assert decide_fading_linear_to(s, 1.0, p) == 0.0
    assert decide_fading_linear_to(NodeState(5.0, 2.0), 2.2, p) == 2.0


def test_fading_linear_to_requires_positive_best_state_probability():
    with pytest.raises(ValueError):
        PolicySpec.fading_linear_to(1.0, linear_rate(10.0), hbar=2.2,
                                    p_hbar=0.0)


# -- constant rate ----------------------------------------------------------------

def test_constant_rate_clamps_to_battery():
    p = PolicySpec.constant_rate(0.5, LOG)
    assert decide_constant_rate(NodeState(4.0, 3.0), p) == 0.5
    assert decide_constant_rate(NodeState(4.0, 0.2), p) == 0.2


def test_find_min_rate_constant():
    assert find_min_rate_constant(0.0, LOG) == 0.0
    assert find_min_rate_constant(1.0, LOG) == pytest.approx(math.e - 1.0)
    assert find_min_rate_constant(2.0, linear_rate(10.0)) == pytest.approx(0.2)


def test_energy_neutral_feasibility_predicate():
    sc = SensingConfig(DistributionSpec.deterministic(0.2), delta=0.05)
    assert sc.energy_neutral_feasible(0.5, 1.0)          # 0.7 < 0.95
    assert not sc.energy_neutral_feasible(0.8, 1.0)      # 1.0 >= 0.95


# -- stability bounds --------------------------------------------------------------

def test_bounds_fig4_operating_point():
    greedy_b, to_b = stability_bounds(DistributionSpec.exponential(10.0), LOG)
    assert greedy_b == pytest.approx(2.01, abs=0.02)
    assert to_b == pytest.approx(2.40, abs=0.024)


def test_bounds_deterministic_harvest_coincide():
    greedy_b, to_b = stability_bounds(DistributionSpec.deterministic(3.0), LOG)
    assert greedy_b == pytest.approx(to_b, abs=1e-12)


def test_bounds_linear_rate_coincide():
    greedy_b, to_b = stability_bounds(DistributionSpec.exponential(1.0),
                                      linear_rate(10.0))
    assert greedy_b == pytest.approx(10.0, rel=1e-8)
    assert to_b == pytest.approx(10.0, rel=1e-12)


def test_bounds_fading_fig8_operating_point():
    # caption values: E[g(hY)] = 0.62, E[g(h E[Y])] = 0.64
    y = DistributionSpec.erlang(1.0, shape=5)
    greedy_b, to_b = stability_bounds(y, LOG, h_dist=fading())
    assert greedy_b == pytest.approx(0.6193298160946131, abs=1e-6)
    assert to_b == pytest.approx(0.6410595845979961, abs=1e-9)
    assert greedy_b == pytest.approx(0.62, abs=0.005)
    assert to_b == pytest.approx(0.64, abs=0.005)


def test_bounds_jensen_ordering():
    for d in (DistributionSpec.exponential(2.0),
              DistributionSpec.erlang(1.0, shape=5),
              DistributionSpec.hyperexponential(1.0),
              DistributionSpec.truncated_poisson(1.0, cap=5)):
        greedy_b, to_b = stability_bounds(d, LOG)
        assert greedy_b <= to_b + 1e-12


# -- global battery-respect property -----------------------------------------------

@settings(max_examples=200, deadline=None)
@given(q=st.floats(min_value=0.0, max_value=1e4),
       e=st.floats(min_value=0.0, max_value=1e4),
       h=st.floats(min_value=0.0, max_value=10.0))
def test_no_policy_overdraws_battery(q, e, h):
    s = NodeState(q, e)
    policies = [
        PolicySpec.to(1.0, LOG),
        PolicySpec.greedy(LOG),
        PolicySpec.mto(1.0, LOG),
        PolicySpec(kind="wf", rf=LOG, mean_harvest=1.0, epsilon=0.01, h0=0.4),
        PolicySpec(kind="mwf", rf=LOG, mean_harvest=1.0, epsilon=0.01, h0=0.4),
        PolicySpec.fading_linear_to(1.0, linear_rate(10.0), hbar=2.2,
                                    p_hbar=0.2),
        PolicySpec.constant_rate(0.5, LOG),
    ]
    for p in policies:
        t = decide(p, s, h=h)
        assert 0.0 <= t <= s.E + 1e-12


def test_policy_validation():
    with pytest.raises(ValueError):
        PolicySpec.to(1.0, LOG, epsilon=1.5)     # margin above mean harvest
    with pytest.raises(ValueError):
        PolicySpec.to(1.0, LOG, epsilon=0.0)
    with pytest.raises(ValueError):
        PolicySpec.mto(1.0, LOG, c=0.0)
    with pytest.raises(ValueError):
        PolicySpec(kind="wf", rf=LOG, mean_harvest=1.0, epsilon=0.01, h0=0.0)
    with pytest.raises(ValueError):
        NodeState(-1.0, 0.0)
    with pytest.raises(ValueError):
        NodeState(0.0, math.inf)
