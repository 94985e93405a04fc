import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evopf.conic import solve
from evopf.fixed_current import ConvergenceError, effective_ev_power, solve_fixed_current
from evopf.recovery import recover
from evopf.scenario import scale_penetration
from evopf.socp import build_fixed_power

from oracles import brute_force_two_bus, fleet, one_hour_scenario, two_bus_network


def test_effective_power_cases():
    assert effective_ev_power(0.01, 1.0) == pytest.approx(0.01)
    assert effective_ev_power(0.01, 0.95) == pytest.approx(0.0095)
    assert effective_ev_power(0.0, 0.93) == 0.0
    np.testing.assert_allclose(effective_ev_power([0.01, 0.02], [1.0, 0.9]), [0.01, 0.018])
    with pytest.raises(ValueError):
        effective_ev_power(-0.01, 1.0)
    with pytest.raises(ValueError):
        effective_ev_power(0.01, 0.0)


@given(i=st.floats(0, 1), v1=st.floats(0.8, 1.1), v2=st.floats(0.8, 1.1))
def test_effective_power_monotone_in_voltage(i, v1, v2):
    lo, hi = sorted((v1, v2))
    assert effective_ev_power(i, lo) <= effective_ev_power(i, hi)


def test_zero_penetration_is_fixed_power(network, scenario):
    fleets = scale_penetration(scenario.fleets, 0.0)
    fc = solve_fixed_current(network, scenario, fleets)
    fp = recover(network, solve(build_fixed_power(network, scenario, fleets), check=True))
    assert fc.info["iterations"] == 1
    np.testing.assert_array_equal(fc.v, fp.v)
    assert fc.objective == fp.objective


@pytest.mark.parametrize("p_load,q_load,travel", [(0.3, 0.15, 0.05), (0.6, 0.3, 0.1), (0.1, 0.02, 0.0)])
def test_two_bus_matches_brute_force(p_load, q_load, travel):
    r, x = 0.01, 0.01
    net = two_bus_network(r, x)
    scn = one_hour_scenario(net, p_load, q_load, fleet(2, 0.3, 0.5, travel=travel))
    sol = solve_fixed_current(net, scn)
    # one hour with a cyclic energy balance: charging exactly replaces the energy driven away
    ev = travel / 0.95 / 0.95
    assert sol.ev_power[0, 0] == pytest.approx(ev, abs=1e-9)
    v2, _, cost = brute_force_two_bus(r, x, p_load, q_load, ev, price=100.0, base_mva=net.base_mva)
    assert sol.v[0, 1] == pytest.approx(v2, abs=2e-4)
    assert sol.objective == pytest.approx(cost, rel=1e-3)


@pytest.fixture(scope="module")
def bundled_half(network, scenario):
    return solve_fixed_current(network, scenario.with_tou(2), scale_penetration(scenario.fleets, 0.5), tol=1e-7)


def test_bundled_convergence(bundled_half):
    trace = bundled_half.info["trace"]
    assert trace[-1].delta <= 1e-7
    objectives = [it.solution.objective for it in trace]
    steps = np.abs(np.diff(objectives))
    assert np.all(np.diff(steps) < 0)
    assert steps[-1] < 1e-6 * abs(objectives[-1])
    assert bundled_half.model == "fixed_current"
    # the power booked in the balance is the current times the voltage it was linearized at
    np.testing.assert_allclose(bundled_half.ev_power,
                               bundled_half.ev_current * trace[-1].v_prev[:, [f.bus - 1 for f in bundled_half.fleets]])


def test_voltage_used_matches_recovered(bundled_half):
    v_prev = bundled_half.info["trace"][-1].v_prev
    assert np.max(np.abs(v_prev - bundled_half.v)) <= 1e-7


def test_non_convergence_carries_history(network, scenario):
    with pytest.raises(ConvergenceError) as err:
        solve_fixed_current(network, scenario, scale_penetration(scenario.fleets, 0.5), tol=1e-12, max_iter=2)
    assert len(err.value.deltas) == 2
    assert all(d > 0 for d in err.value.deltas)
