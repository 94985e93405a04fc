"""Small independent reference computations used by the tests.

Nothing here imports the solver stack: each oracle works from phasor algebra or
brute force so a shared bug cannot hide in both sides of a comparison.
"""
import numpy as np

from evopf.grid import Bus, Line, build_admittance
from evopf.scenario import EvFleet, Scenario


def two_bus_voltage(v1, r, x, p, q):
    """|V2| for a load ``p + jq`` fed through ``r + jx`` from a source at ``v1``.

    Squaring the voltage-drop relation gives
    ``u^2 + (2(rp + xq) - v1^2) u + (r^2 + x^2)(p^2 + q^2) = 0`` with ``u = |V2|^2``;
    the high-voltage root is the physical one.
    """
    b = 2 * (r * p + x * q) - v1**2
    c = (r**2 + x**2) * (p**2 + q**2)
    disc = b * b - 4 * c
    if disc < 0:
        raise ValueError("load beyond the transfer limit")
    return float(np.sqrt((-b + np.sqrt(disc)) / 2))


def two_bus_network(r=0.01, x=0.01, p_load=0.0, q_load=0.0, v_min=0.90, v_max=1.05):
    buses = [Bus(1, v_min, v_max, attached_grid_ids=(0,)), Bus(2, v_min, v_max, p_load, q_load)]
    return build_admittance(buses, [Line(1, 2, r, x)])


def one_hour_scenario(network, p_load, q_load, fleet=None, price=100.0, r_charge=1.0, r_discharge=1.0):
    fleets = () if fleet is None else (fleet,)
    n = network.n_bus
    dp = np.zeros((1, n))
    dq = np.zeros((1, n))
    dp[0, -1], dq[0, -1] = p_load, q_load
    return Scenario(
        tou_price=np.array([price]), demand_p=dp, demand_q=dq,
        solar_profile=np.zeros(1), r_charge=np.array([r_charge]),
        r_discharge=np.array([r_discharge]), travel_profile=np.ones(1),
        fleets=fleets,
    )


def brute_force_two_bus(r, x, p_load, q_load, ev_power, price, base_mva=10.0,
                        v_lo=0.90, v_hi=1.05, step=1e-4):
    """Grid search over |V2| for the cheapest feasible one-hour dispatch.

    For each candidate |V2| (angle reference at bus 2) the sending voltage is
    ``V1 = V2 + z * conj(S2 / V2)``; the point is feasible when ``|V1|`` lies in
    the same band. Grid energy is the load plus the series loss ``r |I|^2``.
    Returns ``(v2, v1, cost)``.
    """
    z = complex(r, x)
    s2 = complex(p_load + ev_power, q_load)
    v2 = np.arange(v_lo, v_hi + step / 2, step)
    current = np.conj(s2 / v2)
    v1 = np.abs(v2 + z * current)
    p_grid = s2.real + r * np.abs(current) ** 2
    cost = price * base_mva * p_grid
    ok = (v1 >= v_lo) & (v1 <= v_hi)
    if not ok.any():
        raise ValueError("no feasible grid point")
    k = np.flatnonzero(ok)[np.argmin(cost[ok])]
    return float(v2[k]), float(v1[k]), float(cost[k])


def random_radial(rng, n_bus, load_scale=0.05):
    """Random tree: each new bus hangs off a uniformly chosen earlier bus."""
    buses = [Bus(1, attached_grid_ids=(0,))]
    lines = []
    for b in range(2, n_bus + 1):
        buses.append(Bus(b, p_load=rng.uniform(0, load_scale), q_load=rng.uniform(0, load_scale / 2)))
        parent = int(rng.integers(1, b))
        lines.append(Line(parent, b, rng.uniform(0.002, 0.03), rng.uniform(0.002, 0.03)))
    return build_admittance(buses, lines)


def fleet(bus, p_max, e_max, travel=0.0, e_min=0.0):
    return EvFleet(bus=bus, e_min=e_min, e_max=e_max, p_charge_max=p_max, travel_power=travel)
