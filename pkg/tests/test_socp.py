import io

import numpy as np
import pytest

from evopf.grid import Bus, build_admittance
from evopf.scenario import Scenario, scale_penetration
from evopf.socp import build_fixed_power, dump_program, symmetry_reduce, variables_per_hour


def zero_load(network, horizon=24, **kw):
    z = np.zeros((horizon, network.n_bus))
    return Scenario(
        tou_price=np.full(horizon, 100.0), demand_p=z, demand_q=z,
        solar_profile=np.zeros(horizon), r_charge=np.ones(horizon), r_discharge=np.zeros(horizon),
        travel_profile=np.ones(horizon), **kw,
    )


def test_variable_count(network, scenario):
    prog = build_fixed_power(network, scenario, scale_penetration(scenario.fleets, 0.5))
    per_hour = variables_per_hour(33, 32, 1, len(scenario.solar_units), 32)
    assert per_hour == 2 + len(scenario.solar_units) + 2 * 32 + 33 + 2 * 32 + 2 * 64
    assert prog.n_var == 24 * per_hour
    assert len(prog.cones) == 24 * 32
    assert len(prog.thermal) == 24 * 64


def test_zero_penetration_has_no_ev_variables(network, scenario):
    prog = build_fixed_power(network, scenario, scale_penetration(scenario.fleets, 0.0))
    assert prog.family("Pc") == [] and prog.family("E") == []
    assert not any(lab.startswith("energy") for lab in prog.eq_labels)
    assert prog.n_var == 24 * variables_per_hour(33, 32, 1, len(scenario.solar_units), 0)


def test_single_bus_balance():
    net = build_admittance([Bus(1, attached_grid_ids=(0,))], [])
    scn = zero_load(net, 1)
    scn = Scenario(**{**scn.__dict__, "demand_p": np.array([[0.3]]), "demand_q": np.array([[0.1]])})
    prog = build_fixed_power(net, scn)
    row = prog.eq_labels.index("balance_p[1,1]")
    coefs = prog.a_eq[row].toarray().ravel()
    assert coefs[prog.var("Pg", 1, 1)] == 1.0
    g11 = net.g_matrix[0, 0]
    assert coefs[prog.var("cii", 1, 1)] == pytest.approx(-g11)
    assert prog.b_eq[row] == pytest.approx(0.3)


def test_symmetry_reduction_counts(network, scenario):
    fleets = scale_penetration(scenario.fleets, 0.5)
    full = build_fixed_power(network, scenario, fleets, reduce=False)
    red = symmetry_reduce(full)
    assert full.n_var - red.n_var == 2 * 32 * 24
    assert len(full.cones) == 2 * len(red.cones)
    assert symmetry_reduce(red) is red
    # reverse-direction references now hit the canonical variable with a sign flip on s
    row = red.eq_labels.index("flow_p[3,2,1]")
    coefs = red.a_eq[row].toarray().ravel()
    k = network.index
    b32 = network.b_matrix[k(3), k(2)]
    assert coefs[red.var("sij", 2, 3, 1)] == pytest.approx(b32)
    assert ("sij", 3, 2, 1) not in red.index


def test_cone_reverse_direction_identical(network, scenario):
    full = build_fixed_power(network, scenario, reduce=False)
    red = symmetry_reduce(full)
    c = red.var("cij", 2, 3, 1)
    rows = [tuple(r) for r in red.cones if r[0] == c]
    assert len(rows) == 1
    cij, sij, cii, cjj = rows[0]
    assert {cii, cjj} == {red.var("cii", 2, 1), red.var("cii", 3, 1)}


def test_energy_rows_telescope(network, scenario):
    prog = build_fixed_power(network, scenario, scale_penetration(scenario.fleets, 0.5))
    e_cols = [prog.var(*key) for key in prog.family("E")]
    for e in range(len(prog.meta["fleets"])):
        rows = [r for r, lab in enumerate(prog.eq_labels) if lab.startswith(f"energy[{e},")]
        assert len(rows) == 24
        total = np.asarray(prog.a_eq[rows].sum(axis=0)).ravel()
        assert np.all(total[e_cols] == 0)


def test_flat_start_is_feasible(network):
    prog = build_fixed_power(network, zero_load(network, 3))
    x = np.zeros(prog.n_var)
    for key, k in prog.index.items():
        if key[0] in ("cii", "cij"):
            x[k] = 1.0
    assert np.max(np.abs(prog.a_eq @ x - prog.b_eq)) < 1e-12
    assert np.all(x >= prog.lb) and np.all(x <= prog.ub)


def test_flow_rows_match_nonlinear_flows(network):
    rng = np.random.default_rng(0)
    prog = build_fixed_power(network, zero_load(network, 1), reduce=False)
    v = rng.uniform(0.95, 1.05, network.n_bus)
    th = rng.uniform(-0.05, 0.05, network.n_bus)
    V = v * np.exp(1j * th)
    x = np.zeros(prog.n_var)
    k = network.index
    for i in network.bus_ids:
        x[prog.var("cii", i, 1)] = v[k(i)] ** 2
    for i, j in prog.meta["directed"]:
        prod = V[k(i)] * np.conj(V[k(j)])
        x[prog.var("cij", i, j, 1)] = prod.real
        x[prog.var("sij", i, j, 1)] = prod.imag
        y = -network.ybus[k(i), k(j)]
        s = V[k(i)] * np.conj((V[k(i)] - V[k(j)]) * y)
        x[prog.var("p", i, j, 1)] = s.real
        x[prog.var("q", i, j, 1)] = s.imag
    flow = [r for r, lab in enumerate(prog.eq_labels) if lab.startswith("flow_")]
    assert np.max(np.abs(prog.a_eq[flow] @ x - prog.b_eq[flow])) < 1e-12


def test_ev_voltage_switches_family(network, scenario):
    fleets = scale_penetration(scenario.fleets, 0.5)
    prog = build_fixed_power(network, scenario, fleets, ev_voltage=np.full((24, 32), 0.97))
    assert prog.family("Pc") == [] and len(prog.family("Ic")) == 24 * 32
    row = prog.eq_labels.index("balance_p[2,5]")
    assert prog.a_eq[row, prog.var("Ic", 0, 5)] == pytest.approx(-0.97)


def test_dump(network, scenario):
    prog = build_fixed_power(network, scenario)
    buf = io.StringIO()
    dump_program(prog, buf)
    text = buf.getvalue()
    assert text.startswith(f"# conic program: {prog.n_var} variables")
    assert "[cones]" in text and "balance_p[1,1]" in text
