"""Lifted second-order-cone program for multi-period OPF with solar and EV fleets.

Variables per hour ``t``: grid injections ``Pg``/``Qg``, solar dispatch ``Ps``,
fleet charging ``Pc`` (or ``Ic`` for the fixed-current model), fleet energy
``E``, squared voltages ``cii``, lifted products ``cij``/``sij`` and directed
branch flows ``p``/``q``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .grid import Network, validate_radial
from .scenario import Scenario, ScenarioError


@dataclass(eq=False)
class ConicProgram:
    """``min cost·x`` s.t. ``a_eq x = b_eq``, ``a_ineq x <= b_ineq``, ``lb <= x <= ub``,
    lifted cones ``||(2 cij, 2 sij, cii - cjj)|| <= cii + cjj`` and thermal cones
    ``||(p, q)|| <= s_max``.

    ``cones`` rows are variable indices ``(cij, sij, cii, cjj)``; ``cone_sign``
    carries the sign of ``sij`` after symmetry elimination.
    """

    names: list
    index: dict
    cost: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    eq_labels: list
    a_ineq: sp.csr_matrix
    b_ineq: np.ndarray
    ineq_labels: list
    cones: np.ndarray
    cone_sign: np.ndarray
    thermal: np.ndarray
    thermal_limit: np.ndarray
    meta: dict = field(default_factory=dict, repr=False)

    @property
    def n_var(self) -> int:
        return len(self.names)

    def var(self, *key) -> int:
        return self.index[key]

    def family(self, name: str) -> list:
        return [k for k in self.index if k[0] == name]


class _Builder:
    def __init__(self):
        self.names, self.index = [], {}
        self.lb, self.ub, self.cost = [], [], []
        self.rows, self.cols, self.vals, self.rhs, self.labels = [], [], [], [], []
        self.cones, self.thermal, self.thermal_limit = [], [], []

    def add(self, key, lb=-np.inf, ub=np.inf, cost=0.0):
        k = len(self.names)
        self.index[key] = k
        self.names.append("{}[{}]".format(key[0], ",".join(str(v) for v in key[1:])))
        self.lb.append(lb)
        self.ub.append(ub)
        self.cost.append(cost)
        return k

    def eq(self, terms, rhs, label):
        r = len(self.rhs)
        for col, val in terms:
            if val != 0.0:
                self.rows.append(r)
                self.cols.append(col)
                self.vals.append(val)
        self.rhs.append(rhs)
        self.labels.append(label)

    def finish(self, meta):
        n = len(self.names)
        a_eq = sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=(len(self.rhs), n))
        a_eq.sum_duplicates()
        return ConicProgram(
            names=self.names, index=self.index,
            cost=np.array(self.cost, dtype=float),
            lb=np.array(self.lb, dtype=float), ub=np.array(self.ub, dtype=float),
            a_eq=a_eq, b_eq=np.array(self.rhs, dtype=float), eq_labels=self.labels,
            a_ineq=sp.csr_matrix((0, n)), b_ineq=np.zeros(0), ineq_labels=[],
            cones=np.array(self.cones, dtype=int).reshape(-1, 4),
            cone_sign=np.ones(len(self.cones)),
            thermal=np.array(self.thermal, dtype=int).reshape(-1, 2),
            thermal_limit=np.array(self.thermal_limit, dtype=float),
            meta=meta,
        )


def _check_inputs(network: Network, scenario: Scenario, fleets):
    validate_radial(network)
    if scenario.demand_p.shape[1] != network.n_bus:
        raise ScenarioError("demand", f"scenario has {scenario.demand_p.shape[1]} buses, network {network.n_bus}")
    for f in fleets:
        if f.bus not in network.neighbors:
            raise ScenarioError("fleet.bus", f"fleet attached to unknown bus {f.bus}")
    for u in scenario.solar_units:
        if u.bus not in network.neighbors:
            raise ScenarioError("solar.bus", f"solar unit attached to unknown bus {u.bus}")


def build_fixed_power(network: Network, scenario: Scenario, fleets=None, *, ev_voltage=None,
                      reduce: bool = True, pin_energy: bool = False) -> ConicProgram:
    """Build the lifted OPF program.

    ``fleets`` defaults to the scenario's reference fleets. Fleets with every
    parameter zero are dropped. With ``ev_voltage`` (a (T, n_fleet) array) the
    EV variable is a charging current whose power is ``I * ev_voltage``; this is
    the per-iteration program of the fixed-current model. ``pin_energy`` fixes
    the end-of-day fleet energy to ``e_init_fraction * e_max``.
    """
    if fleets is None:
        fleets = scenario.fleets
    _check_inputs(network, scenario, fleets)
    active = [f for f in fleets if not f.is_empty]
    if ev_voltage is not None:
        ev_voltage = np.asarray(ev_voltage, dtype=float)
        keep = [k for k, f in enumerate(fleets) if not f.is_empty]
        ev_voltage = ev_voltage[:, keep]
    T = scenario.horizon
    hours = range(1, T + 1)
    ev_family = "Pc" if ev_voltage is None else "Ic"
    price = scenario.tou_price
    solar_avail = scenario.solar_availability()
    travel = scenario.travel_power(active)
    G, B = network.g_matrix, network.b_matrix
    idx = network.index
    ids = network.bus_ids
    grids = network.grid_buses
    pairs = [(ln.from_bus, ln.to_bus) for ln in network.lines]
    directed = pairs + [(j, i) for i, j in pairs]
    limits = {frozenset((ln.from_bus, ln.to_bus)): ln.s_max for ln in network.lines}

    b = _Builder()
    for t in hours:
        for g in grids:
            b.add(("Pg", g, t), cost=price[t - 1] * network.base_mva)
            b.add(("Qg", g, t))
        for s in range(len(scenario.solar_units)):
            b.add(("Ps", s, t), 0.0, solar_avail[t - 1, s])
        for e, f in enumerate(active):
            b.add((ev_family, e, t), 0.0, f.p_charge_max * scenario.r_charge[t - 1])
            b.add(("E", e, t), f.e_min, f.e_max)
        for i in ids:
            bus = network.bus(i)
            b.add(("cii", i, t), bus.v_min**2, bus.v_max**2)
        for i, j in directed:
            b.add(("cij", i, j, t))
            b.add(("sij", i, j, t))
        for i, j in directed:
            b.add(("p", i, j, t))
            b.add(("q", i, j, t))

    V = b.index
    solar_at = {}
    for s, u in enumerate(scenario.solar_units):
        solar_at.setdefault(u.bus, []).append(s)
    fleet_at = {}
    for e, f in enumerate(active):
        fleet_at.setdefault(f.bus, []).append(e)

    for t in hours:
        for i in ids:
            k = idx(i)
            nbrs = network.neighbors[i]
            shunt_g = G[k, k] + sum(G[k, idx(j)] for j in nbrs)
            shunt_b = B[k, k] + sum(B[k, idx(j)] for j in nbrs)
            terms = [(V["Ps", s, t], 1.0) for s in solar_at.get(i, ())]
            terms += [(V["Pg", i, t], 1.0)] if i in grids else []
            terms.append((V["cii", i, t], -shunt_g))
            terms += [(V["p", i, j, t], -1.0) for j in nbrs]
            for e in fleet_at.get(i, ()):
                coef = 1.0 if ev_voltage is None else ev_voltage[t - 1, e]
                terms.append((V[ev_family, e, t], -coef))
            b.eq(terms, scenario.demand_p[t - 1, k], f"balance_p[{i},{t}]")

            terms = [(V["Qg", i, t], 1.0)] if i in grids else []
            terms.append((V["cii", i, t], shunt_b))
            terms += [(V["q", i, j, t], -1.0) for j in nbrs]
            b.eq(terms, scenario.demand_q[t - 1, k], f"balance_q[{i},{t}]")

        for i, j in directed:
            g, bb = G[idx(i), idx(j)], B[idx(i), idx(j)]
            b.eq([(V["p", i, j, t], 1.0), (V["cii", i, t], g), (V["cij", i, j, t], -g),
                  (V["sij", i, j, t], -bb)], 0.0, f"flow_p[{i},{j},{t}]")
            b.eq([(V["q", i, j, t], 1.0), (V["cii", i, t], -bb), (V["cij", i, j, t], bb),
                  (V["sij", i, j, t], -g)], 0.0, f"flow_q[{i},{j},{t}]")

        for i, j in pairs:
            b.eq([(V["cij", i, j, t], 1.0), (V["cij", j, i, t], -1.0)], 0.0, f"sym_c[{i},{j},{t}]")
            b.eq([(V["sij", i, j, t], 1.0), (V["sij", j, i, t], 1.0)], 0.0, f"sym_s[{i},{j},{t}]")

        for i, j in directed:
            b.cones.append((V["cij", i, j, t], V["sij", i, j, t], V["cii", i, t], V["cii", j, t]))
            b.thermal.append((V["p", i, j, t], V["q", i, j, t]))
            b.thermal_limit.append(limits[frozenset((i, j))])

    for e, f in enumerate(active):
        for t in hours:
            prev = T if t == 1 else t - 1
            coef = 1.0 if ev_voltage is None else ev_voltage[t - 1, e]
            drive = travel[t - 1, e] * scenario.r_discharge[t - 1] / f.eff_discharge
            b.eq([(V["E", e, t], 1.0), (V["E", e, prev], -1.0), (V[ev_family, e, t], -f.eff_charge * coef)],
                 -drive, f"energy[{e},{t}]")
        if pin_energy:
            b.eq([(V["E", e, T], 1.0)], f.e_init_fraction * f.e_max, f"energy_pin[{e}]")

    meta = {
        "network": network,
        "scenario": scenario,
        "fleets": tuple(active),
        "horizon": T,
        "ev_family": ev_family,
        "ev_voltage": ev_voltage,
        "directed": directed,
        "reduced": False,
    }
    program = b.finish(meta)
    return symmetry_reduce(program) if reduce else program


def symmetry_reduce(program: ConicProgram) -> ConicProgram:
    """Keep one ``(cij, sij)`` per line and hour, substituting ``cji = cij`` and ``sji = -sij``."""
    if program.meta.get("reduced"):
        return program
    network = program.meta["network"]
    canonical = {(ln.from_bus, ln.to_bus) for ln in network.lines}
    n_old = program.n_var
    target = np.empty(n_old, dtype=int)
    sign = np.ones(n_old)
    names, index, keep = [], {}, []
    for key, k in sorted(program.index.items(), key=lambda kv: kv[1]):
        if key[0] in ("cij", "sij") and (key[1], key[2]) not in canonical:
            continue
        target[k] = len(keep)
        index[key] = len(keep)
        names.append(program.names[k])
        keep.append(k)
    for key, k in program.index.items():
        if key[0] in ("cij", "sij") and (key[1], key[2]) not in canonical:
            fam, i, j, t = key
            target[k] = index[(fam, j, i, t)]
            sign[k] = 1.0 if fam == "cij" else -1.0
    keep = np.array(keep)
    m = sp.csr_matrix((sign, (np.arange(n_old), target)), shape=(n_old, len(keep)))

    a_eq = (program.a_eq @ m).tocsr()
    a_eq.eliminate_zeros()
    sym_rows = np.array([lab.startswith("sym_") for lab in program.eq_labels])
    if np.any(a_eq[np.flatnonzero(sym_rows)].count_nonzero()):
        raise AssertionError("symmetry rows did not vanish under substitution")
    rows = np.flatnonzero(~sym_rows)

    cones, cone_sign, seen = [], [], set()
    for (cij, sij, cii, cjj), s in zip(program.cones, program.cone_sign):
        new = (target[cij], target[sij], target[cii], target[cjj])
        key = (new[0], new[1], frozenset((new[2], new[3])))
        if key in seen:
            continue
        seen.add(key)
        cones.append(new)
        cone_sign.append(s * sign[sij])

    return replace(
        program,
        names=names, index=index,
        cost=np.asarray(m.T @ program.cost),
        lb=program.lb[keep], ub=program.ub[keep],
        a_eq=a_eq[rows], b_eq=program.b_eq[rows],
        eq_labels=[program.eq_labels[r] for r in rows],
        a_ineq=(program.a_ineq @ m).tocsr(),
        cones=np.array(cones, dtype=int).reshape(-1, 4),
        cone_sign=np.array(cone_sign),
        thermal=target[program.thermal],
        meta={**program.meta, "reduced": True},
    )


def variables_per_hour(n_bus: int, n_line: int, n_grid: int, n_solar: int, n_fleet: int) -> int:
    """Closed-form variable count of the reduced program for one hour."""
    return 2 * n_grid + n_solar + 2 * n_fleet + n_bus + 2 * n_line + 4 * n_line


def dump_program(program: ConicProgram, fh) -> None:
    """Write a plain-text listing of the program (objective, bounds, rows, cones)."""
    fh.write(f"# conic program: {program.n_var} variables, {program.a_eq.shape[0]} equality rows, "
             f"{program.a_ineq.shape[0]} inequality rows, {len(program.cones)} lifted cones, "
             f"{len(program.thermal)} thermal cones\n")
    fh.write("[variables] index name lb ub cost\n")
    for k, name in enumerate(program.names):
        fh.write(f"{k} {name} {program.lb[k]:.17g} {program.ub[k]:.17g} {program.cost[k]:.17g}\n")
    for title, mat, rhs, labels, sense in (
        ("equalities", program.a_eq, program.b_eq, program.eq_labels, "="),
        ("inequalities", program.a_ineq, program.b_ineq, program.ineq_labels, "<="),
    ):
        fh.write(f"[{title}] label: coef*var ... {sense} rhs\n")
        mat = mat.tocsr()
        for r in range(mat.shape[0]):
            lo, hi = mat.indptr[r], mat.indptr[r + 1]
            terms = " ".join(f"{v:+.17g}*x{c}" for c, v in zip(mat.indices[lo:hi], mat.data[lo:hi]))
            fh.write(f"{labels[r]}: {terms} {sense} {rhs[r]:.17g}\n")
    fh.write("[cones] ||(2*x_cij, 2*sign*x_sij, x_cii - x_cjj)|| <= x_cii + x_cjj : cij sij sign cii cjj\n")
    for (cij, sij, cii, cjj), s in zip(program.cones, program.cone_sign):
        fh.write(f"{cij} {sij} {s:+.0f} {cii} {cjj}\n")
    fh.write("[thermal] ||(x_p, x_q)|| <= limit : p q limit\n")
    for (p, q), lim in zip(program.thermal, program.thermal_limit):
        fh.write(f"{p} {q} {lim:.17g}\n")
