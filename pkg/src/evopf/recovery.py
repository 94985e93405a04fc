"""Map a lifted conic solution back to voltages, angles, flows and dispatch."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conic import cone_slack
from .grid import spanning_order

EXACTNESS_TOL = 1e-6
CLAMP_TOL = 1e-10


class RecoveryError(RuntimeError):
    """Numerical failure while inverting the lifting (``status = numerical_failure``)."""

    status = "numerical_failure"


class InexactRelaxationError(RecoveryError):
    def __init__(self, gap):
        super().__init__(f"relaxation is not exact: cone gap {gap:.3e} exceeds {EXACTNESS_TOL:g}")
        self.gap = gap


@dataclass(eq=False)
class OpfSolution:
    """Physical OPF result; arrays are indexed ``[hour - 1, position]``."""

    bus_ids: list
    v: np.ndarray
    theta: np.ndarray
    lines: list  # directed (i, j) pairs, columns of p_flow / q_flow
    p_flow: np.ndarray
    q_flow: np.ndarray
    grid_buses: list
    p_grid: np.ndarray
    q_grid: np.ndarray
    p_solar: np.ndarray
    ev_power: np.ndarray  # power drawn by each fleet
    energy: np.ndarray
    price: np.ndarray
    objective: float
    exactness_gap: float
    model: str = "fixed_power"
    ev_current: np.ndarray | None = None
    fleets: tuple = ()
    solar_units: tuple = ()
    status: str = "optimal"
    info: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.v.shape[0]

    def voltage(self, bus: int) -> np.ndarray:
        """Hourly voltage magnitude at ``bus``."""
        return self.v[:, self.bus_ids.index(bus)]

    def flow(self, i: int, j: int):
        k = self.lines.index((i, j))
        return self.p_flow[:, k], self.q_flow[:, k]

    @property
    def cost(self) -> float:
        return float(self.objective)


def exactness_gap(conic_solution) -> float:
    """Worst relative cone slack; zero when every lifted cone is tight."""
    program = conic_solution.program
    if not len(program.cones):
        return 0.0
    x = conic_solution.primal
    rhs = x[program.cones[:, 2]] + x[program.cones[:, 3]]
    return float(np.max(cone_slack(program, x) / rhs))


def cone_gap_values(cii, cjj, cij, sij):
    """Relative cone slack from raw lifted values (scalars or arrays)."""
    cii, cjj, cij, sij = map(np.asarray, (cii, cjj, cij, sij))
    norm = np.sqrt((2 * cij) ** 2 + (2 * sij) ** 2 + (cii - cjj) ** 2)
    return ((cii + cjj) - norm) / (cii + cjj)


def _sqrt_clamped(c, where):
    if np.any(c < -CLAMP_TOL):
        t, k = np.unravel_index(np.argmin(c), c.shape)
        raise RecoveryError(f"negative squared voltage {c[t, k]:.3e} at {where(t, k)}")
    return np.sqrt(np.maximum(c, 0.0))


def recover(network, conic_solution, check_exact: bool = True) -> OpfSolution:
    """Voltages ``sqrt(cii)``, angle differences ``atan2(sij, cij)`` accumulated from the feeder."""
    if not conic_solution.ok:
        raise RecoveryError(f"cannot recover from a {conic_solution.status} solve")
    prog = conic_solution.program
    meta = prog.meta
    x = conic_solution.primal
    T = meta["horizon"]
    hours = range(1, T + 1)
    ids = network.bus_ids
    idx = prog.index
    fleets = meta["fleets"]
    scenario = meta["scenario"]
    ev_family = meta["ev_family"]

    def grab(keys):
        return np.array([[x[idx[(*k, t)]] for k in keys] for t in hours]).reshape(T, len(keys))

    cii = grab([("cii", i) for i in ids])
    v = _sqrt_clamped(cii, lambda t, k: f"bus {ids[k]}, hour {t + 1}")

    def lifted(i, j, t):
        if ("cij", i, j, t) in idx:
            return x[idx["cij", i, j, t]], x[idx["sij", i, j, t]]
        c, s = x[idx["cij", j, i, t]], x[idx["sij", j, i, t]]
        return c, -s

    theta = np.zeros((T, len(ids)))
    order = spanning_order(network)
    pos = {b: k for k, b in enumerate(ids)}
    for t in hours:
        for parent, child in order:
            c, s = lifted(parent, child, t)
            theta[t - 1, pos[child]] = theta[t - 1, pos[parent]] - np.arctan2(s, c)

    directed = meta["directed"]
    grids = network.grid_buses
    p_flow = grab([("p", i, j) for i, j in directed])
    q_flow = grab([("q", i, j) for i, j in directed])
    ev_var = grab([(ev_family, e) for e in range(len(fleets))])
    if ev_family == "Ic":
        ev_power = ev_var * meta["ev_voltage"]
        current = ev_var
        model = "fixed_current"
    else:
        ev_power, current, model = ev_var, None, "fixed_power"

    gap = exactness_gap(conic_solution)
    sol = OpfSolution(
        bus_ids=list(ids), v=v, theta=theta, lines=list(directed), p_flow=p_flow, q_flow=q_flow,
        grid_buses=list(grids), p_grid=grab([("Pg", g) for g in grids]), q_grid=grab([("Qg", g) for g in grids]),
        p_solar=grab([("Ps", s) for s in range(len(scenario.solar_units))]),
        ev_power=ev_power, energy=grab([("E", e) for e in range(len(fleets))]),
        price=scenario.tou_price.copy(), objective=conic_solution.objective_value,
        exactness_gap=gap, model=model, ev_current=current, fleets=fleets,
        solar_units=scenario.solar_units,
        info={"residuals": conic_solution.residuals, "iterations": conic_solution.iterations},
    )
    if check_exact and gap > EXACTNESS_TOL:
        raise InexactRelaxationError(gap)
    return sol
