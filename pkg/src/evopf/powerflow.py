"""Polar Newton-Raphson power flow, used to replay OPF dispatch against full AC physics."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

log = logging.getLogger(__name__)

V_TOL = 1e-4
FLOW_TOL = 1e-3


class PowerFlowError(RuntimeError):
    pass


class DivergenceError(PowerFlowError):
    def __init__(self, history):
        super().__init__(f"Newton-Raphson did not converge; mismatch history {history}")
        self.history = list(history)


class SingularJacobianError(PowerFlowError):
    pass


@dataclass(eq=False)
class PfCase:
    """One snapshot: net injections in p.u. (generation positive) with one slack bus.

    ``i_load`` holds constant-current real-power loads; bus ``k`` consumes
    ``i_load[k] * |V_k|``.
    """

    network: object
    p_inj: np.ndarray
    q_inj: np.ndarray
    slack: int
    v_slack: float = 1.0
    i_load: np.ndarray | None = None

    def __post_init__(self):
        n = self.network.n_bus
        self.p_inj = np.asarray(self.p_inj, dtype=float)
        self.q_inj = np.asarray(self.q_inj, dtype=float)
        self.i_load = np.zeros(n) if self.i_load is None else np.asarray(self.i_load, dtype=float)
        for arr in (self.p_inj, self.q_inj, self.i_load):
            if arr.shape != (n,) or not np.all(np.isfinite(arr)):
                raise ValueError("injections must be finite and sized to the network")
        self.network.index(self.slack)

    @property
    def pq(self) -> np.ndarray:
        s = self.network.index(self.slack)
        return np.array([k for k in range(self.network.n_bus) if k != s])


def mismatch(case: PfCase, vm, va) -> np.ndarray:
    """Stacked ``[dP; dQ]`` at non-slack buses (computed minus specified)."""
    V = vm * np.exp(1j * va)
    s = V * np.conj(case.network.ybus @ V)
    f = s - (case.p_inj + 1j * case.q_inj) + case.i_load * vm
    pq = case.pq
    return np.concatenate([f.real[pq], f.imag[pq]])


def jacobian(case: PfCase, vm, va) -> np.ndarray:
    """Analytic Jacobian of :func:`mismatch` w.r.t. ``[va[pq], vm[pq]]``."""
    Y = case.network.ybus
    V = vm * np.exp(1j * va)
    ibus = Y @ V
    dV = np.diag(V)
    dS_dva = 1j * dV @ np.conj(np.diag(ibus) - Y @ dV)
    dS_dvm = dV @ np.conj(Y @ np.diag(V / vm)) + np.conj(np.diag(ibus)) @ np.diag(V / vm)
    dS_dvm = dS_dvm + np.diag(case.i_load)
    pq = case.pq
    ix = np.ix_(pq, pq)
    return np.block([
        [dS_dva.real[ix], dS_dvm.real[ix]],
        [dS_dva.imag[ix], dS_dvm.imag[ix]],
    ])


@dataclass
class PfResult:
    v: np.ndarray
    theta: np.ndarray
    iterations: int
    history: list


def newton_pf(case: PfCase, v_init=None, tol: float = 1e-10, max_iter: int = 20) -> PfResult:
    """Full Newton-Raphson in polar coordinates from a flat (or given) start."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = case.network.n_bus
    s = case.network.index(case.slack)
    vm = np.ones(n) if v_init is None else np.array(v_init, dtype=float)
    if np.any(vm <= 0):
        raise ValueError("initial voltages must be strictly positive")
    vm[s] = case.v_slack
    va = np.zeros(n)
    pq = case.pq
    m = len(pq)
    history = []
    for it in range(max_iter + 1):
        f = mismatch(case, vm, va)
        norm = float(np.max(np.abs(f), initial=0.0))
        history.append(norm)
        if norm <= tol:
            return PfResult(vm, va, it, history)
        if it == max_iter:
            break
        try:
            dx = np.linalg.solve(jacobian(case, vm, va), -f)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobianError(f"singular Jacobian at iteration {it}") from exc
        if not np.all(np.isfinite(dx)):
            raise SingularJacobianError(f"non-finite Newton step at iteration {it}")
        va[pq] += dx[:m]
        vm[pq] += dx[m:]
        if np.any(vm[pq] <= 0):
            log.debug("voltage collapse at iteration %d", it)
            break
    raise DivergenceError(history)


def branch_flows(network, vm, va, pairs):
    """``(p_ij, q_ij)`` sending-end flows for directed ``pairs``."""
    G, B = network.g_matrix, network.b_matrix
    p, q = [], []
    for i, j in pairs:
        a, b = network.index(i), network.index(j)
        c = vm[a] * vm[b] * np.cos(va[a] - va[b])
        s = vm[a] * vm[b] * np.sin(va[a] - va[b])
        cii = vm[a] ** 2
        p.append(-G[a, b] * cii + G[a, b] * c + B[a, b] * s)
        q.append(B[a, b] * cii - B[a, b] * c + G[a, b] * s)
    return np.array(p), np.array(q)


@dataclass
class HourCheck:
    hour: int
    converged: bool
    max_v_dev: float
    max_flow_dev: float
    worst_bus: int | None
    flagged_buses: list = field(default_factory=list)
    iterations: int = 0
    passed: bool = False


@dataclass
class VerificationReport:
    hours: list

    @property
    def passed(self) -> bool:
        return all(h.passed for h in self.hours)

    @property
    def failed_hours(self) -> list:
        return [h.hour for h in self.hours if not h.passed]

    @property
    def max_v_dev(self) -> float:
        return max((h.max_v_dev for h in self.hours if h.converged), default=float("nan"))

    def to_json(self) -> str:
        return json.dumps({"passed": self.passed, "hours": [asdict(h) for h in self.hours]}, indent=1)


def hourly_cases(network, solution, scenario):
    """Rebuild one :class:`PfCase` per hour from an OPF dispatch (feeder as slack)."""
    feeder = network.feeder
    f_pos = network.index(feeder)
    cases = []
    for t in range(solution.horizon):
        p = -scenario.demand_p[t].copy()
        q = -scenario.demand_q[t].copy()
        for s, unit in enumerate(solution.solar_units):
            p[network.index(unit.bus)] += solution.p_solar[t, s]
        i_load = np.zeros(network.n_bus)
        for e, fleet in enumerate(solution.fleets):
            k = network.index(fleet.bus)
            if solution.ev_current is not None:
                i_load[k] += solution.ev_current[t, e]
            else:
                p[k] -= solution.ev_power[t, e]
        cases.append(PfCase(network, p, q, feeder, float(solution.v[t, f_pos]), i_load))
    return cases


def verify_opf(network, solution, scenario, v_tol: float = V_TOL, flow_tol: float = FLOW_TOL,
               tol: float = 1e-10, max_iter: int = 20) -> VerificationReport:
    """Replay every hour with Newton-Raphson and compare voltages and flows with the OPF.

    Fixed-current fleets are replayed as constant-current loads, so their power
    follows the Newton iterate's voltage.
    """
    checks = []
    for t, case in enumerate(hourly_cases(network, solution, scenario), start=1):
        try:
            res = newton_pf(case, tol=tol, max_iter=max_iter)
        except PowerFlowError as exc:
            log.warning("hour %d: power flow failed: %s", t, exc)
            checks.append(HourCheck(t, False, float("inf"), float("inf"), None))
            continue
        dv = np.abs(res.v - solution.v[t - 1])
        p, q = branch_flows(network, res.v, res.theta, solution.lines)
        dflow = float(np.max(np.abs(np.concatenate([p - solution.p_flow[t - 1], q - solution.q_flow[t - 1]])),
                             initial=0.0))
        worst = int(np.argmax(dv))
        flagged = [b for b, d in zip(network.bus_ids, dv) if d > v_tol]
        ok = float(dv[worst]) <= v_tol and dflow <= flow_tol
        checks.append(HourCheck(t, True, float(dv[worst]), dflow, network.bus_ids[worst], flagged,
                                res.iterations, ok))
    return VerificationReport(checks)
