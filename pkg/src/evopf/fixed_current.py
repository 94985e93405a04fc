"""Fixed-current EV model solved by sequential convexification over bus voltages.

Each iterate freezes the voltage in the bilinear term ``I * V`` at the previous
iterate's recovered value, which turns the problem back into the lifted SOCP
with the EV current as decision variable.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .conic import Tolerances, solve
from .recovery import OpfSolution, recover
from .socp import build_fixed_power

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    def __init__(self, deltas):
        super().__init__(f"fixed-current iteration did not converge in {len(deltas)} iterations; "
                         f"last delta {deltas[-1]:.3e}")
        self.deltas = list(deltas)


@dataclass(frozen=True)
class FixedCurrentIterate:
    iteration: int
    v_prev: np.ndarray
    solution: OpfSolution
    delta: float


def effective_ev_power(current, voltage):
    """Power drawn by a constant-current load: ``I * V`` in p.u."""
    current = np.asarray(current, dtype=float)
    voltage = np.asarray(voltage, dtype=float)
    if np.any(current < 0):
        raise ValueError("charging current must be non-negative")
    if np.any(voltage <= 0):
        raise ValueError("voltage must be positive")
    out = current * voltage
    return float(out) if out.ndim == 0 else out


def solve_fixed_current(network, scenario, fleets=None, tol: float = 1e-5, max_iter: int = 50,
                        tolerances: Tolerances | None = None, damping: bool = True) -> OpfSolution:
    """Iterate until the voltages used in ``I * V`` match the recovered ones within ``tol``.

    The returned solution carries the iterate history in ``info["trace"]``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if fleets is None:
        fleets = scenario.fleets
    T = scenario.horizon
    pos = [network.index(f.bus) for f in fleets]
    v_hat = np.ones((T, network.n_bus))
    trace, deltas = [], []
    has_ev = any(not f.is_empty for f in fleets)

    for k in range(1, max_iter + 1):
        program = build_fixed_power(network, scenario, fleets, ev_voltage=v_hat[:, pos])
        sol = recover(network, solve(program, tolerances, check=True))
        delta = float(np.max(np.abs(sol.v - v_hat))) if has_ev else 0.0
        trace.append(FixedCurrentIterate(k, v_hat, sol, delta))
        log.info("fixed-current iteration %d: delta=%.3e objective=%.10g", k, delta, sol.objective)
        if delta <= tol:
            sol.info["trace"] = trace
            sol.info["iterations"] = k
            return sol
        if damping and deltas and delta > deltas[-1]:
            v_hat = 0.5 * (sol.v + v_hat)
        else:
            v_hat = sol.v
        deltas.append(delta)
    raise ConvergenceError(deltas)
