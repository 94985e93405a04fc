"""Solve a :class:`~evopf.socp.ConicProgram` with the Clarabel interior-point solver."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import clarabel
import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"
NUMERICAL_FAILURE = "numerical_failure"
SOLVER_MARGIN = 0.1


@dataclass(frozen=True)
class Tolerances:
    feasibility: float = 1e-8
    gap: float = 1e-8
    max_iter: int = 200


class SolveError(RuntimeError):
    """Raised by :func:`solve` with ``check=True`` for any non-optimal outcome."""

    def __init__(self, solution: "ConicSolution"):
        super().__init__(f"conic solve ended with status {solution.status} "
                         f"(residuals {solution.residuals})")
        self.solution = solution

    @property
    def status(self) -> str:
        return self.solution.status


@dataclass(frozen=True, eq=False)
class ConicSolution:
    primal: np.ndarray
    duals: dict
    objective_value: float
    status: str
    residuals: tuple  # (primal_feas, dual_feas, rel_gap)
    iterations: int = 0
    program: object = None

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    def value(self, *key) -> float:
        return float(self.primal[self.program.index[key]])


_STATUS = {
    "Solved": OPTIMAL,
    "PrimalInfeasible": INFEASIBLE,
    "DualInfeasible": UNBOUNDED,
    "AlmostPrimalInfeasible": INFEASIBLE,
    "AlmostDualInfeasible": UNBOUNDED,
    "MaxIterations": ITERATION_LIMIT,
    "MaxTime": ITERATION_LIMIT,
}


def _standard_form(program):
    """Stack rows as ``A x + s = b`` with ``s`` in zero, nonnegative and SOC cones."""
    n = program.n_var
    eye = sp.identity(n, format="csr")
    has_ub = np.isfinite(program.ub)
    has_lb = np.isfinite(program.lb)
    blocks = [program.a_eq, program.a_ineq, eye[has_ub], -eye[has_lb]]
    rhs = [program.b_eq, program.b_ineq, program.ub[has_ub], -program.lb[has_lb]]
    cones = [clarabel.ZeroConeT(program.a_eq.shape[0]),
             clarabel.NonnegativeConeT(program.a_ineq.shape[0] + int(has_ub.sum()) + int(has_lb.sum()))]

    m = len(program.cones)
    if m:
        cij, sij, cii, cjj = program.cones.T
        r = np.arange(m) * 4
        rows = np.concatenate([r, r, r + 1, r + 2, r + 3, r + 3])
        cols = np.concatenate([cii, cjj, cij, sij, cii, cjj])
        vals = np.concatenate([-np.ones(m), -np.ones(m), -2 * np.ones(m), -2 * program.cone_sign,
                               -np.ones(m), np.ones(m)])
        blocks.append(sp.csr_matrix((vals, (rows, cols)), shape=(4 * m, n)))
        rhs.append(np.zeros(4 * m))
        cones.extend(clarabel.SecondOrderConeT(4) for _ in range(m))

    k = len(program.thermal)
    if k:
        p, q = program.thermal.T
        r = np.arange(k) * 3
        blocks.append(sp.csr_matrix((-np.ones(2 * k), (np.concatenate([r + 1, r + 2]), np.concatenate([p, q]))),
                                    shape=(3 * k, n)))
        b = np.zeros(3 * k)
        b[r] = program.thermal_limit
        rhs.append(b)
        cones.extend(clarabel.SecondOrderConeT(3) for _ in range(k))

    a = sp.vstack(blocks, format="csc")
    return a, np.concatenate(rhs), cones


def primal_violation(program, x) -> float:
    """Largest constraint violation of ``x``, scaled by ``1 + max |rhs|``."""
    viol = [0.0]
    if program.a_eq.shape[0]:
        viol.append(np.max(np.abs(program.a_eq @ x - program.b_eq)))
    if program.a_ineq.shape[0]:
        viol.append(np.max(program.a_ineq @ x - program.b_ineq))
    viol.append(np.max(np.where(np.isfinite(program.ub), x - program.ub, 0.0), initial=0.0))
    viol.append(np.max(np.where(np.isfinite(program.lb), program.lb - x, 0.0), initial=0.0))
    if len(program.cones):
        viol.append(np.max(cone_slack(program, x) * -1.0))
    if len(program.thermal):
        p, q = x[program.thermal[:, 0]], x[program.thermal[:, 1]]
        viol.append(np.max(np.hypot(p, q) - program.thermal_limit))
    scale = 1.0 + max(np.max(np.abs(program.b_eq), initial=0.0),
                      np.max(np.abs(program.lb[np.isfinite(program.lb)]), initial=0.0),
                      np.max(np.abs(program.ub[np.isfinite(program.ub)]), initial=0.0))
    return max(0.0, float(max(viol))) / scale


def cone_slack(program, x) -> np.ndarray:
    """``(cii + cjj) - ||(2 cij, 2 sij, cii - cjj)||`` for every lifted cone."""
    cij, sij, cii, cjj = (x[c] for c in program.cones.T)
    return (cii + cjj) - np.sqrt((2 * cij) ** 2 + (2 * sij) ** 2 + (cii - cjj) ** 2)


def solve(program, tolerances: Tolerances | None = None, check: bool = False, verbose: bool = False) -> ConicSolution:
    """Solve ``program``; the objective is normalized internally and rescaled on return."""
    tol = tolerances or Tolerances()
    a, b, cones = _standard_form(program)
    scale = float(np.max(np.abs(program.cost), initial=0.0)) or 1.0
    q = program.cost / scale
    settings = clarabel.DefaultSettings()
    settings.verbose = verbose
    # the solver stops on its own scaled criteria; ask for a margin so the
    # residuals recomputed below meet the requested tolerances
    settings.tol_feas = SOLVER_MARGIN * tol.feasibility
    settings.tol_gap_abs = SOLVER_MARGIN * tol.gap
    settings.tol_gap_rel = SOLVER_MARGIN * tol.gap
    settings.max_iter = tol.max_iter
    # tighter KKT refinement; the flat-price zero-EV day otherwise stalls one digit short
    settings.iterative_refinement_reltol = 1e-14
    settings.iterative_refinement_abstol = 1e-14
    settings.max_threads = 1
    settings.presolve_enable = False
    p = sp.csc_matrix((program.n_var, program.n_var))
    raw = clarabel.DefaultSolver(p, q, a, b, cones, settings).solve()

    x = np.asarray(raw.x, dtype=float)
    z = np.asarray(raw.z, dtype=float)
    status = _STATUS.get(str(raw.status), NUMERICAL_FAILURE)
    obj_p = float(program.cost @ x)
    obj_d = float(raw.obj_val_dual) * scale
    residuals = (primal_violation(program, x), float(raw.r_dual),
                 abs(obj_p - obj_d) / max(1.0, abs(obj_p)))
    if status == OPTIMAL and (residuals[0] > tol.feasibility or residuals[2] > tol.gap):
        log.warning("solver reported optimal but residuals %s exceed tolerances", residuals)
        status = NUMERICAL_FAILURE
    n_eq = program.a_eq.shape[0]
    duals = {"eq": z[:n_eq] * scale, "cone": z[n_eq:] * scale}
    log.debug("conic solve: status=%s iterations=%d objective=%.10g residuals=%s",
              status, raw.iterations, obj_p, residuals)
    sol = ConicSolution(x, duals, obj_p, status, residuals, int(raw.iterations), program)
    if check and not sol.ok:
        raise SolveError(sol)
    return sol
