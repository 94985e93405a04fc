"""Penetration / model / TOU sweeps and their CSV and plot outputs."""
from __future__ import annotations

import csv
import logging
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .conic import Tolerances, solve
from .fixed_current import solve_fixed_current
from .grid import load_network
from .powerflow import verify_opf
from .recovery import OpfSolution, recover
from .scenario import EvFleet, SolarUnit, load_scenario, scale_penetration
from .socp import build_fixed_power

log = logging.getLogger(__name__)

MODELS = ("fixed_power", "fixed_current")
V_LIMIT = 0.95


@dataclass
class StudySpec:
    network: str | None = None  # None: bundled IEEE 33-bus
    scenario: str | None = None  # None: bundled CAISO-shaped day
    model: str = "fixed_power"  # fixed_power | fixed_current | both
    penetration_levels: tuple = (0.0, 0.25, 0.5)
    tou_scenarios: tuple = (2,)  # 1-4; empty keeps the scenario's own prices
    out: str | None = None
    verify: bool = False
    plots: bool = False
    workers: int = 1
    tol: float = 1e-5
    max_iter: int = 50
    report_buses: tuple = (17, 33)
    report_hours: tuple = (1,)

    def __post_init__(self):
        if self.model not in (*MODELS, "both"):
            raise ValueError(f"unknown model {self.model!r}")
        if not self.penetration_levels:
            raise ValueError("at least one penetration level is required")
        if any(level < 0 for level in self.penetration_levels):
            raise ValueError("penetration levels must be non-negative")
        for k in self.tou_scenarios:
            if k not in (1, 2, 3, 4):
                raise ValueError(f"TOU scenario must be 1-4, got {k}")

    @property
    def models(self) -> tuple:
        return MODELS if self.model == "both" else (self.model,)

    def cells(self) -> list:
        tous = tuple(str(k) for k in self.tou_scenarios) or ("file",)
        return [(m, float(p), tou) for m in self.models for p in self.penetration_levels for tou in tous]


@dataclass
class CellResult:
    model: str
    penetration: float
    tou: str
    solution: OpfSolution | None = None
    report: object = None
    status: str = "optimal"
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.solution is not None and self.status == "optimal" and (
            self.report is None or self.report.passed)


@dataclass
class StudyResult:
    spec: StudySpec
    cells: list
    network: object = field(repr=False, default=None)
    scenario: object = field(repr=False, default=None)

    @property
    def failed(self) -> list:
        return [c for c in self.cells if not c.ok]

    def cell(self, model, penetration, tou="2") -> CellResult:
        for c in self.cells:
            if c.model == model and np.isclose(c.penetration, penetration) and c.tou == str(tou):
                return c
        raise KeyError((model, penetration, tou))

    def summary(self) -> list:
        """Rows ``(model, penetration, tou, bus, v_min, hours_below_095, cost_usd, status)``."""
        rows = []
        for c in self.cells:
            if c.solution is None:
                rows.append((c.model, c.penetration, c.tou, None, None, None, None, c.status))
                continue
            sol = c.solution
            for k, bus in enumerate(sol.bus_ids):
                v = sol.v[:, k]
                rows.append((c.model, c.penetration, c.tou, bus, float(v.min()),
                             int(np.sum(v < V_LIMIT)), sol.cost, c.status))
        return rows


def solve_cell(network, scenario, model: str, penetration: float, tolerances=None,
               tol: float = 1e-5, max_iter: int = 50) -> OpfSolution:
    fleets = scale_penetration(scenario.fleets, penetration)
    if model == "fixed_power":
        return recover(network, solve(build_fixed_power(network, scenario, fleets), tolerances, check=True))
    if model == "fixed_current":
        sol = solve_fixed_current(network, scenario, fleets, tol=tol, max_iter=max_iter, tolerances=tolerances)
        trace = sol.info.pop("trace")
        sol.info["deltas"] = [it.delta for it in trace]
        return sol
    raise ValueError(f"unknown model {model!r}")


def _run_cell(args):
    network, scenario, model, penetration, tou, verify, tol, max_iter = args
    cell = CellResult(model, penetration, tou)
    try:
        cell.solution = solve_cell(network, scenario, model, penetration, Tolerances(), tol, max_iter)
    except Exception as exc:  # recorded per cell; the sweep continues
        log.error("cell %s/%g/%s failed: %s", model, penetration, tou, exc)
        cell.status = getattr(exc, "status", "failed")
        cell.error = str(exc)
        return cell
    if verify:
        cell.report = verify_opf(network, cell.solution, scenario)
        if not cell.report.passed:
            cell.status = "verification_failed"
    return cell


def prepare_inputs(spec: StudySpec):
    network = load_network(spec.network)
    scenario = load_scenario(spec.scenario, network)
    return network, scenario


def run_study(spec: StudySpec, network=None, scenario=None) -> StudyResult:
    """Solve every (model, penetration, TOU) cell; failures are recorded, not raised."""
    if network is None or scenario is None:
        network, scenario = prepare_inputs(spec)
    jobs = []
    for model, level, tou in spec.cells():
        scn = scenario if tou == "file" else scenario.with_tou(int(tou))
        jobs.append((network, scn, model, level, tou, spec.verify, spec.tol, spec.max_iter))
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            cells = list(pool.map(_run_cell, jobs))
    else:
        cells = [_run_cell(job) for job in jobs]
    result = StudyResult(spec, cells, network, scenario)
    if spec.out:
        emit_csv(result, spec.out)
        if spec.verify:
            emit_verification(result, spec.out)
        if spec.plots:
            emit_plots(result, spec.out)
    return result


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    out = format(float(x), ".6g")
    return "0" if out == "-0" else out


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def dispatch_rows(sol: OpfSolution, base_mva: float):
    """``(hour, entity_kind, entity_id, value)`` in physical units (MW, MVAr, MWh, $/MWh)."""
    for t in range(sol.horizon):
        h = t + 1
        yield h, "price", "tou", sol.price[t]
        for g, bus in enumerate(sol.grid_buses):
            yield h, "grid_p", bus, sol.p_grid[t, g] * base_mva
            yield h, "grid_q", bus, sol.q_grid[t, g] * base_mva
        for s, unit in enumerate(sol.solar_units):
            yield h, "solar_p", unit.bus, sol.p_solar[t, s] * base_mva
        for e, fleet in enumerate(sol.fleets):
            yield h, "ev_p", fleet.bus, sol.ev_power[t, e] * base_mva
            if sol.ev_current is not None:
                yield h, "ev_i", fleet.bus, sol.ev_current[t, e]
            yield h, "ev_energy", fleet.bus, sol.energy[t, e] * base_mva
        for k, (i, j) in enumerate(sol.lines):
            yield h, "flow_p", f"{i}-{j}", sol.p_flow[t, k] * base_mva
            yield h, "flow_q", f"{i}-{j}", sol.q_flow[t, k] * base_mva


def emit_csv(result: StudyResult, directory) -> list:
    """Write ``voltages.csv``, ``dispatch.csv`` and ``summary.csv``; returns the paths."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    base = result.network.base_mva
    volt, disp = [], []
    for c in result.cells:
        if c.solution is None:
            continue
        sol = c.solution
        key = (c.model, c.penetration, c.tou)
        for t in range(sol.horizon):
            for k, bus in enumerate(sol.bus_ids):
                volt.append((*key, t + 1, bus, sol.v[t, k], sol.theta[t, k]))
        disp.extend((*key, *row) for row in dispatch_rows(sol, base))
    paths = [out / "voltages.csv", out / "dispatch.csv", out / "summary.csv"]
    _write(paths[0], ("model", "penetration", "tou", "hour", "bus", "v_pu", "theta_rad"), volt)
    _write(paths[1], ("model", "penetration", "tou", "hour", "entity_kind", "entity_id", "value"), disp)
    _write(paths[2], ("model", "penetration", "tou", "bus", "v_min", "hours_below_095", "cost_usd", "status"),
           result.summary())
    return paths


def emit_verification(result: StudyResult, directory) -> Path:
    path = Path(directory) / "verification.json"
    parts = []
    for c in result.cells:
        body = c.report.to_json() if c.report is not None else '{"passed": false, "hours": []}'
        parts.append(f'{{"model": "{c.model}", "penetration": {_fmt(c.penetration)}, "tou": "{c.tou}", '
                     f'"status": "{c.status}", "report": {body}}}')
    path.write_text("[\n" + ",\n".join(parts) + "\n]\n")
    return path


def _label(c) -> str:
    return f"{c.model.replace('_', ' ')}, {c.penetration:.0%}, TOU {c.tou}"


def voltage_series(result: StudyResult, bus: int | None = None, hour: int | None = None) -> list:
    """``(label, x, y)`` per solved cell: voltage vs hour at ``bus`` or voltage vs bus at ``hour``."""
    if (bus is None) == (hour is None):
        raise ValueError("give exactly one of bus or hour")
    out = []
    for c in result.cells:
        if c.solution is None:
            continue
        sol = c.solution
        if bus is not None:
            v = sol.voltage(bus)
            out.append((_label(c), np.arange(1, len(v) + 1), v))
        else:
            out.append((_label(c), np.array(sol.bus_ids), sol.v[hour - 1]))
    return out


def emit_plots(result: StudyResult, directory, buses=None, hours=None) -> list:
    """Voltage-vs-hour per reported bus and voltage-vs-bus per reported hour (PNG)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    buses = result.spec.report_buses if buses is None else buses
    hours = result.spec.report_hours if hours is None else hours
    figures = [(f"bus {b}", "hour", f"voltage_bus{b}.png", voltage_series(result, bus=b)) for b in buses]
    figures += [(f"hour {h}", "bus", f"voltage_hour{h}.png", voltage_series(result, hour=h)) for h in hours]
    written = []
    for title, xlabel, name, series in figures:
        fig, ax = plt.subplots(figsize=(8, 4.5))
        for label, x, y in series:
            ax.plot(x, y, marker="o", ms=3, label=label)
        ax.axhline(V_LIMIT, color="k", ls="--", lw=1)
        ax.set(xlabel=xlabel, ylabel="voltage (p.u.)", title=title)
        if xlabel == "hour":
            ax.set_xticks(range(1, 25))
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = out / name
        fig.savefig(path, dpi=120, metadata={"Software": None})
        plt.close(fig)
        written.append(path)
    return written


def read_csv_solutions(directory, network) -> dict:
    """Rebuild replayable solutions from ``voltages.csv`` and ``dispatch.csv``.

    Returns ``{(model, penetration, tou): OpfSolution}``. Angles, flows and
    dispatch come from the files; objective and cone gap are not stored and
    are set to NaN.
    """
    directory = Path(directory)
    base = network.base_mva
    volts = defaultdict(dict)
    with open(directory / "voltages.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["model"], float(row["penetration"]), row["tou"])
            volts[key][(int(row["hour"]), int(row["bus"]))] = (float(row["v_pu"]), float(row["theta_rad"]))
    disp = defaultdict(lambda: defaultdict(dict))
    with open(directory / "dispatch.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["model"], float(row["penetration"]), row["tou"])
            disp[key][row["entity_kind"]][(int(row["hour"]), row["entity_id"])] = float(row["value"])

    ids = network.bus_ids
    out = {}
    for key, vt in volts.items():
        T = max(h for h, _ in vt)
        d = disp[key]

        def table(kind, scale=1.0):
            ents = sorted({e for _, e in d.get(kind, {})}, key=lambda e: [int(x) for x in e.split("-")])
            arr = np.array([[d[kind][(h, e)] / scale for e in ents] for h in range(1, T + 1)]).reshape(T, len(ents))
            return ents, arr

        solar_ids, p_solar = table("solar_p", base)
        fleet_ids, ev_power = table("ev_p", base)
        _, energy = table("ev_energy", base)
        line_ids, p_flow = table("flow_p", base)
        _, q_flow = table("flow_q", base)
        grid_ids, p_grid = table("grid_p", base)
        _, q_grid = table("grid_q", base)
        current = table("ev_i")[1] if "ev_i" in d else None
        out[key] = OpfSolution(
            bus_ids=list(ids),
            v=np.array([[vt[(h, b)][0] for b in ids] for h in range(1, T + 1)]),
            theta=np.array([[vt[(h, b)][1] for b in ids] for h in range(1, T + 1)]),
            lines=[tuple(int(x) for x in e.split("-")) for e in line_ids],
            p_flow=p_flow, q_flow=q_flow,
            grid_buses=[int(g) for g in grid_ids], p_grid=p_grid, q_grid=q_grid,
            p_solar=p_solar, ev_power=ev_power, energy=energy,
            price=np.array([d["price"][(h, "tou")] for h in range(1, T + 1)]),
            objective=float("nan"), exactness_gap=float("nan"), model=key[0], ev_current=current,
            fleets=tuple(EvFleet(int(b), 0.0, 0.0, 0.0) for b in fleet_ids),
            solar_units=tuple(SolarUnit(int(b), 0.0) for b in solar_ids),
        )
    return out
