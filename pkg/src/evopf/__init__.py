"""Multi-period OPF for radial feeders with solar and EV fleets.

Fixed-power fleets are solved through an exact second-order-cone relaxation;
fixed-current fleets by sequential convexification of the ``I * V`` terms.
Newton-Raphson replay certifies every solution against the AC equations.
"""
from .conic import ConicSolution, Tolerances, solve
from .fixed_current import effective_ev_power, solve_fixed_current
from .grid import Bus, Line, Network, build_admittance, load_network, spanning_order, validate_radial
from .powerflow import PfCase, newton_pf, verify_opf
from .recovery import OpfSolution, exactness_gap, recover
from .scenario import EvFleet, Scenario, SolarUnit, load_scenario, scale_penetration, tou_scenarios
from .socp import ConicProgram, build_fixed_power, symmetry_reduce
from .study import StudySpec, run_study

__all__ = [
    "Bus", "Line", "Network", "build_admittance", "load_network", "spanning_order", "validate_radial",
    "EvFleet", "Scenario", "SolarUnit", "load_scenario", "scale_penetration", "tou_scenarios",
    "ConicProgram", "build_fixed_power", "symmetry_reduce",
    "ConicSolution", "Tolerances", "solve",
    "OpfSolution", "exactness_gap", "recover",
    "effective_ev_power", "solve_fixed_current",
    "PfCase", "newton_pf", "verify_opf",
    "StudySpec", "run_study",
]
