"""Moving the cheap-price window moves the voltage problem.

Solves the 50 % fleet under all four TOU layouts (1 flat, 2-4 three-tier with
different super-off-peak windows) and reports when bus 17 is lowest.

Run:  python3 demos/tou_sensitivity.py
"""
import numpy as np

from evopf import StudySpec, run_study
from evopf.scenario import SUPER_OFF_PEAK

result = run_study(StudySpec(penetration_levels=(0.5,), tou_scenarios=(1, 2, 3, 4)))
for cell in result.cells:
    sol = cell.solution
    v17 = sol.voltage(17)
    window = SUPER_OFF_PEAK.get(int(cell.tou), "flat price")
    low = [t + 1 for t in range(24) if v17[t] < 0.95]
    print(f"TOU {cell.tou}: super-off-peak {window}")
    print(f"   cost ${sol.cost:.2f}; lowest V17 {v17.min():.4f} at hour {int(np.argmin(v17)) + 1}; "
          f"below 0.95 at hours {low or 'none'}")

flat = result.cell("fixed_power", 0.5, 1).solution.voltage(17)
tou2 = result.cell("fixed_power", 0.5, 2).solution.voltage(17)
print(f"\nhour 1 at bus 17: flat {flat[0]:.4f} vs TOU 2 {tou2[0]:.4f}")
