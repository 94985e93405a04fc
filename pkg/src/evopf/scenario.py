"""Day-ahead time series, EV fleets, solar units and time-of-use price overlays."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .grid import Network

HORIZON = 24


class ScenarioError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class EvFleet:
    """Aggregate EV fleet at one bus. Powers in p.u., energies in p.u.·h."""

    bus: int
    e_min: float
    e_max: float
    p_charge_max: float
    eff_charge: float = 0.95
    eff_discharge: float = 0.95
    travel_power: float = 0.0  # fleet driving draw at full driving ratio, p.u.
    e_init_fraction: float = 0.5

    def __post_init__(self):
        if self.e_min < 0 or self.e_max < self.e_min or (self.e_max == self.e_min and self.e_max != 0):
            raise ScenarioError("fleet.e_min/e_max", f"bus {self.bus}: need 0 <= e_min < e_max")
        if self.p_charge_max < 0 or self.travel_power < 0:
            raise ScenarioError("fleet.p_charge_max", f"bus {self.bus}: negative power")
        for name in ("eff_charge", "eff_discharge"):
            eff = getattr(self, name)
            if not 0 < eff <= 1:
                raise ScenarioError(f"fleet.{name}", f"bus {self.bus}: efficiency {eff} outside (0, 1]")
        if not 0 <= self.e_init_fraction <= 1:
            raise ScenarioError("fleet.e_init_fraction", f"bus {self.bus}: outside [0, 1]")

    @property
    def is_empty(self) -> bool:
        return self.e_max == 0 and self.p_charge_max == 0 and self.travel_power == 0


@dataclass(frozen=True)
class SolarUnit:
    bus: int
    capacity: float  # p.u.

    def __post_init__(self):
        if self.capacity < 0:
            raise ScenarioError("solar.capacity", f"bus {self.bus}: negative capacity")


@dataclass(frozen=True, eq=False)
class Scenario:
    """Hourly inputs over the horizon.

    ``demand_p``/``demand_q`` are (T, n_bus) in network bus order; ``solar_profile``
    and ``travel_profile`` are normalized shapes multiplied by unit capacity and
    fleet travel power respectively.
    """

    tou_price: np.ndarray  # $/MWh
    demand_p: np.ndarray
    demand_q: np.ndarray
    solar_profile: np.ndarray
    r_charge: np.ndarray
    r_discharge: np.ndarray
    travel_profile: np.ndarray
    solar_units: tuple = ()
    fleets: tuple = ()  # reference (100 % penetration) fleets
    name: str = ""

    def __post_init__(self):
        self.validate()

    @property
    def horizon(self) -> int:
        return len(self.tou_price)

    def validate(self) -> None:
        T = self.horizon
        if T < 1:
            raise ScenarioError("price", "empty series")
        for name in ("demand_p", "demand_q"):
            arr = getattr(self, name)
            if arr.ndim != 2 or arr.shape[0] != T:
                raise ScenarioError(name, f"expected {T} rows, got shape {arr.shape}")
        for name in ("solar_profile", "r_charge", "r_discharge", "travel_profile"):
            arr = getattr(self, name)
            if arr.shape != (T,):
                raise ScenarioError(name, f"expected {T} entries, got {arr.shape[0] if arr.ndim else 0}")
            if not np.all(np.isfinite(arr)):
                raise ScenarioError(name, "non-finite entry")
        if np.any(self.tou_price < 0):
            raise ScenarioError("price", "negative price")
        if np.any(self.solar_profile < 0):
            raise ScenarioError("solar", "negative solar availability")
        if np.any(self.travel_profile < 0):
            raise ScenarioError("travel", "negative travel power")
        for name in ("r_charge", "r_discharge"):
            arr = getattr(self, name)
            if np.any(arr < 0) or np.any(arr > 1):
                raise ScenarioError(name, "ratio outside [0, 1]")

    def solar_availability(self) -> np.ndarray:
        """A_s^t as a (T, n_solar) array in p.u."""
        caps = np.array([u.capacity for u in self.solar_units], dtype=float)
        return self.solar_profile[:, None] * caps[None, :]

    def travel_power(self, fleets) -> np.ndarray:
        """P^tr as a (T, n_fleet) array in p.u."""
        ref = np.array([f.travel_power for f in fleets], dtype=float)
        return self.travel_profile[:, None] * ref[None, :]

    def with_price(self, price) -> "Scenario":
        price = np.asarray(price, dtype=float)
        if price.shape != self.tou_price.shape:
            raise ScenarioError("price", f"expected {self.horizon} entries, got {price.size}")
        return replace(self, tou_price=price)

    def with_tou(self, number: int, mean_price: float | None = None) -> "Scenario":
        """Overlay one of the four bundled TOU layouts, keeping the current mean price by default."""
        if mean_price is None:
            mean_price = float(self.tou_price.mean())
        return self.with_price(tou_scenarios(mean_price, self.horizon)[number - 1])


def _series(doc, key, T, default=None):
    if key not in doc:
        if default is None:
            raise ScenarioError(key, "missing series")
        return np.full(T, float(default))
    arr = np.asarray(doc[key], dtype=float)
    if arr.shape != (T,):
        raise ScenarioError(key, f"expected {T} entries, got {arr.size}")
    return arr


def parse_scenario(doc: dict, network: Network) -> Scenario:
    T = int(doc.get("horizon", len(doc.get("price", ())) or HORIZON))
    price = _series(doc, "price", T)
    load_p = _series(doc, "load_p", T, 1.0)
    load_q = _series(doc, "load_q", T, None) if "load_q" in doc else load_p
    base = network.base_mva
    try:
        fleets = tuple(
            EvFleet(
                bus=int(row["bus"]),
                e_min=float(row.get("e_min_mwh", 0.0)) / base,
                e_max=float(row["e_max_mwh"]) / base,
                p_charge_max=float(row["p_charge_max_mw"]) / base,
                eff_charge=float(row.get("eff_charge", 0.95)),
                eff_discharge=float(row.get("eff_discharge", 0.95)),
                travel_power=float(row.get("travel_mw", 0.0)) / base,
                e_init_fraction=float(row.get("e_init_fraction", 0.5)),
            )
            for row in doc.get("fleets", ())
        )
        solar = tuple(
            SolarUnit(int(row["bus"]), float(row["capacity_mw"]) / base)
            for row in doc.get("solar_units", ())
        )
    except KeyError as exc:
        raise ScenarioError(str(exc.args[0]), "missing fleet/solar field") from None
    for unit in (*fleets, *solar):
        if unit.bus not in network.neighbors:
            raise ScenarioError("bus", f"unit attached to unknown bus {unit.bus}")
    return Scenario(
        tou_price=price,
        demand_p=load_p[:, None] * network.p_load[None, :],
        demand_q=load_q[:, None] * network.q_load[None, :],
        solar_profile=_series(doc, "solar", T, 0.0),
        r_charge=_series(doc, "r_charge", T, 1.0),
        r_discharge=_series(doc, "r_discharge", T, 0.0),
        travel_profile=_series(doc, "travel", T, 1.0),
        solar_units=solar,
        fleets=fleets,
        name=str(doc.get("name", "")),
    )


def load_scenario(document=None, network: Network | None = None) -> Scenario:
    """Load a scenario from a path, a JSON string or a parsed dict.

    ``None`` selects the bundled CAISO-shaped day on the bundled feeder.
    Demand is the normalized profile times each bus's nominal load.
    """
    if network is None:
        from .grid import load_network
        network = load_network()
    if document is None:
        doc = json.loads(resources.files("evopf").joinpath("data/caiso_2020_08_18.json").read_text())
    elif isinstance(document, dict):
        doc = document
    elif isinstance(document, Path) or (isinstance(document, str) and not document.lstrip().startswith("{")):
        doc = json.loads(Path(document).read_text())
    else:
        doc = json.loads(document)
    return parse_scenario(doc, network)


def scale_penetration(fleets, level: float):
    """Scale reference fleets linearly; ``level`` is a fraction (0.5 for 50 %)."""
    if level < 0:
        raise ValueError(f"penetration level must be non-negative, got {level}")
    return tuple(
        replace(f, e_min=f.e_min * level, e_max=f.e_max * level,
                p_charge_max=f.p_charge_max * level, travel_power=f.travel_power * level)
        for f in fleets
    )


# hours are 1-based steps; step t covers clock hour t-1 .. t
SUPER_OFF_PEAK = {
    2: list(range(1, 7)) + [12, 13],
    3: list(range(1, 8)),
    4: list(range(10, 16)),
}
ON_PEAK = list(range(17, 22))
TIER_FACTORS = (0.5, 1.0, 1.5)  # super-off-peak, off-peak, on-peak


def tou_scenarios(mean_price: float = 100.0, horizon: int = HORIZON) -> list:
    """Four price series with identical daily mean.

    1 is flat; 2-4 are three-tier layouts differing in where the cheap window sits.
    """
    if horizon != HORIZON:
        raise ScenarioError("horizon", "TOU layouts are defined for a 24-step day")
    out = [np.full(horizon, float(mean_price))]
    low, mid, high = TIER_FACTORS
    for k in (2, 3, 4):
        raw = np.full(horizon, mid)
        raw[np.array(ON_PEAK) - 1] = high
        raw[np.array(SUPER_OFF_PEAK[k]) - 1] = low
        out.append(raw * (mean_price / raw.mean()))
    return out
