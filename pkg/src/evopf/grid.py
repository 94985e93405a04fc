"""Radial distribution network: buses, lines, per-unit admittance and topology checks."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

DEFAULT_S_MAX = 10.0  # p.u.; effectively non-binding on the bundled feeder


class NetworkError(ValueError):
    """Malformed network data (bad references, duplicate or zero-impedance lines)."""


class TopologyError(NetworkError):
    """Network is not radial. ``kind`` is ``"cycle"`` or ``"disconnected"``."""

    def __init__(self, kind: str, buses, message: str):
        super().__init__(message)
        self.kind = kind
        self.buses = tuple(buses)


@dataclass(frozen=True)
class Bus:
    id: int
    v_min: float = 0.9
    v_max: float = 1.05
    p_load: float = 0.0  # nominal demand, p.u.
    q_load: float = 0.0
    attached_load_ids: tuple = ()
    attached_solar_ids: tuple = ()
    attached_fleet_ids: tuple = ()
    attached_grid_ids: tuple = ()

    def __post_init__(self):
        if not 0 < self.v_min < self.v_max:
            raise NetworkError(f"bus {self.id}: need 0 < v_min < v_max, got {self.v_min}, {self.v_max}")


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    r: float  # p.u.
    x: float  # p.u.
    s_max: float = DEFAULT_S_MAX

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise NetworkError(f"line {self.from_bus}-{self.to_bus} connects a bus to itself")
        if self.r < 0 or self.x < 0:
            raise NetworkError(f"line {self.from_bus}-{self.to_bus}: negative impedance")
        if self.r == 0 and self.x == 0:
            raise NetworkError(f"line {self.from_bus}-{self.to_bus}: zero impedance")
        if self.s_max <= 0:
            raise NetworkError(f"line {self.from_bus}-{self.to_bus}: s_max must be positive")

    @property
    def admittance(self) -> complex:
        return 1.0 / complex(self.r, self.x)


@dataclass(frozen=True, eq=False)
class Network:
    buses: tuple
    lines: tuple
    base_mva: float
    base_kv: float
    g_matrix: np.ndarray
    b_matrix: np.ndarray
    neighbors: dict = field(repr=False)
    name: str = ""

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def bus_ids(self) -> list:
        return [b.id for b in self.buses]

    def index(self, bus_id: int) -> int:
        """Row/column position of ``bus_id`` in the admittance matrices."""
        try:
            return self._index[bus_id]
        except KeyError:
            raise NetworkError(f"unknown bus {bus_id}") from None

    @cached_property
    def _index(self) -> dict:
        return {b.id: k for k, b in enumerate(self.buses)}

    def bus(self, bus_id: int) -> Bus:
        return self.buses[self.index(bus_id)]

    @property
    def grid_buses(self) -> list:
        return [b.id for b in self.buses if b.attached_grid_ids]

    @property
    def feeder(self) -> int:
        grid = self.grid_buses
        if len(grid) != 1:
            raise NetworkError(f"expected exactly one grid connection, found {grid}")
        return grid[0]

    @property
    def v_min(self) -> np.ndarray:
        return np.array([b.v_min for b in self.buses])

    @property
    def v_max(self) -> np.ndarray:
        return np.array([b.v_max for b in self.buses])

    @property
    def p_load(self) -> np.ndarray:
        return np.array([b.p_load for b in self.buses])

    @property
    def q_load(self) -> np.ndarray:
        return np.array([b.q_load for b in self.buses])

    @property
    def ybus(self) -> np.ndarray:
        return self.g_matrix + 1j * self.b_matrix

    def with_bounds(self, v_min=None, v_max=None) -> "Network":
        """Copy of the network with every bus bound replaced where given."""
        buses = [
            Bus(b.id, b.v_min if v_min is None else v_min, b.v_max if v_max is None else v_max,
                b.p_load, b.q_load, b.attached_load_ids, b.attached_solar_ids,
                b.attached_fleet_ids, b.attached_grid_ids)
            for b in self.buses
        ]
        return build_admittance(buses, self.lines, self.base_mva, self.base_kv, name=self.name)


def ohm_to_pu(z_ohm: float, base_mva: float, base_kv: float) -> float:
    return z_ohm * base_mva / base_kv**2


def build_admittance(buses, lines, base_mva: float = 10.0, base_kv: float = 12.66, name: str = "") -> Network:
    """Assemble G and B from series line impedances (no shunt elements).

    Line impedances must already be in p.u.; use :func:`ohm_to_pu` or
    :func:`load_network` for physical units.
    """
    buses = tuple(buses)
    lines = tuple(lines)
    index = {}
    for k, b in enumerate(buses):
        if b.id in index:
            raise NetworkError(f"duplicate bus id {b.id}")
        index[b.id] = k

    n = len(buses)
    y = np.zeros((n, n), dtype=complex)
    seen = set()
    neighbors = {b.id: [] for b in buses}
    for ln in lines:
        if ln.from_bus not in index or ln.to_bus not in index:
            raise NetworkError(f"line {ln.from_bus}-{ln.to_bus} references an unknown bus")
        key = frozenset((ln.from_bus, ln.to_bus))
        if key in seen:
            raise NetworkError(f"duplicate line between buses {ln.from_bus} and {ln.to_bus}")
        seen.add(key)
        i, j = index[ln.from_bus], index[ln.to_bus]
        ys = ln.admittance
        y[i, i] += ys
        y[j, j] += ys
        y[i, j] -= ys
        y[j, i] -= ys
        neighbors[ln.from_bus].append(ln.to_bus)
        neighbors[ln.to_bus].append(ln.from_bus)

    neighbors = {k: tuple(sorted(v)) for k, v in neighbors.items()}
    return Network(buses, lines, float(base_mva), float(base_kv), y.real.copy(), y.imag.copy(), neighbors, name)


def validate_radial(network: Network) -> None:
    """Raise :class:`TopologyError` unless the network is a spanning tree."""
    ids = network.bus_ids
    if not ids:
        raise TopologyError("disconnected", (), "network has no buses")
    parent = {b: b for b in ids}

    def find(b):
        while parent[b] != b:
            parent[b] = parent[parent[b]]
            b = parent[b]
        return b

    for ln in network.lines:
        ra, rb = find(ln.from_bus), find(ln.to_bus)
        if ra == rb:
            path = _tree_path(network, ln.from_bus, ln.to_bus, exclude=ln)
            raise TopologyError("cycle", path, f"cycle through buses {path}")
        parent[ra] = rb

    groups = {}
    for b in ids:
        groups.setdefault(find(b), []).append(b)
    if len(groups) > 1:
        islands = sorted((sorted(g) for g in groups.values()), key=lambda g: g[0])
        offending = [b for g in islands[1:] for b in g]
        raise TopologyError("disconnected", offending,
                            f"network splits into {len(islands)} islands: {islands}")


def _tree_path(network, start, goal, exclude):
    # BFS over all lines except ``exclude``; used only to name the buses of a cycle
    adj = {b: [] for b in network.bus_ids}
    for ln in network.lines:
        if ln is exclude:
            continue
        adj[ln.from_bus].append(ln.to_bus)
        adj[ln.to_bus].append(ln.from_bus)
    prev = {start: None}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        if u == goal:
            break
        for v in adj[u]:
            if v not in prev:
                prev[v] = u
                queue.append(v)
    path, node = [], goal
    while node is not None:
        path.append(node)
        node = prev.get(node)
    return path[::-1]


def spanning_order(network: Network, root: int | None = None) -> list:
    """Breadth-first (parent, child) edges from ``root`` (defaults to the feeder)."""
    if root is None:
        root = network.feeder
    if root not in network.neighbors:
        raise NetworkError(f"root bus {root} not in network")
    order = []
    visited = {root}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in network.neighbors[u]:
            if v not in visited:
                visited.add(v)
                order.append((u, v))
                queue.append(v)
    return order


def load_network(path=None, s_max: float | None = None) -> Network:
    """Read a network document (JSON). Without ``path`` the bundled IEEE 33-bus feeder is used.

    Document layout::

        {"base_mva": 10, "base_kv": 12.66,
         "buses": [{"id": 1, "v_min": 0.9, "v_max": 1.05, "p_mw": 0, "q_mvar": 0, "grid": true}, ...],
         "lines": [{"from": 1, "to": 2, "r_ohm": 0.0922, "x_ohm": 0.047, "s_max_mva": 100}, ...]}
    """
    if path is None:
        text = resources.files("evopf").joinpath("data/ieee33.json").read_text()
    else:
        text = Path(path).read_text()
    return parse_network(json.loads(text), s_max=s_max)


def parse_network(doc: dict, s_max: float | None = None) -> Network:
    try:
        base_mva = float(doc.get("base_mva", 10.0))
        base_kv = float(doc.get("base_kv", 12.66))
        buses = []
        for row in doc["buses"]:
            bid = int(row["id"])
            p = float(row.get("p_mw", 0.0)) / base_mva
            q = float(row.get("q_mvar", 0.0)) / base_mva
            buses.append(Bus(
                id=bid,
                v_min=float(row.get("v_min", 0.9)),
                v_max=float(row.get("v_max", 1.05)),
                p_load=p,
                q_load=q,
                attached_load_ids=(bid,) if (p or q) else (),
                attached_grid_ids=(0,) if row.get("grid", False) else (),
            ))
        lines = []
        for row in doc["lines"]:
            if "s_max_mva" in row:
                limit = float(row["s_max_mva"]) / base_mva
            else:
                limit = DEFAULT_S_MAX if s_max is None else s_max
            lines.append(Line(
                int(row["from"]), int(row["to"]),
                ohm_to_pu(float(row["r_ohm"]), base_mva, base_kv),
                ohm_to_pu(float(row["x_ohm"]), base_mva, base_kv),
                limit,
            ))
    except (KeyError, TypeError) as exc:
        raise NetworkError(f"malformed network document: {exc!r}") from exc
    return build_admittance(buses, lines, base_mva, base_kv, name=str(doc.get("name", "")))

