"""Radial distribution feeder model: buses, lines, topology, per-unit helpers.

The network is a tree rooted at the substation (bus 1).  Branch flow
quantities on a line are oriented from the child bus toward its parent,
so every non-root bus owns exactly one line and one (P, Q, l) triple.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SUBSTATION_KIND = "substation-gen"
BUS_KINDS = (SUBSTATION_KIND, "crowdsourcee", "load")

# squared-magnitude bounds for the default +/-5% voltage band
DEFAULT_V_MIN = 0.95**2
DEFAULT_V_MAX = 1.05**2


class FeederError(ValueError):
    """Malformed feeder document or topology violation."""


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str
    ct_class: str | None = None  # "CT1"/"CT2", crowdsourcee buses only

    def __post_init__(self):
        if self.kind not in BUS_KINDS:
            raise FeederError(f"unknown bus kind {self.kind!r} for bus {self.id}")
        if self.ct_class not in (None, "CT1", "CT2"):
            raise FeederError(f"bad ct_class {self.ct_class!r} for bus {self.id}")


@dataclass(frozen=True)
class Line:
    """Line owned by ``child_bus``, carrying flow toward ``parent_bus``."""

    child_bus: int
    parent_bus: int
    r: float  # p.u.
    x: float  # p.u.
    s_max: float | None = None  # apparent-power limit, p.u.; None = unconstrained

    def __post_init__(self):
        if self.r < 0 or self.x < 0:
            raise FeederError(
                f"negative impedance on line {self.child_bus}->{self.parent_bus}"
            )
        if self.s_max is not None and self.s_max <= 0:
            raise FeederError(f"s_max must be positive on line {self.child_bus}")


@dataclass(frozen=True)
class Feeder:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    base_mva: float
    base_kv: float
    v_min: float = DEFAULT_V_MIN
    v_max: float = DEFAULT_V_MAX

    def __post_init__(self):
        _check_radial(self.buses, self.lines)
        if self.base_mva <= 0 or self.base_kv <= 0:
            raise FeederError("power/voltage bases must be positive")
        if self.v_min > self.v_max:
            raise FeederError("v_min exceeds v_max")

    @property
    def n(self) -> int:
        return len(self.buses)

    @property
    def root(self) -> int:
        return 1

    def bus(self, bus_id: int) -> Bus:
        return self._bus_map()[bus_id]

    def line_of(self, child_bus: int) -> Line:
        """The unique line owned by a non-root bus."""
        for ln in self.lines:
            if ln.child_bus == child_bus:
                return ln
        raise KeyError(child_bus)

    def _bus_map(self) -> dict[int, Bus]:
        return {b.id: b for b in self.buses}


@dataclass
class BranchFlowState:
    """Solved branch-flow variables over a horizon.

    Bus arrays are indexed ``[bus_id - 1, t]``; line arrays ``[child_bus - 2, t]``
    (every bus except the root owns one line).  All values in p.u.
    """

    v: np.ndarray  # squared voltage magnitude, (n, T)
    p: np.ndarray  # net real injection, (n, T)
    q: np.ndarray  # net reactive injection, (n, T)
    l: np.ndarray  # squared current magnitude, (n-1, T)
    P: np.ndarray  # real flow toward parent, (n-1, T)
    Q: np.ndarray  # reactive flow toward parent, (n-1, T)

    def check(self, feeder: Feeder, horizon: int) -> None:
        n = feeder.n
        shapes = {
            "v": (n, horizon), "p": (n, horizon), "q": (n, horizon),
            "l": (n - 1, horizon), "P": (n - 1, horizon), "Q": (n - 1, horizon),
        }
        for name, want in shapes.items():
            arr = getattr(self, name)
            if arr.shape != want:
                raise FeederError(f"branch-flow array {name} has shape {arr.shape}, want {want}")
            if not np.all(np.isfinite(arr)):
                raise FeederError(f"branch-flow array {name} contains non-finite entries")


def _check_radial(buses, lines) -> None:
    ids = [b.id for b in buses]
    n = len(ids)
    if n == 0:
        raise FeederError("feeder has no buses")
    if len(set(ids)) != n:
        raise FeederError("duplicate bus ids")
    if sorted(ids) != list(range(1, n + 1)):
        raise FeederError("bus ids must form 1..n")
    subs = [b.id for b in buses if b.kind == SUBSTATION_KIND]
    if subs != [1]:
        raise FeederError("exactly bus 1 must be the substation generator")
    if len(lines) != n - 1:
        raise FeederError(f"radial feeder needs {n - 1} lines, got {len(lines)}")

    # union-find cycle check; n-1 edges + no cycle <=> spanning tree
    parent = list(range(n + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    owners = set()
    for ln in lines:
        if ln.child_bus not in ids or ln.parent_bus not in ids:
            raise FeederError(f"line references unknown bus {ln.child_bus}->{ln.parent_bus}")
        if ln.child_bus == 1:
            raise FeederError("the substation cannot own a line")
        if ln.child_bus in owners:
            raise FeederError(f"bus {ln.child_bus} has more than one parent")
        owners.add(ln.child_bus)
        ra, rb = find(ln.child_bus), find(ln.parent_bus)
        if ra == rb:
            raise FeederError("feeder topology is non-radial (cycle detected)")
        parent[ra] = rb
    if len({find(i) for i in ids}) != 1:
        raise FeederError("feeder topology is disconnected")


_HEADER_FIELDS = {"base_mva", "base_kv", "v_min", "v_max"}
_BUS_FIELDS = {"id", "kind"}
_LINE_FIELDS = {"child", "parent", "r", "x", "s_max"}


def parse_feeder(source: str | Path | dict) -> Feeder:
    """Parse a feeder document (JSON text, path, or already-decoded dict).

    Schema: ``{base_mva, base_kv, v_min, v_max, buses: [{id, kind}],
    lines: [{child, parent, r, x, s_max?}]}``.  Unknown fields are rejected.
    """
    if isinstance(source, Path):
        doc = json.loads(source.read_text())
    elif isinstance(source, str):
        p = Path(source)
        text = p.read_text() if (len(source) < 4096 and p.is_file()) else source
        doc = json.loads(text)
    else:
        doc = source
    if not isinstance(doc, dict):
        raise FeederError("feeder document must be a JSON object")

    extra = set(doc) - _HEADER_FIELDS - {"buses", "lines"}
    if extra:
        raise FeederError(f"unknown feeder fields: {sorted(extra)}")
    missing = (_HEADER_FIELDS | {"buses", "lines"}) - set(doc)
    if missing:
        raise FeederError(f"missing feeder fields: {sorted(missing)}")

    buses = []
    for rec in doc["buses"]:
        if set(rec) - _BUS_FIELDS:
            raise FeederError(f"unknown bus fields: {sorted(set(rec) - _BUS_FIELDS)}")
        buses.append(Bus(id=int(rec["id"]), kind=str(rec["kind"])))
    lines = []
    for rec in doc["lines"]:
        if set(rec) - _LINE_FIELDS:
            raise FeederError(f"unknown line fields: {sorted(set(rec) - _LINE_FIELDS)}")
        lines.append(Line(
            child_bus=int(rec["child"]), parent_bus=int(rec["parent"]),
            r=float(rec["r"]), x=float(rec["x"]),
            s_max=float(rec["s_max"]) if rec.get("s_max") is not None else None,
        ))
    return Feeder(
        buses=tuple(buses), lines=tuple(lines),
        base_mva=float(doc["base_mva"]), base_kv=float(doc["base_kv"]),
        v_min=float(doc["v_min"]), v_max=float(doc["v_max"]),
    )


def feeder_to_doc(feeder: Feeder) -> dict:
    """Inverse of :func:`parse_feeder` (used by scenario manifests)."""
    return {
        "base_mva": feeder.base_mva,
        "base_kv": feeder.base_kv,
        "v_min": feeder.v_min,
        "v_max": feeder.v_max,
        "buses": [{"id": b.id, "kind": b.kind} for b in feeder.buses],
        "lines": [
            {"child": ln.child_bus, "parent": ln.parent_bus, "r": ln.r, "x": ln.x}
            | ({"s_max": ln.s_max} if ln.s_max is not None else {})
            for ln in feeder.lines
        ],
    }


@dataclass(frozen=True)
class Topology:
    """Parent/children maps of a validated feeder."""

    parent: dict[int, int | None]
    children: dict[int, tuple[int, ...]]
    order_leaf_to_root: tuple[int, ...] = field(default=())

    def __iter__(self):
        # allow dict(topology(f)) style access: bus -> (parent, children)
        return iter({b: (self.parent[b], self.children[b]) for b in self.parent}.items())


def topology(feeder: Feeder) -> Topology:
    """Parent and children of every bus; root has parent ``None``."""
    parent: dict[int, int | None] = {b.id: None for b in feeder.buses}
    children: dict[int, list[int]] = {b.id: [] for b in feeder.buses}
    for ln in feeder.lines:
        parent[ln.child_bus] = ln.parent_bus
        children[ln.parent_bus].append(ln.child_bus)
    # deterministic depth ordering for sweeps: children before parents
    depth = {feeder.root: 0}
    stack = [feeder.root]
    order = []
    while stack:
        b = stack.pop()
        order.append(b)
        for c in sorted(children[b]):
            depth[c] = depth[b] + 1
            stack.append(c)
    order.reverse()
    return Topology(
        parent=parent,
        children={b: tuple(sorted(cs)) for b, cs in children.items()},
        order_leaf_to_root=tuple(order),
    )


_UNIT_BASES = {
    "mw": "base_mva", "mvar": "base_mva", "mva": "base_mva", "mwh": "base_mva",
    "kv": "base_kv",
}


def to_per_unit(feeder: Feeder, value: float, unit: str) -> float:
    """Convert a physical quantity to per-unit on the feeder bases."""
    key = unit.lower()
    if key not in _UNIT_BASES:
        raise FeederError(f"unknown unit {unit!r}")
    return value / getattr(feeder, _UNIT_BASES[key])


def from_per_unit(feeder: Feeder, value: float, unit: str) -> float:
    """Inverse of :func:`to_per_unit`."""
    key = unit.lower()
    if key not in _UNIT_BASES:
        raise FeederError(f"unknown unit {unit!r}")
    return value * getattr(feeder, _UNIT_BASES[key])
