"""Scene description: box buildings and the ground station.

Scene file (JSON)::

    {"buildings": [{"x_min": .., "y_min": .., "x_max": .., "y_max": ..,
                    "height_m": .., "reflection_coeff_db": -6}],
     "ground_station": {"e": .., "n": .., "u": .., "antenna": "horn",
                        "positioner": [{"t_rel_s": 0, "az_deg": 90, "el_deg": 10}]},
     "seed": 1}

Coordinates are metres east (x) / north (y) in the campaign frame.  The
antenna is ``"horn"``, ``"omni"`` or an object with the ``AntennaPattern``
fields.  ``t_rel_s`` counts from the first telemetry record; an empty
positioner keeps the ground antenna aimed at the UAV.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from ..errors import FormatError
from ..geo import EnuVector
from .antenna import AntennaPattern


@dataclass(frozen=True)
class Building:
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    height_m: float
    reflection_coeff_db: float = -6.0

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max", "height_m", "reflection_coeff_db"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.x_max > self.x_min and self.y_max > self.y_min and self.height_m > 0):
            raise ValueError(f"degenerate building {self}")
        if not self.reflection_coeff_db <= 0:
            raise ValueError("reflection_coeff_db must be <= 0")

    @property
    def lo(self) -> tuple[float, float, float]:
        return (self.x_min, self.y_min, 0.0)

    @property
    def hi(self) -> tuple[float, float, float]:
        return (self.x_max, self.y_max, self.height_m)

    def contains(self, p) -> bool:
        return (self.x_min < p[0] < self.x_max and self.y_min < p[1] < self.y_max and 0.0 < p[2] < self.height_m)


@dataclass(frozen=True)
class PositionerStep:
    t_rel_s: float
    az_deg: float
    el_deg: float


@dataclass(frozen=True)
class GroundStation:
    position: EnuVector
    antenna: AntennaPattern = field(default_factory=AntennaPattern.horn)
    positioner: tuple = ()

    def __post_init__(self):
        steps = tuple(sorted(self.positioner, key=lambda s: s.t_rel_s))
        object.__setattr__(self, "positioner", steps)

    def pointing_at(self, t_rel_s: float) -> tuple[float, float] | None:
        """Positioner (az, el) in force at ``t_rel_s``; None before the first step or when tracking."""
        current = None
        for s in self.positioner:
            if s.t_rel_s <= t_rel_s + 1e-9:
                current = (s.az_deg, s.el_deg)
            else:
                break
        return current


@dataclass(frozen=True)
class Scene:
    buildings: tuple = ()
    ground_station: GroundStation = field(default_factory=lambda: GroundStation(EnuVector(0.0, 0.0, 2.0)))
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "buildings", tuple(self.buildings))


_ANT_FIELDS = ("kind", "boresight_gain_db", "hpbw_e_deg", "hpbw_h_deg", "floor_db")
_BLD_FIELDS = ("x_min", "y_min", "x_max", "y_max", "height_m", "reflection_coeff_db")


def _num(obj, key, where, source, default=None):
    if key not in obj:
        if default is not None:
            return default
        raise FormatError(f"missing field '{key}'", source=source, field=where)
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise FormatError(f"'{key}' must be a number", source=source, field=f"{where}.{key}")
    try:
        v = float(v)
    except OverflowError:
        raise FormatError(f"'{key}' out of range", source=source, field=f"{where}.{key}") from None
    if not math.isfinite(v):
        raise FormatError(f"'{key}' must be finite", source=source, field=f"{where}.{key}")
    return v


def _obj(v, allowed, where, source) -> dict:
    if not isinstance(v, dict):
        raise FormatError("expected an object", source=source, field=where)
    unknown = sorted(set(v) - set(allowed))
    if unknown:
        raise FormatError(f"unknown field(s) {', '.join(map(repr, unknown))}", source=source, field=where)
    return v


def _antenna(raw, where, source) -> AntennaPattern:
    if raw == "horn":
        return AntennaPattern.horn()
    if raw == "omni":
        return AntennaPattern.omni()
    obj = _obj(raw, _ANT_FIELDS, where, source)
    kind = obj.get("kind")
    if kind not in ("horn", "omni"):
        raise FormatError(f"unknown antenna kind {kind!r}", source=source, field=f"{where}.kind")
    base = AntennaPattern.horn() if kind == "horn" else AntennaPattern.omni()
    try:
        return AntennaPattern(kind, *(_num(obj, k, where, source, getattr(base, k)) for k in _ANT_FIELDS[1:]))
    except ValueError as exc:
        raise FormatError(str(exc), source=source, field=where) from None


def parse_scene(text: str, source: str | None = None) -> Scene:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg} (column {exc.colno})", source=source, line=exc.lineno) from None
    doc = _obj(doc, ("buildings", "ground_station", "seed"), "scene", source)
    buildings = []
    raw_b = doc.get("buildings", [])
    if not isinstance(raw_b, list):
        raise FormatError("buildings must be a list", source=source, field="buildings")
    for i, b in enumerate(raw_b):
        where = f"buildings[{i}]"
        b = _obj(b, _BLD_FIELDS, where, source)
        vals = [_num(b, k, where, source) for k in _BLD_FIELDS[:5]]
        refl = _num(b, "reflection_coeff_db", where, source, -6.0)
        try:
            buildings.append(Building(*vals, refl))
        except ValueError as exc:
            raise FormatError(str(exc), source=source, field=where) from None

    if "ground_station" not in doc:
        raise FormatError("missing field 'ground_station'", source=source, field="scene")
    g = _obj(doc["ground_station"], ("e", "n", "u", "antenna", "positioner"), "ground_station", source)
    pos = EnuVector(*(_num(g, k, "ground_station", source) for k in ("e", "n", "u")))
    antenna = _antenna(g.get("antenna", "horn"), "ground_station.antenna", source)
    steps = []
    raw_p = g.get("positioner", [])
    if not isinstance(raw_p, list):
        raise FormatError("positioner must be a list", source=source, field="ground_station.positioner")
    for i, s in enumerate(raw_p):
        where = f"ground_station.positioner[{i}]"
        s = _obj(s, ("t_rel_s", "az_deg", "el_deg"), where, source)
        t, az, el = (_num(s, k, where, source) for k in ("t_rel_s", "az_deg", "el_deg"))
        if not (0.0 <= az < 360.0 and -90.0 <= el <= 90.0):
            raise FormatError("positioner angle out of range", source=source, field=where)
        steps.append(PositionerStep(t, az, el))

    seed = doc.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
        raise FormatError("seed must be a non-negative integer", source=source, field="seed")
    return Scene(tuple(buildings), GroundStation(pos, antenna, tuple(steps)), seed)


def _antenna_json(p: AntennaPattern):
    if p == AntennaPattern.horn():
        return "horn"
    if p == AntennaPattern.omni():
        return "omni"
    return {k: getattr(p, k) for k in _ANT_FIELDS}


def scene_to_dict(scene: Scene) -> dict:
    g = scene.ground_station
    doc = {
        "buildings": [{k: getattr(b, k) for k in _BLD_FIELDS} for b in scene.buildings],
        "ground_station": {
            "e": g.position.east_m, "n": g.position.north_m, "u": g.position.up_m,
            "antenna": _antenna_json(g.antenna),
            "positioner": [{"t_rel_s": s.t_rel_s, "az_deg": s.az_deg, "el_deg": s.el_deg} for s in g.positioner],
        },
    }
    if scene.seed is not None:
        doc["seed"] = scene.seed
    return doc


def serialize_scene(scene: Scene) -> str:
    return json.dumps(scene_to_dict(scene), indent=2) + "\n"


def read_scene(path) -> Scene:
    with open(path, encoding="utf-8") as f:
        return parse_scene(f.read(), source=str(path))
