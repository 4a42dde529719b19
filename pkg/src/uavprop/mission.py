"""Flight programs of interleaved waypoints (WP) and regions of interest (ROI).

A waypoint is a hover position with a holding time.  An ROI is a point the
on-board antenna tracks; it governs every following waypoint until the next
ROI.  The UAV yaw sets the antenna azimuth and a one-axis gimbal sets the
downward tilt, which is mechanically limited to 0..60 degrees.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Union

from .errors import FormatError
from .geo import EnuVector, GeoError, GeoPoint, LocalFrame, azimuth_elevation, from_enu, to_enu

logger = logging.getLogger(__name__)

# Admits values such as 60.00001 deg that arise from rounded plan coordinates.
TILT_BOUNDARY_TOL_DEG = 1e-4


class InfeasiblePointing(ValueError):
    def __init__(self, required_tilt_deg: float, tilt_min_deg: float, tilt_max_deg: float):
        self.required_tilt_deg = required_tilt_deg
        super().__init__(
            f"required tilt {required_tilt_deg:.3f} deg outside gimbal range "
            f"[{tilt_min_deg:g}, {tilt_max_deg:g}] deg (downward positive)"
        )


@dataclass(frozen=True)
class Waypoint:
    position: GeoPoint
    hold_s: float = 5.0

    def __post_init__(self):
        if not math.isfinite(self.hold_s) or self.hold_s < 0:
            raise ValueError(f"hold_s must be finite and >= 0, got {self.hold_s!r}")


@dataclass(frozen=True)
class RegionOfInterest:
    position: GeoPoint


MissionItem = Union[Waypoint, RegionOfInterest]


@dataclass(frozen=True)
class MissionConstraints:
    max_agl_m: float = 50.0
    tilt_min_deg: float = 0.0
    tilt_max_deg: float = 60.0
    min_hold_s: float = 5.0

    def __post_init__(self):
        vals = (self.max_agl_m, self.tilt_min_deg, self.tilt_max_deg, self.min_hold_s)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("constraints must be finite")
        if self.max_agl_m <= 0:
            raise ValueError("max_agl_m must be positive")
        if not 0.0 <= self.tilt_min_deg < self.tilt_max_deg <= 90.0:
            raise ValueError("need 0 <= tilt_min_deg < tilt_max_deg <= 90")
        if self.min_hold_s < 0:
            raise ValueError("min_hold_s must be >= 0")


@dataclass(frozen=True)
class PointingSolution:
    yaw_deg: float
    tilt_deg: float


@dataclass(frozen=True)
class MissionPlan:
    name: str
    frame: LocalFrame
    items: tuple = ()
    constraints: MissionConstraints = field(default_factory=MissionConstraints)

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))

    def waypoints(self) -> list[tuple[int, Waypoint]]:
        """(item index, waypoint) pairs in flight order."""
        return [(i, it) for i, it in enumerate(self.items) if isinstance(it, Waypoint)]

    def governed_waypoints(self) -> list[tuple[Waypoint, RegionOfInterest | None, int, int | None]]:
        """Each waypoint with its active ROI: (wp, roi, wp_item_index, roi_item_index)."""
        out = []
        roi, roi_idx = None, None
        for i, it in enumerate(self.items):
            if isinstance(it, RegionOfInterest):
                roi, roi_idx = it, i
            else:
                out.append((it, roi, i, roi_idx))
        return out

    def enu(self, p: GeoPoint) -> EnuVector:
        return to_enu(p, self.frame)


def solve_pointing(uav: EnuVector, roi: EnuVector,
                   c: MissionConstraints = MissionConstraints()) -> PointingSolution:
    """Yaw and downward gimbal tilt that aim the on-board antenna at ``roi``."""
    yaw, elev = azimuth_elevation(uav, roi)
    tilt = -elev
    if tilt < c.tilt_min_deg - TILT_BOUNDARY_TOL_DEG or tilt > c.tilt_max_deg + TILT_BOUNDARY_TOL_DEG:
        raise InfeasiblePointing(tilt, c.tilt_min_deg, c.tilt_max_deg)
    tilt = min(max(tilt, c.tilt_min_deg), c.tilt_max_deg)
    return PointingSolution(yaw, tilt + 0.0)


# -- validation -------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    item_index: int | None = None
    severity: str = "error"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def errors(self) -> list[Violation]:
        return [v for v in self.violations if v.severity == "error"]

    @property
    def warnings(self) -> list[Violation]:
        return [v for v in self.violations if v.severity == "warning"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]

    def format(self) -> str:
        if not self.violations:
            return "plan OK"
        lines = []
        for v in self.violations:
            where = f"item {v.item_index}" if v.item_index is not None else "plan"
            lines.append(f"{v.severity.upper()}: {where}: {v.message} [{v.code}]")
        return "\n".join(lines)


def validate(plan: MissionPlan) -> ValidationReport:
    c = plan.constraints
    report = ValidationReport()
    add = report.violations.append
    governed = plan.governed_waypoints()
    if not governed:
        add(Violation("no_waypoints", "no waypoints"))
    for wp, roi, i, roi_i in governed:
        alt = wp.position.alt_m
        if alt > c.max_agl_m:
            add(Violation("altitude_exceeded", f"altitude exceeds {c.max_agl_m:g} m (waypoint at {alt:g} m AGL)", i))
        if alt < 0:
            add(Violation("below_ground", f"waypoint altitude {alt:g} m is below ground level", i))
        if wp.hold_s < c.min_hold_s:
            add(Violation("hold_too_short", f"hold {wp.hold_s:g} s shorter than {c.min_hold_s:g} s", i))
        if roi is None:
            continue
        try:
            uav, target = plan.enu(wp.position), plan.enu(roi.position)
        except GeoError as exc:
            add(Violation("out_of_frame", str(exc), i))
            continue
        if uav == target:
            add(Violation("roi_at_waypoint", f"ROI (item {roi_i}) coincides with the waypoint", i))
            continue
        try:
            solve_pointing(uav, target, c)
        except InfeasiblePointing as exc:
            add(Violation("infeasible_pointing", f"ROI item {roi_i}: {exc}", i))
    last_wp = max((i for _, _, i, _ in governed), default=-1)
    for i, it in enumerate(plan.items):
        if isinstance(it, RegionOfInterest) and i > last_wp:
            add(Violation("dead_roi", "ROI after the last waypoint governs nothing", i, "warning"))
    return report


# -- angular raster -----------------------------------------------------------

@dataclass(frozen=True)
class ScanSpec:
    az_step_deg: float = 15.0
    tilt_levels_deg: tuple = (0.0, 15.0, 30.0, 45.0, 60.0)
    dwell_s: float = 5.0
    az_start_deg: float = 0.0
    roi_range_m: float = 20.0

    @property
    def n_azimuths(self) -> int:
        n = 360.0 / self.az_step_deg
        return int(round(n))

    def orientations(self) -> list[tuple[float, float]]:
        """(yaw, tilt) dwell states: every azimuth for each tilt level in turn."""
        return [((self.az_start_deg + k * self.az_step_deg) % 360.0, float(t))
                for t in self.tilt_levels_deg for k in range(self.n_azimuths)]


def raster_roi(uav: EnuVector, yaw_deg: float, tilt_deg: float, range_m: float) -> EnuVector:
    """A point ``range_m`` away along the commanded antenna direction."""
    yaw, tilt = math.radians(yaw_deg), math.radians(tilt_deg)
    h = range_m * math.cos(tilt)
    return EnuVector(uav.east_m + h * math.sin(yaw), uav.north_m + h * math.cos(yaw),
                     uav.up_m - range_m * math.sin(tilt))


def expand_schedule(plan: MissionPlan, scan: ScanSpec = ScanSpec(),
                    wp_indices: Iterable[int] | None = None) -> MissionPlan:
    """Replace hovering waypoints by a raster of (yaw, tilt) dwell states.

    Each dwell state becomes a synthetic ROI followed by a waypoint at the
    same position held for ``scan.dwell_s``.  ``wp_indices`` selects which
    waypoints (counted among waypoints only) are expanded; default all.
    """
    if scan.az_step_deg <= 0 or abs(360.0 / scan.az_step_deg - round(360.0 / scan.az_step_deg)) > 1e-9:
        raise ValueError(f"azimuth step {scan.az_step_deg} does not divide 360")
    c = plan.constraints
    for t in scan.tilt_levels_deg:
        if not c.tilt_min_deg <= t <= c.tilt_max_deg:
            raise ValueError(f"tilt level {t} outside [{c.tilt_min_deg:g}, {c.tilt_max_deg:g}]")
    if scan.roi_range_m <= 0 or scan.dwell_s < 0:
        raise ValueError("roi_range_m must be > 0 and dwell_s >= 0")

    n_wp = len(plan.waypoints())
    selected = set(range(n_wp)) if wp_indices is None else set(wp_indices)
    items: list[MissionItem] = []
    active_roi = None
    wp_count = 0
    for it in plan.items:
        if isinstance(it, RegionOfInterest):
            active_roi = it
            items.append(it)
            continue
        if wp_count in selected:
            uav = plan.enu(it.position)
            for yaw, tilt in scan.orientations():
                roi = raster_roi(uav, yaw, tilt, scan.roi_range_m)
                items.append(RegionOfInterest(from_enu(roi, plan.frame)))
                items.append(Waypoint(it.position, scan.dwell_s))
            if wp_count < n_wp - 1:
                if active_roi is not None:
                    items.append(active_roi)
                else:
                    logger.warning("waypoints after the raster inherit its last synthetic ROI")
        else:
            items.append(it)
        wp_count += 1
    return MissionPlan(plan.name, plan.frame, tuple(items), plan.constraints)


# -- plan file ----------------------------------------------------------------

_TOP_FIELDS = {"name", "origin", "constraints", "items"}
_ORIGIN_FIELDS = {"lat_deg", "lon_deg"}
_CONSTRAINT_FIELDS = ("max_agl_m", "tilt_min_deg", "tilt_max_deg", "min_hold_s")
_ITEM_FIELDS = {
    "waypoint": ("lat_deg", "lon_deg", "agl_m", "hold_s"),
    "roi": ("lat_deg", "lon_deg", "agl_m"),
}


def plan_to_dict(plan: MissionPlan) -> dict:
    c = plan.constraints
    items = []
    for it in plan.items:
        p = it.position
        if isinstance(it, Waypoint):
            items.append({"type": "waypoint", "lat_deg": p.lat_deg, "lon_deg": p.lon_deg,
                          "agl_m": p.alt_m, "hold_s": it.hold_s})
        else:
            items.append({"type": "roi", "lat_deg": p.lat_deg, "lon_deg": p.lon_deg, "agl_m": p.alt_m})
    return {
        "name": plan.name,
        "origin": {"lat_deg": plan.frame.origin.lat_deg, "lon_deg": plan.frame.origin.lon_deg},
        "constraints": {k: getattr(c, k) for k in _CONSTRAINT_FIELDS},
        "items": items,
    }


def serialize_plan(plan: MissionPlan) -> str:
    return json.dumps(plan_to_dict(plan), indent=2) + "\n"


def _number(obj: dict, key: str, where: str, source: str | None) -> float:
    if key not in obj:
        raise FormatError(f"missing field '{key}'", source=source, field=where)
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise FormatError(f"field '{key}' must be a number, got {type(v).__name__}",
                          source=source, field=f"{where}.{key}")
    try:
        v = float(v)
    except OverflowError:
        raise FormatError(f"field '{key}' out of range", source=source, field=f"{where}.{key}") from None
    if not math.isfinite(v):
        raise FormatError(f"field '{key}' must be finite", source=source, field=f"{where}.{key}")
    return v


def _check_fields(obj, allowed, where: str, source: str | None):
    if not isinstance(obj, dict):
        raise FormatError("expected an object", source=source, field=where)
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise FormatError(f"unknown field(s) {', '.join(map(repr, unknown))}", source=source, field=where)


def parse_plan(text: str, source: str | None = None) -> MissionPlan:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg} (column {exc.colno})", source=source, line=exc.lineno) from None
    except RecursionError:
        raise FormatError("document nested too deeply", source=source) from None
    _check_fields(doc, _TOP_FIELDS, "plan", source)
    for key in ("name", "origin", "items"):
        if key not in doc:
            raise FormatError(f"missing field '{key}'", source=source, field="plan")
    if not isinstance(doc["name"], str):
        raise FormatError("name must be a string", source=source, field="name")

    _check_fields(doc["origin"], _ORIGIN_FIELDS, "origin", source)
    try:
        origin = GeoPoint(_number(doc["origin"], "lat_deg", "origin", source),
                          _number(doc["origin"], "lon_deg", "origin", source), 0.0)
        frame = LocalFrame(origin)
    except GeoError as exc:
        raise FormatError(str(exc), source=source, field="origin") from None

    raw_c = doc.get("constraints", {})
    _check_fields(raw_c, _CONSTRAINT_FIELDS, "constraints", source)
    try:
        constraints = MissionConstraints(**{k: _number(raw_c, k, "constraints", source)
                                            for k in _CONSTRAINT_FIELDS if k in raw_c})
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(str(exc), source=source, field="constraints") from None

    if not isinstance(doc["items"], list):
        raise FormatError("items must be a list", source=source, field="items")
    items: list[MissionItem] = []
    for i, raw in enumerate(doc["items"]):
        where = f"items[{i}]"
        if not isinstance(raw, dict):
            raise FormatError("expected an object", source=source, field=where)
        kind = raw.get("type")
        if kind not in _ITEM_FIELDS:
            raise FormatError(f"unknown item type {kind!r} (expected 'waypoint' or 'roi')",
                              source=source, field=f"{where}.type")
        fields = _ITEM_FIELDS[kind]
        _check_fields(raw, ("type",) + fields, where, source)
        vals = {k: _number(raw, k, where, source) for k in fields}
        try:
            pos = GeoPoint(vals["lat_deg"], vals["lon_deg"], vals["agl_m"])
            items.append(Waypoint(pos, vals["hold_s"]) if kind == "waypoint" else RegionOfInterest(pos))
        except ValueError as exc:
            raise FormatError(str(exc), source=source, field=where) from None
    return MissionPlan(doc["name"], frame, tuple(items), constraints)


def read_plan(path) -> MissionPlan:
    with open(path, encoding="utf-8") as f:
        return parse_plan(f.read(), source=str(path))


def write_plan(plan: MissionPlan, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(serialize_plan(plan))
