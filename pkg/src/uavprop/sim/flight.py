"""Synthetic autopilot flight: telemetry for a mission plan.

The flight runs on the telemetry clock.  Each waypoint becomes a cruise leg
(antenna tracking the active ROI), a short attitude settle and a hold with
the target attitude.  MANUAL take-off and landing legs bracket the mission.
A phase covers the half-open interval (start, end] so the record on a
boundary belongs to the phase that just finished.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geo import EnuVector, GeoError, angle_diff, from_enu
from ..ingest import FlightMode, TelemetryRecord
from ..mission import MissionPlan, solve_pointing

DEFAULT_START_MS = 1_700_000_000_000


@dataclass(frozen=True)
class FlightParams:
    speed_mps: float = 3.0
    telemetry_hz: float = 4.0
    hover_jitter_sigma_m: float = 0.15
    yaw_settle_s: float = 0.5
    takeoff_s: float = 10.0
    landing_s: float = 10.0
    start_ms: int = DEFAULT_START_MS

    def __post_init__(self):
        if not (self.speed_mps > 0 and self.telemetry_hz > 0):
            raise ValueError("speed and telemetry rate must be positive")
        if min(self.hover_jitter_sigma_m, self.yaw_settle_s, self.takeoff_s, self.landing_s) < 0:
            raise ValueError("durations and jitter must be >= 0")

    @property
    def tick_ms(self) -> int:
        return max(1, round(1000.0 / self.telemetry_hz))


@dataclass(frozen=True)
class Phase:
    kind: str  # takeoff | cruise | settle | hold | landing
    wp_item_index: int | None
    t_start_ms: int  # relative to mission start
    t_end_ms: int
    p_start: EnuVector
    p_end: EnuVector
    att_start: tuple[float, float]
    att_end: tuple[float, float]
    roi: EnuVector | None = None
    mode: FlightMode = FlightMode.AUTO

    @property
    def jitter(self) -> bool:
        return self.kind in ("settle", "hold")


def _ticks(seconds: float, tick_ms: int, rounding=math.ceil) -> int:
    return int(rounding(seconds * 1000.0 / tick_ms - 1e-9)) if seconds > 0 else 0


def _aim(pos: EnuVector, roi: EnuVector | None, plan: MissionPlan, fallback):
    if roi is None:
        return fallback
    c = plan.constraints
    try:
        sol = solve_pointing(pos, roi, c)
    except GeoError:
        return fallback
    except ValueError as exc:  # en route the required tilt may leave the gimbal range
        tilt = min(max(exc.required_tilt_deg, c.tilt_min_deg), c.tilt_max_deg)
        d = roi - pos
        return (math.degrees(math.atan2(d.east_m, d.north_m)) % 360.0, tilt)
    return (sol.yaw_deg, sol.tilt_deg)


def flight_timeline(plan: MissionPlan, dyn: FlightParams = FlightParams()) -> list[Phase]:
    """Phase list for ``plan``; raises InfeasiblePointing for unreachable attitudes."""
    governed = plan.governed_waypoints()
    if not governed:
        raise ValueError("plan has no waypoints")
    tick = dyn.tick_ms
    phases: list[Phase] = []
    first = plan.enu(governed[0][0].position)
    home = EnuVector(first.east_m, first.north_m, 0.0)
    att = (0.0, 0.0)
    t = 0
    n = _ticks(dyn.takeoff_s, tick)
    phases.append(Phase("takeoff", None, t, t + n * tick, home, first, att, att, mode=FlightMode.MANUAL))
    t += n * tick
    pos = first
    for wp, roi, wp_idx, _ in governed:
        target_pos = plan.enu(wp.position)
        roi_pos = plan.enu(roi.position) if roi is not None else None
        if roi_pos is not None:
            sol = solve_pointing(target_pos, roi_pos, plan.constraints)
            target_att = (sol.yaw_deg, sol.tilt_deg)
        else:
            target_att = att
        dist = (target_pos - pos).norm()
        if dist > 0:
            n = max(1, _ticks(dist / dyn.speed_mps, tick))
            end_att = target_att if roi_pos is not None else att
            phases.append(Phase("cruise", wp_idx, t, t + n * tick, pos, target_pos,
                                _aim(pos, roi_pos, plan, att), end_att, roi_pos))
            t += n * tick
            att = end_att
        n = _ticks(dyn.yaw_settle_s, tick)
        if n:
            phases.append(Phase("settle", wp_idx, t, t + n * tick, target_pos, target_pos, att, target_att))
            t += n * tick
        n = _ticks(wp.hold_s, tick, round)
        if n:
            phases.append(Phase("hold", wp_idx, t, t + n * tick, target_pos, target_pos, target_att, target_att))
            t += n * tick
        att, pos = target_att, target_pos
    ground = EnuVector(pos.east_m, pos.north_m, 0.0)
    n = _ticks(dyn.landing_s, tick)
    phases.append(Phase("landing", None, t, t + n * tick, pos, ground, att, att, mode=FlightMode.MANUAL))
    return phases


def hold_windows(phases: list[Phase], start_ms: int) -> list[tuple[int, int, int]]:
    """(wp item index, start, end) in absolute ms for every hold, both ends inclusive."""
    return [(p.wp_item_index, start_ms + p.t_start_ms, start_ms + p.t_end_ms) for p in phases if p.kind == "hold"]


def _lerp(a: EnuVector, b: EnuVector, f: float) -> EnuVector:
    return EnuVector(a.east_m + f * (b.east_m - a.east_m), a.north_m + f * (b.north_m - a.north_m),
                     a.up_m + f * (b.up_m - a.up_m))


def _state(ph: Phase, t: int, plan: MissionPlan):
    span = ph.t_end_ms - ph.t_start_ms
    f = 1.0 if span == 0 else (t - ph.t_start_ms) / span
    pos = _lerp(ph.p_start, ph.p_end, f)
    if ph.kind == "cruise" and ph.roi is not None and f < 1.0:
        att = _aim(pos, ph.roi, plan, ph.att_end)
    else:
        y0, t0 = ph.att_start
        y1, t1 = ph.att_end
        att = ((y0 + f * angle_diff(y1, y0)) % 360.0, t0 + f * (t1 - t0))
    return pos, att


def _as_rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def simulate_flight(plan: MissionPlan, dyn: FlightParams = FlightParams(), rng=None,
                    phases: list[Phase] | None = None) -> list[TelemetryRecord]:
    rng = _as_rng(rng)
    phases = phases if phases is not None else flight_timeline(plan, dyn)
    tick = dyn.tick_ms
    end = phases[-1].t_end_ms
    records = []
    k = 0
    for t in range(0, end + 1, tick):
        while k < len(phases) - 1 and t > phases[k].t_end_ms:
            k += 1
        ph = phases[k]
        pos, (yaw, tilt) = _state(ph, t, plan)
        if ph.jitter and dyn.hover_jitter_sigma_m > 0:
            pos = pos + EnuVector(*rng.normal(0.0, dyn.hover_jitter_sigma_m, 3))
        yaw = yaw % 360.0
        if yaw >= 360.0:
            yaw = 0.0
        tilt = min(max(tilt, 0.0), 90.0)
        records.append(TelemetryRecord(dyn.start_ms + t, from_enu(pos, plan.frame), yaw, tilt, ph.mode))
    return records
