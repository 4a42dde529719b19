"""Scripted desk-scale campaigns: free-space link, raster scan, air-to-street,
street canyon and scattering wall.

Each builder returns a ``Campaign``: the mission plan, the scene and the
instrument settings the scenario assumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..geo import EnuVector, GeoPoint, LocalFrame, from_enu
from ..mission import MissionPlan, RegionOfInterest, ScanSpec, Waypoint, expand_schedule
from .antenna import AntennaPattern
from .channel import MmwaveConfig, UwbConfig
from .flight import FlightParams, flight_timeline
from .scene import Building, GroundStation, PositionerStep, Scene

DEFAULT_ORIGIN = GeoPoint(44.35, 11.71, 0.0)
GROUND_STATION = EnuVector(0.0, 0.0, 2.0)


@dataclass(frozen=True)
class Campaign:
    plan: MissionPlan
    scene: Scene
    flight: FlightParams = field(default_factory=FlightParams)
    mmwave: MmwaveConfig = field(default_factory=MmwaveConfig)
    uwb: UwbConfig = field(default_factory=UwbConfig)


def _frame(origin: GeoPoint = DEFAULT_ORIGIN) -> LocalFrame:
    return LocalFrame(origin)


def _wp(frame: LocalFrame, p: EnuVector, hold_s: float = 5.0) -> Waypoint:
    return Waypoint(from_enu(p, frame), hold_s)


def _roi(frame: LocalFrame, p: EnuVector) -> RegionOfInterest:
    return RegionOfInterest(from_enu(p, frame))


def free_space_link(uav: EnuVector = EnuVector(96.0, 0.0, 30.0), hold_s: float = 60.0,
                    ground: EnuVector = GROUND_STATION) -> Campaign:
    """Horns at both ends aimed at each other over an unobstructed path."""
    frame = _frame()
    plan = MissionPlan("free-space-link", frame, (_roi(frame, ground), _wp(frame, uav, hold_s)))
    return Campaign(plan, Scene((), GroundStation(ground, AntennaPattern.horn())))


def raster_scan(uav: EnuVector, scan: ScanSpec = ScanSpec(), ground: EnuVector = GROUND_STATION) -> Campaign:
    """One waypoint expanded into the 24 x 5 azimuth/tilt raster, ground horn tracking the UAV."""
    frame = _frame()
    base = MissionPlan("raster", frame, (_wp(frame, uav, scan.dwell_s),))
    return Campaign(expand_schedule(base, scan), Scene((), GroundStation(ground, AntennaPattern.horn())))


# Air-to-street: ground horn in the street, Building 2 behind it, UAV above Building 1.
BUILDING_2 = Building(-40.0, -50.0, -6.0, 50.0, 30.0)
BUILDING_1 = Building(12.0, -30.0, 70.0, 30.0, 15.0)
AIR_TO_STREET_UAV_X = 60.0
PEP_ELEVATIONS = tuple(range(-10, 61, 5))
PEP_AZIMUTHS = (270.0, 90.0)


def air_to_street(altitude_m: float, step_s: float = 5.0, flight: FlightParams = FlightParams()) -> Campaign:
    """Ground positioner sweeps elevation at two azimuths while the UAV (omni) hovers."""
    frame = _frame()
    states = [(az, el) for az in PEP_AZIMUTHS for el in PEP_ELEVATIONS]
    uav = EnuVector(AIR_TO_STREET_UAV_X, 0.0, altitude_m)
    plan = MissionPlan("air-to-street", frame, (_wp(frame, uav, step_s * len(states)),))
    hold = next(p for p in flight_timeline(plan, flight) if p.kind == "hold")
    t0 = hold.t_start_ms / 1000.0
    steps = tuple(PositionerStep(t0 + i * step_s, az, float(el)) for i, (az, el) in enumerate(states))
    scene = Scene((BUILDING_2, BUILDING_1), GroundStation(GROUND_STATION, AntennaPattern.horn(), steps))
    return Campaign(plan, scene, flight, MmwaveConfig(air_antenna=AntennaPattern.omni()))


def specular_elevation(altitude_m: float) -> float:
    """Elevation at the ground station of the Building-2 specular point."""
    wall = BUILDING_2.x_max
    image_x = 2 * wall - GROUND_STATION.east_m
    s = (wall - image_x) / (AIR_TO_STREET_UAV_X - image_x)
    z = GROUND_STATION.up_m + s * (altitude_m - GROUND_STATION.up_m)
    return math.degrees(math.atan2(z - GROUND_STATION.up_m, GROUND_STATION.east_m - wall))


# Street canyon: ground station at the street entrance, UAV flying down the street.
CANYON_HALF_WIDTH_M = 7.5
CANYON_ROUTE_Y = tuple(100.0 + 5.0 * k for k in range(20))
CANYON_ALTITUDE_M = 16.0
CANYON_FAR_WALL_Y = 400.0


def street_canyon(hold_s: float = 5.0) -> Campaign:
    """20 points, 5 m apart, 16 m up the middle of a street closed by a far wall."""
    frame = _frame()
    w = CANYON_HALF_WIDTH_M
    buildings = (
        Building(-30.0, -10.0, -w, CANYON_FAR_WALL_Y - 10.0, 15.0),
        Building(w, -10.0, 30.0, CANYON_FAR_WALL_Y - 10.0, 15.0),
        Building(-30.0, CANYON_FAR_WALL_Y, 30.0, CANYON_FAR_WALL_Y + 20.0, 30.0),
    )
    items = [_wp(frame, EnuVector(0.0, y, CANYON_ALTITUDE_M), hold_s) for y in CANYON_ROUTE_Y]
    plan = MissionPlan("street-canyon", frame, tuple(items))
    return Campaign(plan, Scene(buildings, GroundStation(GROUND_STATION, AntennaPattern.omni())),
                    uwb=UwbConfig(n_bins=4096))


# Scattering wall: ground horn and UAV horn both aimed at one spot on a wall facing north.
SCATTER_WALL = Building(-50.0, -20.0, 50.0, 0.0, 25.0)
SCATTER_SPOT = EnuVector(0.0, 0.0, 10.0)


def scattering_wall(arc_radius_m: float = 20.0, aspects_deg=tuple(range(-60, 61, 10)),
                    incidence_deg: float = -30.0, hold_s: float = 5.0) -> Campaign:
    """Horizontal arc of hover points around a wall spot; the UAV horn tracks the spot."""
    frame = _frame()

    def on_arc(aspect: float, r: float) -> EnuVector:
        a = math.radians(aspect)  # normal points north; positive aspect is clockwise (east)
        return EnuVector(SCATTER_SPOT.east_m + r * math.sin(a), SCATTER_SPOT.north_m + r * math.cos(a),
                         SCATTER_SPOT.up_m)

    ground = on_arc(incidence_deg, 1.5 * arc_radius_m)  # off the arc so no hover coincides with it
    items = [_roi(frame, SCATTER_SPOT)] + [_wp(frame, on_arc(a, arc_radius_m), hold_s) for a in aspects_deg]
    plan = MissionPlan("scattering-wall", frame, tuple(items))
    d = SCATTER_SPOT - ground
    az = math.degrees(math.atan2(d.east_m, d.north_m)) % 360.0
    station = GroundStation(ground, AntennaPattern.horn(), (PositionerStep(0.0, az, 0.0),))
    return Campaign(plan, Scene((SCATTER_WALL,), station))
