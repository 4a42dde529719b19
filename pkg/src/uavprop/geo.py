"""Geodetic <-> local east-north-up conversion and pointing geometry.

Campaign sites are small (sub-kilometre), so positions are mapped onto the
tangent plane at the site origin using the WGS84 meridional and
prime-vertical radii evaluated at the origin latitude.  Altitudes are
metres above ground level at the origin; no geoid handling is attempted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)

#: Conversions beyond this horizontal distance from the origin are refused.
MAX_LOCAL_RANGE_M = 10_000.0


class GeoError(ValueError):
    """Invalid coordinate or a point outside the local frame's valid area."""


@dataclass(frozen=True)
class GeoPoint:
    lat_deg: float
    lon_deg: float
    alt_m: float = 0.0

    def __post_init__(self):
        for name in ("lat_deg", "lon_deg", "alt_m"):
            if not math.isfinite(getattr(self, name)):
                raise GeoError(f"{name} must be finite, got {getattr(self, name)!r}")
        if not -90.0 <= self.lat_deg <= 90.0:
            raise GeoError(f"latitude {self.lat_deg} outside [-90, 90]")
        if not -180.0 < self.lon_deg <= 180.0:
            raise GeoError(f"longitude {self.lon_deg} outside (-180, 180]")


@dataclass(frozen=True)
class EnuVector:
    east_m: float
    north_m: float
    up_m: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.east_m, self.north_m, self.up_m)):
            raise GeoError(f"non-finite ENU component in {self!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.east_m, self.north_m, self.up_m])

    @classmethod
    def from_array(cls, a) -> "EnuVector":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def __sub__(self, other: "EnuVector") -> "EnuVector":
        return EnuVector(self.east_m - other.east_m, self.north_m - other.north_m, self.up_m - other.up_m)

    def __add__(self, other: "EnuVector") -> "EnuVector":
        return EnuVector(self.east_m + other.east_m, self.north_m + other.north_m, self.up_m + other.up_m)

    def norm(self) -> float:
        return math.sqrt(self.east_m ** 2 + self.north_m ** 2 + self.up_m ** 2)

    def horizontal_norm(self) -> float:
        return math.hypot(self.east_m, self.north_m)


def _wrap_lon(lon: float) -> float:
    """Map a longitude into (-180, 180]."""
    if -180.0 < lon <= 180.0:  # leave in-range values bit-exact
        return lon
    wrapped = math.fmod(lon + 180.0, 360.0)
    if wrapped <= 0.0:
        wrapped += 360.0
    return wrapped - 180.0


def meters_per_degree(lat_deg: float) -> tuple[float, float]:
    """Return (metres per degree latitude, metres per degree longitude) at a latitude."""
    phi = math.radians(lat_deg)
    s2 = math.sin(phi) ** 2
    w = math.sqrt(1.0 - WGS84_E2 * s2)
    meridional = WGS84_A * (1.0 - WGS84_E2) / w ** 3
    prime_vertical = WGS84_A / w
    k = math.pi / 180.0
    return meridional * k, prime_vertical * math.cos(phi) * k


@dataclass(frozen=True)
class LocalFrame:
    """Tangent-plane frame anchored at a campaign origin (ground level)."""

    origin: GeoPoint

    def __post_init__(self):
        if abs(self.origin.lat_deg) > 89.0:
            # the longitude scale collapses near the poles
            raise GeoError("local frames are not supported within 1 degree of a pole")

    @property
    def scale(self) -> tuple[float, float]:
        return meters_per_degree(self.origin.lat_deg)


def to_enu(p: GeoPoint, frame: LocalFrame) -> EnuVector:
    k_lat, k_lon = frame.scale
    north = (p.lat_deg - frame.origin.lat_deg) * k_lat
    east = _wrap_lon(p.lon_deg - frame.origin.lon_deg) * k_lon
    if math.hypot(east, north) > MAX_LOCAL_RANGE_M:
        raise GeoError(
            f"point ({p.lat_deg}, {p.lon_deg}) is {math.hypot(east, north):.0f} m from the "
            f"frame origin; limit is {MAX_LOCAL_RANGE_M:.0f} m"
        )
    return EnuVector(east, north, p.alt_m)


def from_enu(v: EnuVector, frame: LocalFrame) -> GeoPoint:
    if v.horizontal_norm() > MAX_LOCAL_RANGE_M:
        raise GeoError(f"ENU offset {v.horizontal_norm():.0f} m exceeds {MAX_LOCAL_RANGE_M:.0f} m")
    k_lat, k_lon = frame.scale
    lat = frame.origin.lat_deg + v.north_m / k_lat
    lon = _wrap_lon(frame.origin.lon_deg + v.east_m / k_lon)
    return GeoPoint(lat, lon, v.up_m)


def azimuth_elevation(origin: EnuVector, target: EnuVector) -> tuple[float, float]:
    """Direction from ``origin`` to ``target``.

    Azimuth is clockwise from North in [0, 360); elevation is positive when
    the target is above the observer.  Straight up/down reports azimuth 0.
    """
    d = target - origin
    horiz = d.horizontal_norm()
    if horiz == 0.0 and d.up_m == 0.0:
        raise GeoError("azimuth/elevation undefined for coincident points")
    elevation = math.degrees(math.atan2(d.up_m, horiz))
    if horiz == 0.0:
        return 0.0, elevation
    azimuth = math.degrees(math.atan2(d.east_m, d.north_m)) % 360.0
    if azimuth >= 360.0:  # -tiny % 360 rounds up to 360
        azimuth = 0.0
    return azimuth, elevation


def direction_vector(azimuth_deg: float, elevation_deg: float) -> np.ndarray:
    """Unit ENU vector for an azimuth (clockwise from North) and elevation."""
    az = math.radians(azimuth_deg)
    el = math.radians(elevation_deg)
    c = math.cos(el)
    return np.array([c * math.sin(az), c * math.cos(az), math.sin(el)])


def angle_diff(a_deg: float, b_deg: float) -> float:
    """Signed smallest difference a - b on the circle, in (-180, 180]."""
    d = (a_deg - b_deg) % 360.0
    return d - 360.0 if d > 180.0 else d
