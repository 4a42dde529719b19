"""Main-lobe antenna models built from published gain and half-power beamwidth.

Only boresight gain and HPBW are known for the kit antennas, so the main
lobe is quadratic in dB (-3 dB at half the HPBW) and clamped at a flat
side-lobe floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geo import direction_vector

HORN_GAIN_DB = 21.0
HORN_HPBW_E_DEG = 12.5
HORN_HPBW_H_DEG = 15.0
OMNI_GAIN_DB = 3.0
OMNI_HPBW_V_DEG = 45.0


@dataclass(frozen=True)
class AntennaPattern:
    kind: str
    boresight_gain_db: float
    hpbw_e_deg: float
    hpbw_h_deg: float
    floor_db: float = -30.0

    def __post_init__(self):
        if self.kind not in ("horn", "omni"):
            raise ValueError(f"unknown antenna kind {self.kind!r}")
        if not (self.hpbw_e_deg > 0 and self.hpbw_h_deg > 0):
            raise ValueError("beamwidths must be positive")
        if not math.isfinite(self.boresight_gain_db) or not math.isfinite(self.floor_db):
            raise ValueError("gains must be finite")

    @classmethod
    def horn(cls) -> "AntennaPattern":
        return cls("horn", HORN_GAIN_DB, HORN_HPBW_E_DEG, HORN_HPBW_H_DEG)

    @classmethod
    def omni(cls, gain_db: float = OMNI_GAIN_DB) -> "AntennaPattern":
        return cls("omni", gain_db, OMNI_HPBW_V_DEG, 360.0)

    @property
    def directional(self) -> bool:
        return self.kind == "horn"


def antenna_gain(p: AntennaPattern, off_boresight_e_deg: float, off_boresight_h_deg: float = 0.0) -> float:
    """Gain in dBi at the given E- and H-plane offsets from boresight.

    For the omni, the E-plane offset is the elevation above the horizon and
    the H-plane offset is ignored.
    """
    if p.kind == "omni":
        rolloff = 12.0 * (off_boresight_e_deg / p.hpbw_e_deg) ** 2
    else:
        rolloff = 12.0 * ((off_boresight_e_deg / p.hpbw_e_deg) ** 2 + (off_boresight_h_deg / p.hpbw_h_deg) ** 2)
    return p.boresight_gain_db - min(rolloff, abs(p.floor_db))


def off_boresight(direction, boresight_az_deg: float, boresight_el_deg: float) -> tuple[float, float]:
    """Decompose ``direction`` into (E-plane, H-plane) angles in the antenna frame.

    The H-plane angle is measured in the antenna's horizontal plane (positive
    to the right); the E-plane angle is the elevation above that plane.
    """
    d = np.asarray(direction, dtype=float)
    fwd = direction_vector(boresight_az_deg, boresight_el_deg)
    az = math.radians(boresight_az_deg)
    right = np.array([math.cos(az), -math.sin(az), 0.0])
    up = np.cross(right, fwd)
    x, y, z = d @ fwd, d @ right, d @ up
    return math.degrees(math.atan2(z, math.hypot(x, y))), math.degrees(math.atan2(y, x))


def gain_toward(p: AntennaPattern, direction, boresight_az_deg: float = 0.0,
                boresight_el_deg: float = 0.0) -> float:
    d = np.asarray(direction, dtype=float)
    if p.kind == "omni":
        elev = math.degrees(math.atan2(d[2], math.hypot(d[0], d[1])))
        return antenna_gain(p, elev)
    e, h = off_boresight(d, boresight_az_deg, boresight_el_deg)
    return antenna_gain(p, e, h)
