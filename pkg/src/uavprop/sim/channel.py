"""Synthetic receiver logs: mm-wave sweep RSS, UWB power-delay profiles and
the ground positioner log, all driven by a simulated flight.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from ..analysis import LinkBudget
from ..geo import EnuVector, LocalFrame, angle_diff, azimuth_elevation, to_enu
from ..ingest import SENSITIVITY_DBM, GroundPositionerRecord, PowerDelayProfile, RssSample, TelemetryRecord
from .antenna import AntennaPattern, gain_toward
from .rays import Ray, trace_rays
from .scene import Scene

# Reported for under-range sweeps so the strict "< floor" flag marks them.
UNDER_RANGE_OFFSET_DB = 0.1


@dataclass(frozen=True)
class NoiseParams:
    sigma_db: float = 0.5
    floor_dbm: float = SENSITIVITY_DBM


@dataclass(frozen=True)
class MmwaveConfig:
    freq_ghz: float = 27.0
    sweep_s: float = 0.5
    air_antenna: AntennaPattern = field(default_factory=AntennaPattern.horn)


@dataclass(frozen=True)
class UwbConfig:
    bin_ns: float = 1.0
    n_bins: int = 2048
    record_hz: float = 10.0
    center_freq_ghz: float = 4.2
    noise_db: float = -130.0
    noise_sigma_db: float = 1.0
    antenna: AntennaPattern = field(default_factory=AntennaPattern.omni)


@dataclass(frozen=True)
class UavState:
    position: EnuVector
    yaw_deg: float
    tilt_deg: float


class FlightTrack:
    """Telemetry interpolated in time, in the campaign ENU frame."""

    def __init__(self, telemetry, frame: LocalFrame):
        recs = sorted(telemetry, key=lambda r: r.t_ms)
        if not recs:
            raise ValueError("no telemetry")
        self.times = [r.t_ms for r in recs]
        self.records = recs
        self.positions = [to_enu(r.position, frame) for r in recs]

    @property
    def start_ms(self) -> int:
        return self.times[0]

    @property
    def end_ms(self) -> int:
        return self.times[-1]

    def at(self, t_ms: int) -> UavState:
        i = bisect.bisect_right(self.times, t_ms) - 1
        i = min(max(i, 0), len(self.times) - 1)
        a = self.records[i]
        if i == len(self.times) - 1 or t_ms <= self.times[i]:
            return UavState(self.positions[i], a.yaw_deg, a.gimbal_tilt_deg)
        b = self.records[i + 1]
        f = (t_ms - self.times[i]) / (self.times[i + 1] - self.times[i])
        pa, pb = self.positions[i].as_array(), self.positions[i + 1].as_array()
        yaw = (a.yaw_deg + f * angle_diff(b.yaw_deg, a.yaw_deg)) % 360.0
        return UavState(EnuVector.from_array(pa + f * (pb - pa)), yaw,
                        a.gimbal_tilt_deg + f * (b.gimbal_tilt_deg - a.gimbal_tilt_deg))


def sample_times(start_ms: int, end_ms: int, period_ms: int, windows=None) -> list[int]:
    """Grid ``start + k*period`` within [start, end], optionally restricted to inclusive windows."""
    grid = range(start_ms, end_ms + 1, period_ms)
    if windows is None:
        return list(grid)
    return [t for t in grid if any(a <= t <= b for a, b in windows)]


def _ground_boresight(scene: Scene, t_rel_s: float, uav: EnuVector) -> tuple[float, float]:
    g = scene.ground_station
    aim = g.pointing_at(t_rel_s)
    if aim is None:
        aim = azimuth_elevation(g.position, uav)
    return aim


def _ray_gain(ray: Ray, scene: Scene, ground_aim, uav: UavState, air: AntennaPattern) -> float:
    g = scene.ground_station
    gt = gain_toward(g.antenna, ray.departure, *ground_aim)
    gr = gain_toward(air, ray.arrival, uav.yaw_deg, -uav.tilt_deg)
    return ray.gain_db + gt + gr


def received_power_dbm(scene: Scene, uav: UavState, t_rel_s: float, lb: LinkBudget = LinkBudget(),
                       cfg: MmwaveConfig = MmwaveConfig()) -> float | None:
    """Noise-free received power, or None if no ray reaches the UAV."""
    g = scene.ground_station
    rays = trace_rays(scene, g.position.as_array(), uav.position.as_array(), cfg.freq_ghz)
    if not rays:
        return None
    aim = _ground_boresight(scene, t_rel_s, uav.position)
    lin = sum(10.0 ** (_ray_gain(r, scene, aim, uav, cfg.air_antenna) / 10.0) for r in rays)
    return lb.tx_power_dbm + lb.amp_gain_db - lb.misc_loss_db + 10.0 * math.log10(lin)


def _as_rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def simulate_mmwave(scene: Scene, telemetry, frame: LocalFrame, *, lb: LinkBudget = LinkBudget(),
                    noise: NoiseParams = NoiseParams(), cfg: MmwaveConfig = MmwaveConfig(),
                    rng=None, windows=None) -> list[RssSample]:
    """One RSS reading per sweep period; ``windows`` limits recording to those intervals."""
    rng = _as_rng(rng)
    track = FlightTrack(telemetry, frame)
    period = max(1, round(cfg.sweep_s * 1000.0))
    out = []
    for t in sample_times(track.start_ms, track.end_ms, period, windows):
        p = received_power_dbm(scene, track.at(t), (t - track.start_ms) / 1000.0, lb, cfg)
        value = None if p is None else p + rng.normal(0.0, noise.sigma_db)
        under = value is None or value < noise.floor_dbm
        if under:
            value = noise.floor_dbm - UNDER_RANGE_OFFSET_DB
        out.append(RssSample(t, cfg.freq_ghz, round(value, 3), under))
    return out


def synthesize_pdp(rays, t_ms: int, cfg: UwbConfig, rng, extra_gain=None) -> PowerDelayProfile:
    """Bin ray powers onto the delay grid and add a log-normal noise floor."""
    sig = np.zeros(cfg.n_bins)
    for r in rays:
        idx = round(r.delay_ns / cfg.bin_ns)
        if idx >= cfg.n_bins:
            raise ValueError(f"ray delay {r.delay_ns:.1f} ns exceeds the {cfg.n_bins * cfg.bin_ns:g} ns window")
        g = r.gain_db + (extra_gain(r) if extra_gain else 0.0)
        sig[idx] += 10.0 ** (g / 10.0)
    noise_db = cfg.noise_db + rng.normal(0.0, cfg.noise_sigma_db, cfg.n_bins)
    taps = 10.0 * np.log10(sig + 10.0 ** (noise_db / 10.0))
    return PowerDelayProfile(t_ms, cfg.bin_ns, tuple(round(float(x), 3) for x in taps))


def simulate_uwb(scene: Scene, telemetry, frame: LocalFrame, *, cfg: UwbConfig = UwbConfig(),
                 rng=None, windows=None) -> list[PowerDelayProfile]:
    rng = _as_rng(rng)
    track = FlightTrack(telemetry, frame)
    period = max(1, round(1000.0 / cfg.record_hz))
    g = scene.ground_station
    out = []
    for t in sample_times(track.start_ms, track.end_ms, period, windows):
        uav = track.at(t)
        rays = trace_rays(scene, g.position.as_array(), uav.position.as_array(), cfg.center_freq_ghz)

        def antenna_gains(r):
            return gain_toward(cfg.antenna, r.departure) + gain_toward(cfg.antenna, r.arrival)

        out.append(synthesize_pdp(rays, t, cfg, rng, antenna_gains))
    return out


def simulate_ground_log(scene: Scene, start_ms: int, end_ms: int, hz: float = 10.0) -> list[GroundPositionerRecord]:
    """Positioner readback; empty when the ground antenna is not scheduled."""
    g = scene.ground_station
    if not g.positioner:
        return []
    period = max(1, round(1000.0 / hz))
    out = []
    for t in range(start_ms, end_ms + 1, period):
        aim = g.pointing_at((t - start_ms) / 1000.0)
        if aim is not None:
            out.append(GroundPositionerRecord(t, aim[0], aim[1]))
    return out
