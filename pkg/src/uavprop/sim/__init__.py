"""Synthetic campaigns producing the same logs the field instruments write."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..analysis import LinkBudget
from ..ingest import GroundPositionerRecord, PowerDelayProfile, RssSample, TelemetryRecord
from ..mission import MissionPlan
from .antenna import AntennaPattern, antenna_gain, gain_toward, off_boresight
from .channel import (FlightTrack, MmwaveConfig, NoiseParams, UwbConfig, received_power_dbm,
                      simulate_ground_log, simulate_mmwave, simulate_uwb, synthesize_pdp)
from .flight import FlightParams, Phase, flight_timeline, hold_windows, simulate_flight
from .rays import Ray, knife_edge_loss, trace_rays
from .scenarios import Campaign
from .scene import Building, GroundStation, PositionerStep, Scene, parse_scene, read_scene, serialize_scene

RECORDING_MODES = ("hover", "continuous")


@dataclass
class CampaignData:
    telemetry: list[TelemetryRecord]
    rss: list[RssSample]
    pdp: list[PowerDelayProfile]
    ground_log: list[GroundPositionerRecord]
    timeline: list[Phase]
    seed: int


def simulate_campaign(plan: MissionPlan, scene: Scene, seed: int = 0, *,
                      flight: FlightParams = FlightParams(), mmwave: MmwaveConfig = MmwaveConfig(),
                      uwb: UwbConfig | None = UwbConfig(), lb: LinkBudget = LinkBudget(),
                      noise: NoiseParams = NoiseParams(), recording: str = "hover") -> CampaignData:
    """Fly ``plan`` in ``scene`` and record every instrument.

    In ``hover`` mode the receivers only log during waypoint holds, as the
    field operators did; ``continuous`` logs the whole flight.  All noise
    derives from ``seed`` through independent child streams.  Pass
    ``uwb=None`` to skip the UWB sounder.
    """
    if recording not in RECORDING_MODES:
        raise ValueError(f"recording must be one of {RECORDING_MODES}")
    flight_rng, mm_rng, uwb_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))
    timeline = flight_timeline(plan, flight)
    telemetry = simulate_flight(plan, flight, flight_rng, timeline)
    windows = None
    if recording == "hover":
        windows = [(a, b) for _, a, b in hold_windows(timeline, flight.start_ms)]
    rss = simulate_mmwave(scene, telemetry, plan.frame, lb=lb, noise=noise, cfg=mmwave, rng=mm_rng, windows=windows)
    pdp = [] if uwb is None else simulate_uwb(scene, telemetry, plan.frame, cfg=uwb, rng=uwb_rng, windows=windows)
    ground = simulate_ground_log(scene, telemetry[0].t_ms, telemetry[-1].t_ms)
    return CampaignData(telemetry, rss, pdp, ground, timeline, seed)


def run_campaign(c: Campaign, seed: int = 0, **kw) -> CampaignData:
    kw.setdefault("flight", c.flight)
    kw.setdefault("mmwave", c.mmwave)
    kw.setdefault("uwb", c.uwb)
    return simulate_campaign(c.plan, c.scene, seed, **kw)
