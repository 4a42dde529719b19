import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import MEAN_OF_MINUS60_MINUS70_DBM
from uavprop import fuse
from uavprop.fuse import (AverageConfig, HoverSegment, annotate, average_dwells, discard_manual, mean_dbm,
                          segment_hovers)
from uavprop.geo import EnuVector, GeoPoint, LocalFrame, from_enu
from uavprop.ingest import (FlightMode, GroundPositionerRecord, PowerDelayProfile, RssSample, TelemetryRecord)
from uavprop.mission import MissionPlan, RegionOfInterest, ScanSpec, Waypoint, expand_schedule
from uavprop.sim import simulate_campaign
from uavprop.sim.flight import FlightParams
from uavprop.sim.scene import GroundStation, Scene

FRAME = LocalFrame(GeoPoint(44.35, 11.71))
T0 = 1_700_000_000_000
AUTO, MANUAL = FlightMode.AUTO, FlightMode.MANUAL


def rec(t_s, e, n, u, yaw=0.0, tilt=0.0, mode=AUTO):
    return TelemetryRecord(T0 + round(t_s * 1000), from_enu(EnuVector(e, n, u), FRAME), yaw, tilt, mode)


def wps(*positions, roi=None):
    items = [] if roi is None else [RegionOfInterest(from_enu(EnuVector(*roi), FRAME))]
    items += [Waypoint(from_enu(EnuVector(*p), FRAME), 5.0) for p in positions]
    return MissionPlan("t", FRAME, tuple(items))


def test_discard_manual():
    assert discard_manual([rec(0, 0, 0, 0, mode=MANUAL)] * 3) == []
    recs = [rec(0, 0, 0, 0, mode=MANUAL), rec(1, 0, 0, 5), rec(2, 0, 0, 5), rec(3, 0, 0, 0, mode=MANUAL)]
    assert discard_manual(recs) == recs[1:3]


def test_hold_near_fourth_waypoint():
    plan = wps((0, 0, 10), (20, 0, 10), (40, 0, 10), (60, 0, 10))
    rng = np.random.default_rng(0)
    tel = [rec(t / 4, 40 + t * 0.75, 0, 10) for t in range(0, 20)]  # cruise towards WP3
    start = tel[-1].t_ms / 1000 + 0.25
    for k in range(21):
        d = rng.uniform(-0.17, 0.17, 3)
        tel.append(rec(start + k / 4, 60 + d[0], d[1], 10 + d[2]))
    segs = segment_hovers(tel, plan)
    assert len(segs) == 1
    assert segs[0].wp_index == 3
    assert segs[0].duration_s >= 5.0


def test_crossing_without_hold():
    plan = wps((30, 0, 10))
    tel = [rec(t / 4, t * 0.75, 0, 10) for t in range(0, 80)]  # 3 m/s straight through
    assert segment_hovers(tel, plan) == []


def test_manual_records_split_and_never_segment():
    plan = wps((0, 0, 10))
    tel = [rec(k / 4, 0, 0, 10, mode=MANUAL) for k in range(40)]
    assert segment_hovers(tel, plan) == []
    tel = [rec(k / 4, 0, 0, 10, mode=MANUAL if k == 10 else AUTO) for k in range(16)]
    segs = segment_hovers(tel, plan)
    assert segs == []  # 2.5 s + 1.25 s pieces, both shorter than the minimum dwell


def test_pointing_mismatch_skips_waypoint():
    plan = wps((0, 0, 10), roi=(100, 0, 0))
    tel = [rec(k / 4, 0, 0, 10, yaw=180.0, tilt=5.7) for k in range(24)]
    assert segment_hovers(tel, plan) == []
    tel = [rec(k / 4, 0, 0, 10, yaw=90.0, tilt=5.7) for k in range(24)]
    assert len(segment_hovers(tel, plan)) == 1


def test_raster_gives_120_segments():
    base = MissionPlan("r", FRAME, (Waypoint(from_enu(EnuVector(30, 40, 25), FRAME)),))
    plan = expand_schedule(base, ScanSpec())
    scene = Scene((), GroundStation(EnuVector(0, 0, 2)))
    data = simulate_campaign(plan, scene, seed=1, uwb=None)
    segs = segment_hovers(data.telemetry, plan)
    assert len(segs) == 120
    states = [(round(s.mean_yaw_deg, 6) % 360, round(s.mean_tilt_deg, 6)) for s in segs]
    assert states == [(y, t) for y, t in ScanSpec().orientations()]


def seg(t0, t1, wp=0):
    return HoverSegment(wp, None, T0 + t0, T0 + t1, EnuVector(0, 0, 10), 90.0, 15.0, 20, wp)


def rss(t_ms, p=-60.0):
    return RssSample(T0 + t_ms, 27.0, p, p < -100.0)


def test_annotation_containment():
    res = annotate([rss(10_200)], [seg(8_000, 13_000)])
    assert len(res.annotated) == 1 and not res.orphans
    a = res.annotated[0]
    assert (a.yaw_bin_deg, a.tilt_bin_deg) == (90.0, 15.0)


def test_ground_gap_leaves_fields_empty(caplog):
    ground = [GroundPositionerRecord(T0 + 7_700, 90.0, 10.0)]
    with caplog.at_level(logging.WARNING):
        res = annotate([rss(10_200)], [seg(8_000, 13_000)], ground)
    a = res.annotated[0]
    assert a.ground_az_deg is None and a.ground_el_deg is None
    assert res.ground_gaps == 1
    assert "ground" in caplog.text


def test_below_sensitivity_annotated_but_not_averaged():
    res = annotate([rss(9_000, -60.0), rss(9_500, -101.0)], [seg(8_000, 13_000)])
    assert len(res.annotated) == 2
    assert [a.below_sensitivity for a in res.annotated] == [False, True]
    (d,) = average_dwells(res.annotated)
    assert (d.avg_power_dbm, d.n_samples, d.n_below_sensitivity) == (-60.0, 1, 1)
    (d,) = average_dwells(res.annotated, AverageConfig(include_below_sensitivity=True))
    assert d.n_samples == 2


def test_orphan_reasons():
    tel = [rec(0, 0, 0, 0, mode=MANUAL), rec(20, 0, 0, 10)]
    res = annotate([rss(100), rss(19_900), rss(50_000)], [], telemetry=tel)
    assert [o.reason for o in res.orphans] == ["manual phase", "no segment", "no segment"]


def test_mean_dbm_examples():
    assert mean_dbm([-60.0, -60.0, -60.0]) == -60.0
    assert mean_dbm([-60.0, -70.0]) == pytest.approx(MEAN_OF_MINUS60_MINUS70_DBM, abs=1e-9)
    assert round(mean_dbm([-60.0, -70.0]), 2) == -62.60


@given(st.lists(st.floats(-150, 30), min_size=1, max_size=50))
def test_mean_dbm_bounds(vals):
    m = mean_dbm(vals)
    assert min(vals) - 1e-9 <= m <= max(vals) + 1e-9
    assert mean_dbm([vals[0]] * len(vals)) == vals[0]


def test_dwell_counts_for_five_second_hover():
    res = annotate([rss(8_000 + 500 * k) for k in range(11)], [seg(8_000, 13_000)])
    (d,) = average_dwells(res.annotated)
    assert d.n_samples == 11


@given(st.integers(0, 2**32 - 1), st.lists(st.integers(0, 400), max_size=30), st.booleans())
@settings(max_examples=15, deadline=None)
def test_pipeline_conservation_and_no_manual(seed, manual_idx, continuous):
    plan = wps((0, 0, 10), (10, 0, 10), roi=(40, 0, 0))
    scene = Scene((), GroundStation(EnuVector(40, 0, 2)))
    data = simulate_campaign(plan, scene, seed, flight=FlightParams(takeoff_s=3, landing_s=3),
                             recording="continuous" if continuous else "hover")
    tel = list(data.telemetry)
    for i in manual_idx:
        if i < len(tel):
            r = tel[i]
            tel[i] = TelemetryRecord(r.t_ms, r.position, r.yaw_deg, r.gimbal_tilt_deg, MANUAL)
    segs = segment_hovers(tel, plan)
    measurements = sorted(data.rss + data.pdp, key=lambda m: m.t_ms)
    res = annotate(measurements, segs, telemetry=tel)
    assert len(res.annotated) + len(res.orphans) == len(measurements)
    times = [r.t_ms for r in tel]
    for a in res.annotated:
        k = fuse._nearest(times, a.t_ms)
        assert tel[k].mode is AUTO
        # no MANUAL record inside the segment interval either
        assert not any(r.mode is MANUAL and a.segment.t_start <= r.t_ms <= a.segment.t_end for r in tel)
    by_wp = {}
    for s in segs:
        by_wp.setdefault(s.wp_index, []).append((s.t_start, s.t_end))
    for spans in by_wp.values():
        spans.sort()
        assert all(b[0] > a[1] for a, b in zip(spans, spans[1:]))


def test_simulated_mission_has_no_orphans():
    plan = wps((0, 0, 10), (10, 0, 12), roi=(40, 0, 0))
    scene = Scene((), GroundStation(EnuVector(40, 0, 2)))
    data = simulate_campaign(plan, scene, 3)
    res = annotate(sorted(data.rss + data.pdp, key=lambda m: m.t_ms), segment_hovers(data.telemetry, plan),
                   telemetry=data.telemetry)
    assert res.orphans == []
    dwells = average_dwells(res.annotated)
    assert {d.kind for d in dwells} == {"rss", "pdp"}
    assert all(d.n_samples >= 10 for d in dwells if d.kind == "rss")
    assert all(d.n_samples >= 50 for d in dwells if d.kind == "pdp")


def test_annotated_csv_round_trip():
    plan = wps((0, 0, 10), roi=(40, 0, 0))
    scene = Scene((), GroundStation(EnuVector(40, 0, 2)))
    data = simulate_campaign(plan, scene, 5)
    res = annotate(sorted(data.rss + data.pdp, key=lambda m: m.t_ms), segment_hovers(data.telemetry, plan),
                   telemetry=data.telemetry)
    text = fuse.format_annotated(res.annotated)
    rows = fuse.parse_annotated(text)
    assert len(rows) == len(res.annotated)
    assert fuse.format_annotated(rows) == text
    a = average_dwells(res.annotated)
    b = average_dwells(rows)
    assert fuse.format_dwells(a) == fuse.format_dwells(b)
    assert all(math.isfinite(d.avg_power_dbm) for d in b)
    assert fuse.format_orphans([]) == "t_utc,kind,power_dbm,reason\n"


def test_pdp_power_in_annotation():
    p = PowerDelayProfile(T0 + 9_000, 1.0, (-80.0, -80.0))
    (a,) = annotate([p], [seg(8_000, 13_000)]).annotated
    assert a.kind == "pdp"
    assert a.power_dbm == pytest.approx(-80.0 + 10 * math.log10(2))
