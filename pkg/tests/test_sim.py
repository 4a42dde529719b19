import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import DELAY_30M_NS, KNIFE_EDGE_J0_DB, KNIFE_EDGE_J1_DB, mirror_angles
from uavprop import analysis, fuse
from uavprop.analysis import NoSignalError, delay_stats, friis_path_gain
from uavprop.geo import EnuVector, GeoPoint, LocalFrame, angle_diff, from_enu, to_enu
from uavprop.mission import MissionPlan, RegionOfInterest, Waypoint, solve_pointing
from uavprop.sim import (AntennaPattern, Building, GroundStation, PositionerStep, Scene, antenna_gain,
                         flight_timeline, knife_edge_loss, parse_scene, received_power_dbm, serialize_scene,
                         run_campaign, simulate_campaign, simulate_flight, simulate_mmwave, synthesize_pdp,
                         trace_rays)
from uavprop.sim.channel import MmwaveConfig, UavState, UwbConfig
from uavprop.sim.flight import FlightParams
from uavprop.sim.rays import Ray
from uavprop.sim.scenarios import PEP_AZIMUTHS, air_to_street, specular_elevation

FRAME = LocalFrame(GeoPoint(44.35, 11.71))
EMPTY = Scene((), GroundStation(EnuVector(0, 0, 2)))


# -- antenna ------------------------------------------------------------------------------

def test_horn_gain_examples():
    horn = AntennaPattern.horn()
    assert antenna_gain(horn, 0.0, 0.0) == 21.0
    assert antenna_gain(horn, 6.25, 0.0) == pytest.approx(18.0)
    assert antenna_gain(horn, 0.0, 7.5) == pytest.approx(18.0)
    assert antenna_gain(horn, 90.0, 0.0) == -9.0


def test_omni_constant_in_azimuth():
    from uavprop.sim import gain_toward
    omni = AntennaPattern.omni()
    gains = {round(gain_toward(omni, (math.sin(a), math.cos(a), 0.2), 0.0, 0.0), 12)
             for a in np.linspace(0, 2 * math.pi, 13)}
    assert len(gains) == 1
    assert gain_toward(omni, (1.0, 0.0, 0.0)) == 3.0
    assert gain_toward(omni, (1.0, 0.0, math.tan(math.radians(22.5)))) == pytest.approx(0.0)


@pytest.mark.parametrize("kw", [{"hpbw_e_deg": 0}, {"hpbw_h_deg": -1}, {"kind": "dish"}])
def test_antenna_invariants(kw):
    args = dict(kind="horn", boresight_gain_db=21.0, hpbw_e_deg=12.5, hpbw_h_deg=15.0) | kw
    with pytest.raises(ValueError):
        AntennaPattern(**args)


# -- rays --------------------------------------------------------------------------------------

def test_knife_edge_values():
    assert knife_edge_loss(0.0) == pytest.approx(KNIFE_EDGE_J0_DB, abs=1e-12)
    assert knife_edge_loss(1.0) == pytest.approx(KNIFE_EDGE_J1_DB, abs=1e-12)
    assert round(knife_edge_loss(0.0), 2) == 6.03 and round(knife_edge_loss(1.0), 2) == 13.93
    assert knife_edge_loss(-0.78) == 0.0 and knife_edge_loss(-3.0) == 0.0


def test_empty_scene_single_los_ray():
    (r,) = trace_rays(EMPTY, (0, 0, 2), (100, 0, 2), 27.0)
    assert r.kind == "los" and r.path_length_m == 100.0
    assert r.gain_db == friis_path_gain(27.0, 100.0)


def test_ray_delay():
    r = Ray("los", ((0, 0, 0), (30, 0, 0)), 30.0, 0.0)
    assert r.delay_ns == pytest.approx(DELAY_30M_NS, rel=1e-12)


def random_scene(rng):
    buildings = []
    for _ in range(int(rng.integers(1, 4))):
        x, y = rng.uniform(-60, 60, 2)
        w, d = rng.uniform(5, 30, 2)
        buildings.append(Building(x, y, x + w, y + d, rng.uniform(5, 40), rng.uniform(-12, -1)))
    return Scene(tuple(buildings), GroundStation(EnuVector(0, 0, 2)))


def outside(scene, p):
    return not any(b.contains(p) for b in scene.buildings)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=150, deadline=None)
def test_reflection_angles_and_energy(seed):
    rng = np.random.default_rng(seed)
    scene = random_scene(rng)
    tx, rx = tuple(rng.uniform(-100, 100, 2)) + (rng.uniform(0, 40),), tuple(rng.uniform(-100, 100, 2)) + (
        rng.uniform(0, 50),)
    if not (outside(scene, tx) and outside(scene, rx)) or math.dist(tx, rx) < 1:
        return
    for r in trace_rays(scene, tx, rx, 27.0):
        if r.kind == "los":
            assert r.gain_db == friis_path_gain(27.0, r.path_length_m)
            continue
        assert r.gain_db < friis_path_gain(27.0, r.path_length_m)
        if r.kind == "reflection":
            p = r.vertices[1]
            # the interaction point sits on a vertical face; find its normal
            b = next(b for b in scene.buildings
                     if any(abs(p[k] - v) < 1e-9 for k, v in ((0, b.x_min), (0, b.x_max), (1, b.y_min), (1, b.y_max)))
                     and b.x_min - 1e-9 <= p[0] <= b.x_max + 1e-9 and b.y_min - 1e-9 <= p[1] <= b.y_max + 1e-9)
            normal = (1.0, 0.0, 0.0) if abs(p[0] - b.x_min) < 1e-9 or abs(p[0] - b.x_max) < 1e-9 else (0.0, 1.0, 0.0)
            inc, ref = mirror_angles(tx, p, rx, normal)
            assert abs(inc - ref) < 1e-6
            # the mirrored transmitter, the wall point and the receiver are collinear to 1e-9 m
            k = 0 if normal[0] else 1
            img = list(tx)
            img[k] = 2 * p[k] - tx[k]
            u = np.subtract(rx, img)
            off = np.linalg.norm(np.cross(u, np.subtract(p, img))) / np.linalg.norm(u)
            assert off < 1e-9


def test_diffraction_over_thin_screen():
    screen = Building(40.0, -50.0, 40.5, 50.0, 20.0)
    rays = trace_rays(Scene((screen,), EMPTY.ground_station), (0, 0, 2), (100, 0, 30), 27.0)
    assert [r.kind for r in rays] == ["diffraction"]
    assert rays[0].vertices[1] == (40.0, 0.0, 20.0)
    assert rays[0].gain_db < friis_path_gain(27.0, rays[0].path_length_m) - 6.0


def test_diffraction_over_deep_roof_uses_equivalent_edge():
    block = Building(40.0, -50.0, 60.0, 50.0, 20.0)
    rays = trace_rays(Scene((block,), EMPTY.ground_station), (0, 0, 2), (100, 0, 10), 27.0)
    assert [r.kind for r in rays] == ["diffraction"]
    apex = rays[0].vertices[1]
    assert 40.0 < apex[0] < 60.0 and apex[2] > 20.0
    # both legs graze the roof edges
    assert apex[2] == pytest.approx(2 + (20 - 2) / 40 * apex[0])
    assert apex[2] == pytest.approx(10 + (20 - 10) / 40 * (100 - apex[0]))


def test_endpoint_inside_building_has_no_rays():
    b = Building(-5, -5, 5, 5, 10)
    assert trace_rays(Scene((b,), GroundStation(EnuVector(20, 0, 2))), (20, 0, 2), (0, 0, 5), 27.0) == []


# -- flight --------------------------------------------------------------------------------------

def one_wp_plan(hold=5.0, uav=(0, 0, 19), roi=(100, 0, 2)):
    items = (RegionOfInterest(from_enu(EnuVector(*roi), FRAME)), Waypoint(from_enu(EnuVector(*uav), FRAME), hold))
    return MissionPlan("p", FRAME, items)


def hover_records(plan, dyn, seed=0):
    tl = flight_timeline(plan, dyn)
    hold = next(p for p in tl if p.kind == "hold")
    recs = simulate_flight(plan, dyn, seed, tl)
    lo, hi = dyn.start_ms + hold.t_start_ms, dyn.start_ms + hold.t_end_ms
    return [r for r in recs if lo <= r.t_ms <= hi]


def test_hover_record_count():
    assert len(hover_records(one_wp_plan(), FlightParams())) >= 20


def test_zero_jitter_hovers_exactly_at_waypoint():
    plan = one_wp_plan()
    target = to_enu(plan.items[1].position, FRAME)
    for r in hover_records(plan, FlightParams(hover_jitter_sigma_m=0.0)):
        assert (to_enu(r.position, FRAME) - target).norm() < 1e-6


def test_yaw_tracks_roi_after_settle():
    plan = one_wp_plan(uav=(30, 40, 19), roi=(-20, 5, 0))
    sol = solve_pointing(EnuVector(30, 40, 19), EnuVector(-20, 5, 0))
    for r in hover_records(plan, FlightParams()):
        assert abs(angle_diff(r.yaw_deg, sol.yaw_deg)) < 0.5
        assert abs(r.gimbal_tilt_deg - sol.tilt_deg) < 0.5


def test_manual_stubs_bracket_auto():
    recs = simulate_flight(one_wp_plan(), FlightParams(), 0)
    modes = [r.mode.value for r in recs]
    first, last = modes.index("AUTO"), len(modes) - 1 - modes[::-1].index("AUTO")
    assert set(modes[:first]) == {"MANUAL"} and set(modes[last + 1:]) == {"MANUAL"}
    assert set(modes[first:last + 1]) == {"AUTO"}


# -- mm-wave channel ----------------------------------------------------------------------------------

def test_total_blockage_reports_floor():
    box = Building(-10, -10, 10, 10, 30)
    scene = Scene((box,), GroundStation(EnuVector(-50, 0, 2)))
    plan = one_wp_plan(uav=(50, 0, 10), roi=(-50, 0, 2))
    tel = simulate_flight(plan, FlightParams(), 0)
    # a tall closed box between the two ends with no path around it
    scene = Scene((Building(-20, -500, 20, 500, 200),), scene.ground_station)
    rss = simulate_mmwave(scene, tel, FRAME, rng=0)
    assert rss and all(s.rss_dbm == -100.1 and s.below_sensitivity for s in rss)


def test_power_falls_as_receiver_turns_away():
    scene = Scene((), GroundStation(EnuVector(0, 0, 2), AntennaPattern.horn()))
    cfg = MmwaveConfig()
    uav = EnuVector(100, 0, 2)
    powers = [received_power_dbm(scene, UavState(uav, (270.0 + d) % 360.0, 0.0), 0.0, cfg=cfg)
              for d in np.linspace(0, 180, 61)]
    assert np.argmax(powers) == 0
    assert all(b <= a + 1e-12 for a, b in zip(powers, powers[1:]))


def test_noise_free_boresight_power():
    scene = Scene((), GroundStation(EnuVector(0, 0, 2), AntennaPattern.horn()))
    p = received_power_dbm(scene, UavState(EnuVector(100, 0, 2), 270.0, 0.0), 0.0)
    assert p == pytest.approx(5 + 20 + 21 + 21 + friis_path_gain(27.0, 100.0), abs=1e-9)


def test_hover_recording_yields_ten_sweeps_and_fifty_profiles():
    data = simulate_campaign(one_wp_plan(), EMPTY, 0)
    assert len(data.rss) >= 10
    assert len(data.pdp) >= 50


# -- UWB ------------------------------------------------------------------------------------------------

def test_single_los_tap_position():
    rays = trace_rays(EMPTY, (0, 0, 2), (30, 0, 2), 4.2)
    p = synthesize_pdp(rays, 0, UwbConfig(), np.random.default_rng(0))
    taps = np.array(p.taps_db)
    assert int(np.argmax(taps)) == round(DELAY_30M_NS) == 100
    assert delay_stats(p).rms_delay_spread_ns == 0.0


def test_two_equal_rays_spread():
    c = 299_792_458.0
    rays = [Ray("los", ((0, 0, 0), (1, 0, 0)), 50e-9 * c, -60.0), Ray("los", ((0, 0, 0), (1, 0, 0)), 150e-9 * c, -60.0)]
    p = synthesize_pdp(rays, 0, UwbConfig(), np.random.default_rng(1))
    assert delay_stats(p).rms_delay_spread_ns == pytest.approx(50.0, abs=1.0)


def test_no_rays_is_noise_only():
    p = synthesize_pdp([], 0, UwbConfig(), np.random.default_rng(2))
    assert int(np.argmax(p.taps_db)) > 0
    with pytest.raises(NoSignalError, match="no signal above threshold"):
        delay_stats(p)


def test_window_shorter_than_delay():
    far = trace_rays(EMPTY, (0, 0, 2), (700, 0, 2), 4.2)
    with pytest.raises(ValueError, match="window"):
        synthesize_pdp(far, 0, UwbConfig(n_bins=2048), np.random.default_rng(0))


# -- campaigns --------------------------------------------------------------------------------------------

def test_same_seed_same_data():
    a = simulate_campaign(one_wp_plan(), EMPTY, 9)
    b = simulate_campaign(one_wp_plan(), EMPTY, 9)
    assert a.telemetry == b.telemetry and a.rss == b.rss and a.pdp == b.pdp
    assert simulate_campaign(one_wp_plan(), EMPTY, 10).rss != a.rss


def test_unknown_recording_mode():
    with pytest.raises(ValueError):
        simulate_campaign(one_wp_plan(), EMPTY, recording="sometimes")


def pep_profiles(alt, seed=1):
    c = air_to_street(alt)
    d = run_campaign(c, seed=seed, uwb=None)
    ann = fuse.annotate(d.rss, fuse.segment_hovers(d.telemetry, c.plan), d.ground_log, telemetry=d.telemetry)
    dw = fuse.average_dwells(ann.annotated)
    out = {}
    for az in PEP_AZIMUTHS:
        try:
            out[az] = analysis.power_angle_profile(dw, "elevation", az, source="ground", step_deg=5)
        except ValueError:
            out[az] = None
    return out


def test_air_to_street_high_altitude_specular_peak():
    prof = pep_profiles(50.0)[270.0]
    spec = specular_elevation(50.0)
    assert abs(prof.argmax().angle_deg - spec) <= 5.0


@pytest.mark.xfail(strict=True, reason="at 19 m the Building-1 roof blocks every single-bounce path off "
                                       "Building 2, so the reflection arm records only below-sensitivity "
                                       "samples; the single-interaction tracer cannot reproduce the claim")
def test_air_to_street_low_altitude_mechanisms_comparable():
    prof = pep_profiles(19.0)
    refl, diff = prof[270.0], prof[90.0]
    assert refl is not None and diff is not None
    assert abs(refl.argmax().power_dbm - diff.argmax().power_dbm) <= 6.0


# -- scene files ---------------------------------------------------------------------------------------------

def test_scene_round_trip():
    scene = Scene((Building(0, 0, 10, 20, 15, -4.5), Building(-30, -30, -20, -5, 8)),
                  GroundStation(EnuVector(1.0, 2.0, 3.0), AntennaPattern.omni(),
                                (PositionerStep(0.0, 90.0, 5.0), PositionerStep(5.0, 270.0, -10.0))), seed=42)
    text = serialize_scene(scene)
    assert parse_scene(text) == scene
    assert serialize_scene(parse_scene(text)) == text


@pytest.mark.parametrize("patch", [
    ('"height_m": 15.0', '"height_m": 0.0'),
    ('"reflection_coeff_db": -4.5', '"reflection_coeff_db": 2.0'),
    ('"seed": 42', '"seed": 42, "colour": "red"'),
])
def test_scene_errors(patch):
    from uavprop.errors import FormatError
    scene = Scene((Building(0, 0, 10, 20, 15, -4.5),), GroundStation(EnuVector(1, 2, 3)), seed=42)
    text = serialize_scene(scene)
    assert patch[0] in text
    with pytest.raises(FormatError):
        parse_scene(text.replace(*patch))
