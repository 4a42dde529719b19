"""Derived propagation quantities from averaged measurements.

Power-angle profiles, path gain against the free-space reference, delay
moments of UWB power-delay profiles, building back-scattering patterns and
outdoor-to-indoor penetration loss.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .fuse import AnnotatedSample, DwellAverage, mean_dbm
from .geo import EnuVector, angle_diff
from .ingest import PowerDelayProfile, format_utc

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0


def wavelength_m(freq_ghz: float) -> float:
    return SPEED_OF_LIGHT / (freq_ghz * 1e9)


def friis_path_gain(freq_ghz: float, distance_m: float) -> float:
    """Free-space path gain in dB (negative beyond the unit distance c/(4*pi*f))."""
    if not freq_ghz > 0 or not distance_m > 0:
        raise ValueError(f"frequency and distance must be positive, got {freq_ghz} GHz, {distance_m} m")
    return -20.0 * math.log10(4.0 * math.pi * distance_m / wavelength_m(freq_ghz))


# -- link budget --------------------------------------------------------------------

@dataclass(frozen=True)
class LinkBudget:
    """Ground transmitter chain and antenna gains; defaults are the horn/omni kit maxima."""

    tx_power_dbm: float = 5.0
    amp_gain_db: float = 20.0
    tx_ant_gain_db: float = 21.0
    rx_ant_gain_db: float = 3.0
    misc_loss_db: float = 0.0

    def __post_init__(self):
        if not -3.0 <= self.tx_power_dbm <= 5.0:
            raise ValueError(f"tx_power_dbm {self.tx_power_dbm} outside the generator range [-3, 5] dBm")
        for name in ("amp_gain_db", "tx_ant_gain_db", "rx_ant_gain_db", "misc_loss_db"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")

    @property
    def eirp_dbm(self) -> float:
        return self.tx_power_dbm + self.amp_gain_db + self.tx_ant_gain_db - self.misc_loss_db

    @property
    def effective_dbm(self) -> float:
        """EIRP plus receive antenna gain: the RSS at 0 dB path gain."""
        return self.eirp_dbm + self.rx_ant_gain_db


@dataclass(frozen=True)
class PathGainEstimate:
    path_gain_db: float
    caveat: str = "nominal boresight antenna gains removed; pattern not deconvolved"


def measured_path_gain(avg: DwellAverage | float, lb: LinkBudget = LinkBudget()) -> PathGainEstimate:
    power = avg if isinstance(avg, (int, float)) else avg.avg_power_dbm
    return PathGainEstimate(power - lb.effective_dbm)


# -- angular profiles ----------------------------------------------------------------

@dataclass(frozen=True)
class ProfileBin:
    angle_deg: float
    power_dbm: float
    n_samples: int
    n_dwells: int


@dataclass
class AngularProfile:
    axis: str
    source: str
    fixed_value_deg: float | None
    bins: list[ProfileBin]
    step_deg: float | None = None
    missing_deg: list[float] = field(default_factory=list)

    def argmax(self) -> ProfileBin:
        return max(self.bins, key=lambda b: b.power_dbm)

    @property
    def angles(self) -> list[float]:
        return [b.angle_deg for b in self.bins]


class MixedWaypointsError(ValueError):
    pass


class RasterError(ValueError):
    pass


def _axis_fields(axis: str, source: str):
    table = {
        ("azimuth", "air"): ("yaw_bin_deg", "tilt_bin_deg"),
        ("elevation", "air"): ("tilt_bin_deg", "yaw_bin_deg"),
        ("azimuth", "ground"): ("ground_az_bin_deg", "ground_el_bin_deg"),
        ("elevation", "ground"): ("ground_el_bin_deg", "ground_az_bin_deg"),
    }
    try:
        return table[(axis, source)]
    except KeyError:
        raise ValueError(f"unsupported profile axis/source {axis!r}/{source!r}") from None


def power_angle_profile(dwell_avgs: Sequence[DwellAverage], axis: str = "azimuth",
                        fixed_axis_value: float | None = None, *, source: str = "air",
                        step_deg: float | None = None, position_tol_m: float = 1.0,
                        kind: str = "rss") -> AngularProfile:
    """Binned power versus one pointing angle, with the other angle held fixed.

    ``source="air"`` profiles the on-board antenna (yaw / downward tilt);
    ``source="ground"`` profiles the ground positioner (azimuth / elevation).
    All dwells must come from one UAV position.
    """
    angle_f, other_f = _axis_fields(axis, source)
    avgs = [a for a in dwell_avgs if a.kind == kind and getattr(a, angle_f) is not None]
    if fixed_axis_value is not None:
        avgs = [a for a in avgs if getattr(a, other_f) is not None
                and abs(angle_diff(getattr(a, other_f), fixed_axis_value)) < 1e-6]
    if not avgs:
        raise ValueError("no dwell averages for the requested profile")
    others = {getattr(a, other_f) for a in avgs}
    if fixed_axis_value is None and len(others) > 1:
        raise ValueError(f"several {other_f} values present {sorted(others, key=str)}; pass fixed_axis_value")
    _check_single_position(avgs, position_tol_m)

    groups: dict[float, list[DwellAverage]] = {}
    for a in avgs:
        groups.setdefault(float(getattr(a, angle_f)), []).append(a)
    angles = sorted(groups)
    period = 360.0 if axis == "azimuth" else None
    step, missing = _raster(angles, step_deg, period)
    bins = []
    for ang in angles:
        members = groups[ang]
        n = sum(m.n_samples for m in members)
        # sample-weighted linear mean of the per-dwell averages
        lin = sum(m.n_samples * 10.0 ** (m.avg_power_dbm / 10.0) for m in members) / n
        bins.append(ProfileBin(ang, 10.0 * math.log10(lin), n, len(members)))
    fixed = fixed_axis_value if fixed_axis_value is not None else next(iter(others))
    return AngularProfile(axis, source, fixed, bins, step, missing)


def power_angle_profiles(dwell_avgs: Sequence[DwellAverage], axis: str = "azimuth", *,
                         source: str = "air", **kw) -> dict[float, AngularProfile]:
    """One profile per value of the other axis (e.g. a PAP for each tilt)."""
    angle_f, other_f = _axis_fields(axis, source)
    values = sorted({getattr(a, other_f) for a in dwell_avgs
                     if getattr(a, other_f) is not None and getattr(a, angle_f) is not None
                     and a.kind == kw.get("kind", "rss")})
    return {v: power_angle_profile(dwell_avgs, axis, v, source=source, **kw) for v in values}


def _check_single_position(avgs: Sequence[DwellAverage], tol: float) -> None:
    positions = [a.mean_position for a in avgs if a.mean_position is not None]
    if len(positions) == len(avgs) and positions:
        pts = np.array([p.as_array() for p in positions])
        spread = np.linalg.norm(pts - pts.mean(axis=0), axis=1).max()
        if spread > tol:
            raise MixedWaypointsError(f"dwells span {spread:.2f} m; a profile needs one UAV position")
    elif len({a.wp_index for a in avgs}) > 1:
        raise MixedWaypointsError("dwells from several waypoints and no positions to reconcile them")


def _raster(angles: list[float], step: float | None, period: float | None) -> tuple[float | None, list[float]]:
    if len(angles) < 2 and step is None:
        return None, []
    if step is None:
        diffs = np.diff(angles)
        step = float(diffs.min())
    if step <= 0:
        raise RasterError("raster step must be positive")
    base = angles[0]
    for a in angles:
        k = (a - base) / step
        if abs(k - round(k)) > 1e-6:
            raise RasterError(f"angle {a} is not on the {step:g} deg raster starting at {base:g}")
    if period is not None:
        n = round(period / step)
        if abs(n * step - period) > 1e-6:
            raise RasterError(f"step {step:g} does not divide {period:g}")
        expected = [(base + k * step) % period for k in range(n)]
    else:
        n = int(round((angles[-1] - base) / step)) + 1
        expected = [base + k * step for k in range(n)]
    present = set(round(a, 6) for a in angles)
    missing = sorted(e for e in expected if round(e, 6) not in present)
    return step, missing


# -- delay statistics ------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdPolicy:
    noise_margin_db: float = 6.0
    dynamic_cut_db: float = 25.0
    noise_fraction: float = 0.10


class NoSignalError(ValueError):
    pass


@dataclass(frozen=True)
class DelayStats:
    path_gain_db: float
    mean_delay_ns: float
    rms_delay_spread_ns: float
    noise_floor_db: float | None
    threshold_db: float
    n_taps_kept: int
    policy: ThresholdPolicy


def estimate_noise_floor(taps_db: np.ndarray, policy: ThresholdPolicy = ThresholdPolicy()) -> float | None:
    """Median of the leading bins, stopping before the peak bin.

    None when the peak is the first bin and no noise-only lead exists.
    """
    peak_idx = int(np.argmax(taps_db))
    n_lead = min(max(1, math.ceil(policy.noise_fraction * len(taps_db))), peak_idx)
    if n_lead == 0:
        return None
    return float(np.median(taps_db[:n_lead]))


def delay_stats(pdp: PowerDelayProfile, policy: ThresholdPolicy = ThresholdPolicy(),
                cal_db: float = 0.0) -> DelayStats:
    """Threshold a PDP and return its path gain and first/second delay moments.

    ``cal_db`` is added to the received-power sum; the absolute UWB path gain
    is only meaningful relative to that calibration.
    """
    x = np.asarray(pdp.taps_db, dtype=float)
    noise = estimate_noise_floor(x, policy)
    threshold = x.max() - policy.dynamic_cut_db
    if noise is not None:
        threshold = max(threshold, noise + policy.noise_margin_db)
    keep = x >= threshold
    if not keep.any():
        raise NoSignalError("no signal above threshold")
    p = 10.0 ** (x[keep] / 10.0)
    tau = np.flatnonzero(keep) * pdp.bin_ns
    total = p.sum()
    if not total > 0:
        raise NoSignalError("no signal above threshold")
    w = p / total
    mean = float(np.dot(w, tau))
    # central second moment directly; E[tau^2] - mean^2 cancels badly for compact profiles
    var = float(np.dot(w, (tau - mean) ** 2))
    return DelayStats(float(10.0 * math.log10(total)) + cal_db, mean, math.sqrt(var),
                      noise, float(threshold), int(keep.sum()), policy)


@dataclass(frozen=True)
class WaypointDelaySummary:
    wp_index: int
    path_gain_db: float
    rms_delay_spread_ns: float
    n_profiles: int
    n_rejected: int


def waypoint_delay_summary(annotated: Iterable[AnnotatedSample], policy: ThresholdPolicy = ThresholdPolicy(),
                           cal_db: float = 0.0) -> list[WaypointDelaySummary]:
    """Average PDP statistics per waypoint: path gain in the linear domain, RMS spread arithmetically."""
    by_wp: dict[int, list] = {}
    for s in annotated:
        if s.kind == "pdp":
            by_wp.setdefault(s.wp_index, []).append(s.measurement)
    out = []
    for wp in sorted(by_wp):
        stats, rejected = [], 0
        for pdp in by_wp[wp]:
            try:
                stats.append(delay_stats(pdp, policy, cal_db))
            except NoSignalError:
                rejected += 1
        if not stats:
            continue
        out.append(WaypointDelaySummary(wp, mean_dbm([s.path_gain_db for s in stats]),
                                        float(np.mean([s.rms_delay_spread_ns for s in stats])),
                                        len(stats), rejected))
    return out


# -- back-scattering patterns ------------------------------------------------------------

@dataclass(frozen=True)
class ScatterGeometry:
    spot: EnuVector
    arc_radius_m: float
    plane: str  # "horizontal" or "vertical"
    #: azimuth of the outward wall normal, clockwise from North
    normal_az_deg: float
    tolerance_m: float = 0.5

    def __post_init__(self):
        if self.plane not in ("horizontal", "vertical"):
            raise ValueError(f"plane must be 'horizontal' or 'vertical', got {self.plane!r}")
        if not self.arc_radius_m > 0:
            raise ValueError("arc radius must be positive")


@dataclass
class ScatterPattern:
    geometry: ScatterGeometry
    bins: list[tuple[float, float]]
    n_dwells: list[int]

    def peak(self) -> tuple[float, float]:
        return max(self.bins, key=lambda b: b[1])


class OffArcError(ValueError):
    pass


def aspect_angle(uav: EnuVector, geom: ScatterGeometry) -> float:
    """Signed angle between the spot-to-UAV direction and the wall normal, in the scan plane.

    Horizontal scans count clockwise (seen from above) as positive; vertical
    scans count upward as positive.
    """
    v = uav - geom.spot
    n = math.radians(geom.normal_az_deg)
    along = v.east_m * math.sin(n) + v.north_m * math.cos(n)
    across = v.east_m * math.cos(n) - v.north_m * math.sin(n)
    if geom.plane == "horizontal":
        return math.degrees(math.atan2(across, along))
    return math.degrees(math.atan2(v.up_m, along))


def _check_on_arc(uav: EnuVector, geom: ScatterGeometry) -> None:
    v = uav - geom.spot
    r = v.norm()
    if abs(r - geom.arc_radius_m) > geom.tolerance_m:
        raise OffArcError(f"dwell at {r:.2f} m from the spot; arc radius {geom.arc_radius_m:g} m")
    n = math.radians(geom.normal_az_deg)
    if geom.plane == "horizontal":
        off = abs(v.up_m)
    else:
        off = abs(v.east_m * math.cos(n) - v.north_m * math.sin(n))
    if off > geom.tolerance_m:
        raise OffArcError(f"dwell {off:.2f} m outside the {geom.plane} scan plane")


def scatter_pattern(dwell_avgs: Sequence[DwellAverage], geometry: ScatterGeometry,
                    bin_deg: float = 1.0, kind: str = "rss") -> ScatterPattern:
    groups: dict[float, list[DwellAverage]] = {}
    for a in dwell_avgs:
        if a.kind != kind:
            continue
        if a.mean_position is None:
            raise ValueError("scatter patterns need dwell positions")
        _check_on_arc(a.mean_position, geometry)
        b = round(aspect_angle(a.mean_position, geometry) / bin_deg) * bin_deg + 0.0
        groups.setdefault(b, []).append(a)
    if not groups:
        raise ValueError("no dwells on the arc")
    powers = {b: mean_dbm([m.avg_power_dbm for m in ms]) for b, ms in groups.items()}
    peak = max(powers.values())
    keys = sorted(groups)
    return ScatterPattern(geometry, [(b, powers[b] - peak) for b in keys], [len(groups[b]) for b in keys])


# -- outdoor-to-indoor ------------------------------------------------------------------------

class TagMismatchError(ValueError):
    pass


def o2i_penetration_loss(outdoor: DwellAverage | float, indoor: DwellAverage | float,
                         outdoor_tag: str | None = None, indoor_tag: str | None = None) -> float:
    """Outdoor minus indoor average RSS for the same floor/facade."""
    if outdoor_tag != indoor_tag:
        raise TagMismatchError(f"outdoor tag {outdoor_tag!r} does not match indoor tag {indoor_tag!r}")
    o = outdoor if isinstance(outdoor, (int, float)) else outdoor.avg_power_dbm
    i = indoor if isinstance(indoor, (int, float)) else indoor.avg_power_dbm
    loss = o - i
    if loss < 0:
        logger.warning("negative penetration loss %.2f dB: indoor stronger than outdoor, check pairing", loss)
    return loss


# -- CSV outputs ---------------------------------------------------------------------------------

def _csv(header, rows) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return out.getvalue()


def _num(v: float) -> str:
    return repr(float(v))


def format_pap_csv(profiles: dict[float, AngularProfile]) -> str:
    rows = []
    for tilt in sorted(profiles):
        for b in profiles[tilt].bins:
            rows.append([_num(tilt), _num(b.angle_deg), _num(b.power_dbm), b.n_samples])
    return _csv(("tilt_deg", "azimuth_deg", "power_dbm", "n"), rows)


def format_pep_csv(profile: AngularProfile) -> str:
    return _csv(("elevation_deg", "power_dbm", "n"),
                [[_num(b.angle_deg), _num(b.power_dbm), b.n_samples] for b in profile.bins])


def format_delay_csv(rows: Iterable[tuple[int, DelayStats]]) -> str:
    return _csv(("t_utc", "path_gain_db", "mean_delay_ns", "rms_ds_ns"),
                [[format_utc(t), _num(s.path_gain_db), _num(s.mean_delay_ns), _num(s.rms_delay_spread_ns)]
                 for t, s in rows])


def format_scatter_csv(pattern: ScatterPattern) -> str:
    return _csv(("aspect_deg", "rel_db"), [[_num(a), _num(r)] for a, r in pattern.bins])


def format_pathgain_csv(rows: Iterable[tuple[DwellAverage, PathGainEstimate]]) -> str:
    return _csv(("wp_index", "yaw_bin_deg", "tilt_bin_deg", "power_dbm", "path_gain_db", "n"),
                [[a.wp_index, _num(a.yaw_bin_deg), _num(a.tilt_bin_deg), _num(a.avg_power_dbm),
                  _num(pg.path_gain_db), a.n_samples] for a, pg in rows])

