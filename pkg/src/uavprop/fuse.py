"""Join measurements with UAV state: hover segmentation, annotation, averaging.

Processing order for one mission::

    telemetry --discard_manual--> segment_hovers --+
    RSS / PDP samples -----------------------------+--> annotate --> average_dwells
    ground positioner log -------------------------+
"""

from __future__ import annotations

import bisect
import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .geo import EnuVector, angle_diff, to_enu
from .errors import FormatError
from .ingest import (FlightMode, GroundPositionerRecord, PowerDelayProfile, RssSample,
                     TelemetryRecord, format_utc, parse_utc)
from .mission import InfeasiblePointing, MissionPlan, solve_pointing

logger = logging.getLogger(__name__)

Measurement = Union[RssSample, PowerDelayProfile]


@dataclass(frozen=True)
class SegmenterConfig:
    capture_radius_m: float = 1.0
    min_dwell_s: float = 3.0
    guard_s: float = 0.5
    #: consecutive telemetry attitudes further apart than this mark a reorientation
    attitude_tol_deg: float = 1.0
    #: a segment is assigned to a waypoint only if its attitude is this close to
    #: the pointing commanded by the waypoint's active ROI
    pointing_tol_deg: float = 5.0


@dataclass(frozen=True)
class HoverSegment:
    wp_index: int
    active_roi_index: int | None
    t_start: int
    t_end: int
    mean_position: EnuVector
    mean_yaw_deg: float
    mean_tilt_deg: float
    n_records: int = 0
    item_index: int | None = None

    @property
    def duration_s(self) -> float:
        return (self.t_end - self.t_start) / 1000.0

    def contains(self, t_ms: int) -> bool:
        return self.t_start <= t_ms <= self.t_end


def discard_manual(telemetry: Iterable[TelemetryRecord]) -> list[TelemetryRecord]:
    return [r for r in telemetry if r.mode == FlightMode.AUTO]


def _circular_mean(deg: Sequence[float]) -> float:
    a = np.radians(np.asarray(deg, dtype=float))
    m = math.degrees(math.atan2(np.sin(a).mean(), np.cos(a).mean())) % 360.0
    return 0.0 if m >= 360.0 else m


def _jumps(recs: Sequence[TelemetryRecord], tol: float) -> list[bool]:
    out = [False]
    for prev, cur in zip(recs, recs[1:]):
        out.append(abs(angle_diff(cur.yaw_deg, prev.yaw_deg)) > tol
                   or abs(cur.gimbal_tilt_deg - prev.gimbal_tilt_deg) > tol)
    return out


def segment_hovers(telemetry: Sequence[TelemetryRecord], plan: MissionPlan,
                   cfg: SegmenterConfig = SegmenterConfig()) -> list[HoverSegment]:
    """Find steady hovers and assign each to a plan waypoint.

    A steady piece is a run of consecutive AUTO records that stay within the
    capture radius of a waypoint position without an attitude jump.  Its
    start is pushed to ``guard_s`` after the last record of the preceding
    steady state when the piece begins with a reorientation, which removes
    slewing transients.  Pieces are matched to
    waypoints in plan order; a piece whose attitude disagrees with the
    commanded pointing is skipped over.
    """
    recs = sorted(telemetry, key=lambda r: r.t_ms)
    if not recs:
        return []
    governed = plan.governed_waypoints()
    wp_pos = [plan.enu(wp.position) for wp, _, _, _ in governed]
    commanded = []
    for (wp, roi, _, _), pos in zip(governed, wp_pos):
        if roi is None:
            commanded.append(None)
            continue
        try:
            commanded.append(solve_pointing(pos, plan.enu(roi.position), plan.constraints))
        except (InfeasiblePointing, ValueError):
            commanded.append(None)
    stations = np.array([p.as_array() for p in wp_pos]) if wp_pos else np.zeros((0, 3))

    enu = np.array([to_enu(r.position, plan.frame).as_array() for r in recs])
    if len(stations):
        dist = np.linalg.norm(enu[:, None, :] - stations[None, :, :], axis=2)
        captured = dist.min(axis=1) <= cfg.capture_radius_m
    else:
        captured = np.zeros(len(recs), dtype=bool)
    # MANUAL records never join a piece, so they also split AUTO runs
    captured &= np.array([r.mode == FlightMode.AUTO for r in recs])
    jump = _jumps(recs, cfg.attitude_tol_deg)
    times = [r.t_ms for r in recs]

    pieces = []
    start = None
    for i in range(len(recs) + 1):
        brk = i == len(recs) or not captured[i] or jump[i]
        if start is not None and brk:
            pieces.append((start, i - 1))
            start = None
        if i < len(recs) and captured[i] and start is None:
            start = i

    guard = int(round(cfg.guard_s * 1000))
    min_dwell = int(round(cfg.min_dwell_s * 1000))
    segments = []
    next_wp = 0
    for a, b in pieces:
        t0 = times[a]
        if jump[a]:
            # the piece starts on a reorientation: wait guard_s after the last steady record
            k = a
            while k > 0 and jump[k]:
                k -= 1
            t0 = max(t0, times[k] + guard)
        t1 = times[b]
        if t1 - t0 < min_dwell:
            continue
        members = [i for i in range(a, b + 1) if times[i] >= t0]
        mean_pos = enu[members].mean(axis=0)
        yaw = _circular_mean([recs[i].yaw_deg for i in members])
        tilt = float(np.mean([recs[i].gimbal_tilt_deg for i in members]))
        for j in range(next_wp, len(governed)):
            if np.linalg.norm(mean_pos - stations[j]) > cfg.capture_radius_m:
                continue
            cmd = commanded[j]
            if cmd is not None and (abs(angle_diff(yaw, cmd.yaw_deg)) > cfg.pointing_tol_deg
                                    or abs(tilt - cmd.tilt_deg) > cfg.pointing_tol_deg):
                continue
            _, _, item_i, roi_i = governed[j]
            segments.append(HoverSegment(j, roi_i, t0, t1, EnuVector.from_array(mean_pos), yaw, tilt,
                                         len(members), item_i))
            next_wp = j + 1
            break
        else:
            logger.debug("hover %s..%s matches no remaining waypoint", t0, t1)
    return segments


# -- annotation -------------------------------------------------------------------------

@dataclass(frozen=True)
class AnnotateConfig:
    max_time_gap_s: float = 1.0
    az_step_deg: float = 15.0
    tilt_step_deg: float = 15.0


@dataclass(frozen=True)
class AnnotatedSample:
    measurement: Measurement
    segment: HoverSegment
    yaw_bin_deg: float
    tilt_bin_deg: float
    ground_az_deg: float | None = None
    ground_el_deg: float | None = None

    @property
    def kind(self) -> str:
        return "rss" if isinstance(self.measurement, RssSample) else "pdp"

    @property
    def t_ms(self) -> int:
        return self.measurement.t_ms

    @property
    def power_dbm(self) -> float:
        m = self.measurement
        return m.rss_dbm if isinstance(m, RssSample) else m.power_db

    @property
    def below_sensitivity(self) -> bool:
        return isinstance(self.measurement, RssSample) and self.measurement.below_sensitivity

    @property
    def wp_index(self) -> int:
        return self.segment.wp_index

    @property
    def roi_index(self) -> int | None:
        return self.segment.active_roi_index

    @property
    def position(self) -> EnuVector:
        return self.segment.mean_position


@dataclass(frozen=True)
class Orphan:
    measurement: Measurement
    reason: str


@dataclass
class Annotation:
    annotated: list[AnnotatedSample] = field(default_factory=list)
    orphans: list[Orphan] = field(default_factory=list)
    ground_gaps: int = 0


def bin_angle(value: float, step: float, period: float | None = None) -> float:
    b = round(value / step) * step
    if period is not None:
        b %= period
    return b + 0.0


def _nearest(times: list[int], t: int) -> int | None:
    if not times:
        return None
    j = bisect.bisect_left(times, t)
    cands = [k for k in (j - 1, j) if 0 <= k < len(times)]
    return min(cands, key=lambda k: (abs(times[k] - t), k))


def annotate(measurements: Iterable[Measurement], segments: Sequence[HoverSegment],
             ground_log: Sequence[GroundPositionerRecord] = (), cfg: AnnotateConfig = AnnotateConfig(),
             telemetry: Sequence[TelemetryRecord] = ()) -> Annotation:
    """Attach each measurement to the hover segment containing its timestamp.

    Measurements outside every segment become orphans.  The reason is
    ``"manual phase"`` when the closest telemetry record (within the time
    gap) was flown manually, else ``"no segment"``.
    """
    segs = sorted(segments, key=lambda s: s.t_start)
    starts = [s.t_start for s in segs]
    g_times = [g.t_ms for g in ground_log]
    tel_times = [r.t_ms for r in telemetry]
    gap_ms = cfg.max_time_gap_s * 1000.0
    out = Annotation()
    for m in measurements:
        j = bisect.bisect_right(starts, m.t_ms) - 1
        seg = segs[j] if j >= 0 and segs[j].contains(m.t_ms) else None
        if seg is None:
            reason = "no segment"
            k = _nearest(tel_times, m.t_ms)
            if k is not None and abs(tel_times[k] - m.t_ms) <= gap_ms and telemetry[k].mode == FlightMode.MANUAL:
                reason = "manual phase"
            out.orphans.append(Orphan(m, reason))
            continue
        g_az = g_el = None
        k = _nearest(g_times, m.t_ms)
        if k is not None:
            if abs(g_times[k] - m.t_ms) <= gap_ms:
                g_az, g_el = ground_log[k].az_deg, ground_log[k].el_deg
            else:
                out.ground_gaps += 1
        out.annotated.append(AnnotatedSample(
            m, seg, bin_angle(seg.mean_yaw_deg, cfg.az_step_deg, 360.0),
            bin_angle(seg.mean_tilt_deg, cfg.tilt_step_deg), g_az, g_el))
    if out.ground_gaps:
        logger.warning("%d annotated samples are more than %.1f s from any ground-log record; "
                       "ground fields left empty", out.ground_gaps, cfg.max_time_gap_s)
    return out


# -- averaging -----------------------------------------------------------------------------

@dataclass(frozen=True)
class AverageConfig:
    ground_az_step_deg: float = 15.0
    ground_el_step_deg: float = 5.0
    include_below_sensitivity: bool = False


@dataclass(frozen=True)
class DwellAverage:
    key: tuple
    kind: str
    avg_power_dbm: float
    n_samples: int
    spread_db: float
    n_below_sensitivity: int = 0
    mean_position: EnuVector | None = None

    @property
    def wp_index(self) -> int:
        return self.key[0]

    @property
    def yaw_bin_deg(self) -> float:
        return self.key[1]

    @property
    def tilt_bin_deg(self) -> float:
        return self.key[2]

    @property
    def ground_az_bin_deg(self) -> float | None:
        return self.key[3]

    @property
    def ground_el_bin_deg(self) -> float | None:
        return self.key[4]


def mean_dbm(values_dbm: Sequence[float]) -> float:
    """Average powers in the linear (mW) domain and convert back to dBm."""
    if len(values_dbm) and all(v == values_dbm[0] for v in values_dbm):
        return float(values_dbm[0])
    lin = 10.0 ** (np.asarray(values_dbm, dtype=float) / 10.0)
    return float(10.0 * np.log10(lin.mean()))


def dwell_key(s: "AnnotatedSample | FusedRow", cfg: AverageConfig = AverageConfig()) -> tuple:
    g_az = None if s.ground_az_deg is None else bin_angle(s.ground_az_deg, cfg.ground_az_step_deg, 360.0)
    g_el = None if s.ground_el_deg is None else bin_angle(s.ground_el_deg, cfg.ground_el_step_deg)
    return (s.wp_index, s.yaw_bin_deg, s.tilt_bin_deg, g_az, g_el)


def average_dwells(annotated: Iterable[AnnotatedSample], cfg: AverageConfig = AverageConfig()) -> list[DwellAverage]:
    """Per-(waypoint, pointing, ground-pointing) averages, separately for RSS and PDP power."""
    groups: dict[tuple, list[AnnotatedSample]] = {}
    for s in annotated:
        groups.setdefault((s.kind,) + dwell_key(s, cfg), []).append(s)
    out = []
    for gk in sorted(groups, key=_sort_key):
        members = groups[gk]
        below = sum(1 for s in members if s.below_sensitivity)
        used = members if cfg.include_below_sensitivity else [s for s in members if not s.below_sensitivity]
        if not used:
            continue
        db = np.array([s.power_dbm for s in used])
        spread = float(np.std(db, ddof=1)) if len(db) > 1 else 0.0
        pos = np.mean([s.position.as_array() for s in used], axis=0)
        out.append(DwellAverage(gk[1:], gk[0], mean_dbm(db), len(used), spread, below,
                                EnuVector.from_array(pos)))
    return out


def _sort_key(k: tuple):
    return tuple((v is None, v if v is not None else 0) for v in k[1:]) + (k[0],)


# -- fused outputs ------------------------------------------------------------------------

@dataclass(frozen=True)
class FusedRow:
    """One annotated sample as read back from the annotated CSV."""

    t_ms: int
    kind: str
    wp_index: int
    roi_index: int | None
    yaw_bin_deg: float
    tilt_bin_deg: float
    ground_az_deg: float | None
    ground_el_deg: float | None
    power_dbm: float
    below_sensitivity: bool
    position: EnuVector
    n_taps: int | None = None


ANNOTATED_HEADER = ("t_utc", "kind", "wp_index", "roi_index", "yaw_bin_deg", "tilt_bin_deg",
                    "ground_az_deg", "ground_el_deg", "power_dbm", "below_sensitivity",
                    "east_m", "north_m", "up_m", "n_taps")
ORPHAN_HEADER = ("t_utc", "kind", "power_dbm", "reason")
DWELL_HEADER = ("kind", "wp_index", "yaw_bin_deg", "tilt_bin_deg", "ground_az_bin_deg", "ground_el_bin_deg",
                "avg_power_dbm", "n_samples", "spread_db", "n_below_sensitivity", "east_m", "north_m", "up_m")


def _opt(v) -> str:
    return "" if v is None else repr(float(v))


def _write(header, rows) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return out.getvalue()


def format_annotated(samples: Iterable[AnnotatedSample | FusedRow]) -> str:
    rows = []
    for s in samples:
        m = getattr(s, "measurement", None)
        n_taps = m.n_taps if isinstance(m, PowerDelayProfile) else getattr(s, "n_taps", None)
        p = s.position
        rows.append([format_utc(s.t_ms), s.kind, s.wp_index, "" if s.roi_index is None else s.roi_index,
                     repr(float(s.yaw_bin_deg)), repr(float(s.tilt_bin_deg)), _opt(s.ground_az_deg),
                     _opt(s.ground_el_deg), repr(float(s.power_dbm)), int(s.below_sensitivity),
                     repr(p.east_m), repr(p.north_m), repr(p.up_m), "" if n_taps is None else n_taps])
    return _write(ANNOTATED_HEADER, rows)


def parse_annotated(text: str, source: str | None = None) -> list[FusedRow]:
    out = []
    reader = csv.reader(io.StringIO(text))
    try:
        for row in reader:
            line = reader.line_num
            if line == 1:
                if tuple(row) != ANNOTATED_HEADER:
                    raise FormatError(f"expected header {','.join(ANNOTATED_HEADER)}", source=source, line=1)
                continue
            if not row:
                continue
            if len(row) != len(ANNOTATED_HEADER):
                raise FormatError(f"expected {len(ANNOTATED_HEADER)} fields, got {len(row)}",
                                  source=source, line=line)
            f = dict(zip(ANNOTATED_HEADER, row))
            try:
                kind = f["kind"]
                if kind not in ("rss", "pdp"):
                    raise ValueError(f"unknown kind {kind!r}")
                num = {k: float(f[k]) for k in ("yaw_bin_deg", "tilt_bin_deg", "power_dbm", "east_m", "north_m", "up_m")}
                opt = {k: (float(f[k]) if f[k] else None) for k in ("ground_az_deg", "ground_el_deg")}
                out.append(FusedRow(
                    parse_utc(f["t_utc"]), kind, int(f["wp_index"]),
                    int(f["roi_index"]) if f["roi_index"] else None,
                    num["yaw_bin_deg"], num["tilt_bin_deg"], opt["ground_az_deg"], opt["ground_el_deg"],
                    num["power_dbm"], f["below_sensitivity"] == "1",
                    EnuVector(num["east_m"], num["north_m"], num["up_m"]),
                    int(f["n_taps"]) if f["n_taps"] else None))
            except (ValueError, OverflowError) as exc:
                raise FormatError(str(exc), source=source, line=line) from None
    except csv.Error as exc:
        raise FormatError(f"CSV error: {exc}", source=source) from None
    return out


def format_orphans(orphans: Iterable[Orphan]) -> str:
    rows = []
    for o in orphans:
        m = o.measurement
        kind = "rss" if isinstance(m, RssSample) else "pdp"
        power = m.rss_dbm if isinstance(m, RssSample) else m.power_db
        rows.append([format_utc(m.t_ms), kind, repr(float(power)), o.reason])
    return _write(ORPHAN_HEADER, rows)


def format_dwells(dwells: Iterable[DwellAverage]) -> str:
    rows = []
    for d in dwells:
        p = d.mean_position
        rows.append([d.kind, d.wp_index, repr(float(d.yaw_bin_deg)), repr(float(d.tilt_bin_deg)),
                     _opt(d.ground_az_bin_deg), _opt(d.ground_el_bin_deg), repr(d.avg_power_dbm), d.n_samples,
                     repr(d.spread_db), d.n_below_sensitivity,
                     _opt(p and p.east_m), _opt(p and p.north_m), _opt(p and p.up_m)])
    return _write(DWELL_HEADER, rows)
