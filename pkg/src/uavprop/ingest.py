"""Readers and writers for the four timestamped input streams.

============  ======================  =====================================
stream        encoding                fields
============  ======================  =====================================
telemetry     one JSON object / line  t_utc lat_deg lon_deg agl_m yaw_deg
                                      gimbal_tilt_deg mode
RSS           CSV with header         t_utc,freq_ghz,rss_dbm
PDP           one JSON object / line  t_utc bin_ns taps_db
ground log    CSV with header         t_utc,az_deg,el_deg
============  ======================  =====================================

Timestamps are ISO 8601 UTC strings with millisecond resolution
(``2020-06-10T08:00:00.250Z``) and are held internally as integer
milliseconds since the Unix epoch.  Field data from the spectrum analyser
or the UWB radio must be converted to these layouts before ingestion.
"""

from __future__ import annotations

import calendar
import csv
import io
import json
import logging
import math
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from typing import Iterable

import numpy as np

from .errors import FormatError
from .geo import GeoError, GeoPoint

logger = logging.getLogger(__name__)

SENSITIVITY_DBM = -100.0
RSS_FREQ_RANGE_GHZ = (26.0, 40.0)
TIME_JITTER_MS = 1
MAX_PDP_TAPS = 100_000

_ISO_RE = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})(?:\.(\d{1,9}))?(Z|[+-]00:?00)$"
)


def parse_utc(text: str) -> int:
    """ISO 8601 UTC timestamp -> integer milliseconds since the epoch."""
    m = _ISO_RE.match(text.strip()) if isinstance(text, str) else None
    if not m:
        raise ValueError(f"not an ISO 8601 UTC timestamp: {text!r}")
    y, mo, d, hh, mm, ss = (int(g) for g in m.groups()[:6])
    datetime(y, mo, d, hh, mm, ss)  # rejects impossible dates
    frac = (m.group(7) or "0").ljust(3, "0")
    return calendar.timegm((y, mo, d, hh, mm, ss, 0, 0, 0)) * 1000 + int(frac[:3])


def format_utc(t_ms: int) -> str:
    secs, ms = divmod(int(t_ms), 1000)
    return datetime.fromtimestamp(secs, timezone.utc).strftime("%Y-%m-%dT%H:%M:%S") + f".{ms:03d}Z"


class FlightMode(str, Enum):
    AUTO = "AUTO"
    MANUAL = "MANUAL"


@dataclass(frozen=True)
class TelemetryRecord:
    t_ms: int
    position: GeoPoint
    yaw_deg: float
    gimbal_tilt_deg: float
    mode: FlightMode = FlightMode.AUTO


@dataclass(frozen=True)
class RssSample:
    t_ms: int
    freq_ghz: float
    rss_dbm: float
    below_sensitivity: bool = False

    @property
    def power_dbm(self) -> float:
        return self.rss_dbm


@dataclass(frozen=True)
class PowerDelayProfile:
    t_ms: int
    bin_ns: float
    taps_db: tuple

    @property
    def n_taps(self) -> int:
        return len(self.taps_db)

    @property
    def window_ns(self) -> float:
        return self.bin_ns * len(self.taps_db)

    def taps_linear(self) -> np.ndarray:
        return 10.0 ** (np.asarray(self.taps_db, dtype=float) / 10.0)

    def delays_ns(self) -> np.ndarray:
        return np.arange(len(self.taps_db)) * self.bin_ns

    @property
    def power_db(self) -> float:
        """Total received power over the window (same reference as the taps)."""
        return float(10.0 * np.log10(self.taps_linear().sum()))


@dataclass(frozen=True)
class GroundPositionerRecord:
    t_ms: int
    az_deg: float
    el_deg: float


# -- field helpers --------------------------------------------------------------

def _lines(stream) -> Iterable[str]:
    if isinstance(stream, str):
        return io.StringIO(stream)
    return stream


def _to_float(value, name: str, source, line, text: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float, str) if text else (int, float)):
        raise FormatError(f"{name} must be a number", source=source, line=line, field=name)
    try:
        v = float(value)
    except (ValueError, OverflowError):
        raise FormatError(f"malformed number {value!r}", source=source, line=line, field=name) from None
    if not math.isfinite(v):
        raise FormatError(f"{name} must be finite", source=source, line=line, field=name)
    return v


def _to_time(value, source, line) -> int:
    if not isinstance(value, str):
        raise FormatError("t_utc must be a string", source=source, line=line, field="t_utc")
    try:
        return parse_utc(value)
    except (ValueError, OverflowError) as exc:
        raise FormatError(str(exc), source=source, line=line, field="t_utc") from None


def _azimuth(value: float, name: str, source, line) -> float:
    if value == 360.0:
        logger.warning("%s line %s: %s 360 normalized to 0", source or "<stream>", line, name)
        return 0.0
    if not 0.0 <= value < 360.0:
        raise FormatError(f"{name} {value} outside [0, 360)", source=source, line=line, field=name)
    return value


def _json_objects(stream, fields: tuple, source):
    for lineno, raw in enumerate(_lines(stream), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except (ValueError, RecursionError) as exc:
            raise FormatError(f"malformed line: {exc}", source=source, line=lineno) from None
        if not isinstance(obj, dict):
            raise FormatError("expected a JSON object", source=source, line=lineno)
        unknown = sorted(set(obj) - set(fields))
        if unknown:
            raise FormatError(f"unknown field(s) {', '.join(unknown)}", source=source, line=lineno)
        for f in fields:
            if f not in obj:
                raise FormatError(f"missing field '{f}'", source=source, line=lineno, field=f)
        yield lineno, obj


def _csv_rows(stream, header: tuple, source):
    try:
        reader = csv.reader(_lines(stream))
        first = True
        for row in reader:
            lineno = reader.line_num
            if first:
                first = False
                if tuple(c.strip() for c in row) != header:
                    raise FormatError(f"expected header {','.join(header)}", source=source, line=lineno)
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise FormatError(f"expected {len(header)} fields, got {len(row)}", source=source, line=lineno)
            yield lineno, row
    except csv.Error as exc:
        raise FormatError(f"CSV error: {exc}", source=source) from None


def _ordered(records: list, lines: list, source):
    """Check time order within the jitter tolerance; return records sorted by time."""
    latest = None
    for rec, lineno in zip(records, lines):
        if latest is not None and rec.t_ms < latest - TIME_JITTER_MS:
            raise FormatError(
                f"timestamp {format_utc(rec.t_ms)} earlier than preceding {format_utc(latest)}",
                source=source, line=lineno, field="t_utc")
        latest = rec.t_ms if latest is None else max(latest, rec.t_ms)
    return sorted(records, key=lambda r: r.t_ms)


# -- telemetry --------------------------------------------------------------------

TELEMETRY_FIELDS = ("t_utc", "lat_deg", "lon_deg", "agl_m", "yaw_deg", "gimbal_tilt_deg", "mode")


def parse_telemetry(stream, *, source: str | None = None) -> list[TelemetryRecord]:
    records, lines = [], []
    for lineno, obj in _json_objects(stream, TELEMETRY_FIELDS, source):
        t = _to_time(obj["t_utc"], source, lineno)
        lat, lon, agl, yaw, tilt = (_to_float(obj[k], k, source, lineno) for k in TELEMETRY_FIELDS[1:6])
        yaw = _azimuth(yaw, "yaw_deg", source, lineno)
        if not 0.0 <= tilt <= 90.0:
            raise FormatError(f"gimbal_tilt_deg {tilt} outside [0, 90]", source=source, line=lineno,
                              field="gimbal_tilt_deg")
        try:
            mode = FlightMode(obj["mode"])
        except ValueError:
            raise FormatError(f"unknown mode {obj['mode']!r}", source=source, line=lineno, field="mode") from None
        try:
            pos = GeoPoint(lat, lon, agl)
        except GeoError as exc:
            raise FormatError(str(exc), source=source, line=lineno) from None
        records.append(TelemetryRecord(t, pos, yaw, tilt, mode))
        lines.append(lineno)
    return _ordered(records, lines, source)


def format_telemetry(records: Iterable[TelemetryRecord]) -> str:
    out = []
    for r in records:
        out.append(json.dumps({
            "t_utc": format_utc(r.t_ms), "lat_deg": r.position.lat_deg, "lon_deg": r.position.lon_deg,
            "agl_m": r.position.alt_m, "yaw_deg": r.yaw_deg, "gimbal_tilt_deg": r.gimbal_tilt_deg,
            "mode": FlightMode(r.mode).value,
        }))
    return "".join(line + "\n" for line in out)


# -- RSS ----------------------------------------------------------------------------

RSS_HEADER = ("t_utc", "freq_ghz", "rss_dbm")


def parse_rss(stream, sensitivity_dbm: float = SENSITIVITY_DBM, *, source: str | None = None) -> list[RssSample]:
    """Spectrum-analyser samples; each is flagged when strictly below ``sensitivity_dbm``."""
    records, lines = [], []
    lo, hi = RSS_FREQ_RANGE_GHZ
    for lineno, row in _csv_rows(stream, RSS_HEADER, source):
        t = _to_time(row[0].strip(), source, lineno)
        f = _to_float(row[1].strip(), "freq_ghz", source, lineno, True)
        p = _to_float(row[2].strip(), "rss_dbm", source, lineno, True)
        if not lo <= f <= hi:
            raise FormatError(f"frequency {f} GHz outside [{lo:g}, {hi:g}]", source=source, line=lineno,
                              field="freq_ghz")
        records.append(RssSample(t, f, p, p < sensitivity_dbm))
        lines.append(lineno)
    return _ordered(records, lines, source)


def format_rss(samples: Iterable[RssSample]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(RSS_HEADER)
    for s in samples:
        w.writerow([format_utc(s.t_ms), repr(float(s.freq_ghz)), repr(float(s.rss_dbm))])
    return out.getvalue()


# -- PDP ----------------------------------------------------------------------------

PDP_FIELDS = ("t_utc", "bin_ns", "taps_db")


def parse_pdp(stream, *, source: str | None = None, max_taps: int = MAX_PDP_TAPS) -> list[PowerDelayProfile]:
    records, lines = [], []
    n_taps = None
    for lineno, obj in _json_objects(stream, PDP_FIELDS, source):
        t = _to_time(obj["t_utc"], source, lineno)
        bin_ns = _to_float(obj["bin_ns"], "bin_ns", source, lineno)
        if bin_ns <= 0:
            raise FormatError(f"bin_ns must be > 0, got {bin_ns}", source=source, line=lineno, field="bin_ns")
        taps = obj["taps_db"]
        if not isinstance(taps, list) or not taps:
            raise FormatError("taps_db must be a non-empty list", source=source, line=lineno, field="taps_db")
        if len(taps) > max_taps:
            raise FormatError(f"{len(taps)} taps exceed the limit of {max_taps}", source=source, line=lineno,
                              field="taps_db")
        taps = tuple(_to_float(v, "taps_db", source, lineno) for v in taps)
        if n_taps is not None and len(taps) != n_taps:
            logger.warning("%s line %d: tap count changed from %d to %d", source or "<stream>", lineno,
                           n_taps, len(taps))
        n_taps = len(taps)
        records.append(PowerDelayProfile(t, bin_ns, taps))
        lines.append(lineno)
    return _ordered(records, lines, source)


def format_pdp(profiles: Iterable[PowerDelayProfile]) -> str:
    return "".join(
        json.dumps({"t_utc": format_utc(p.t_ms), "bin_ns": float(p.bin_ns),
                    "taps_db": [float(v) for v in p.taps_db]}) + "\n"
        for p in profiles)


# -- ground positioner log ------------------------------------------------------------

GROUND_HEADER = ("t_utc", "az_deg", "el_deg")


def parse_ground_log(stream, *, source: str | None = None) -> list[GroundPositionerRecord]:
    records, lines = [], []
    for lineno, row in _csv_rows(stream, GROUND_HEADER, source):
        t = _to_time(row[0].strip(), source, lineno)
        az = _azimuth(_to_float(row[1].strip(), "az_deg", source, lineno, True), "az_deg", source, lineno)
        el = _to_float(row[2].strip(), "el_deg", source, lineno, True)
        if not -90.0 <= el <= 90.0:
            raise FormatError(f"el_deg {el} outside [-90, 90]", source=source, line=lineno, field="el_deg")
        records.append(GroundPositionerRecord(t, az, el))
        lines.append(lineno)
    return _ordered(records, lines, source)


def format_ground_log(records: Iterable[GroundPositionerRecord]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(GROUND_HEADER)
    for r in records:
        w.writerow([format_utc(r.t_ms), repr(float(r.az_deg)), repr(float(r.el_deg))])
    return out.getvalue()


# -- file helpers -----------------------------------------------------------------------

def read_text(path) -> str:
    with open(path, "rb") as f:
        data = f.read()
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"not valid UTF-8 ({exc.reason} at byte {exc.start})", source=str(path)) from None


def read_telemetry(path) -> list[TelemetryRecord]:
    return parse_telemetry(read_text(path), source=str(path))


def read_rss(path, sensitivity_dbm: float = SENSITIVITY_DBM) -> list[RssSample]:
    return parse_rss(read_text(path), sensitivity_dbm, source=str(path))


def read_pdp(path) -> list[PowerDelayProfile]:
    return parse_pdp(read_text(path), source=str(path))


def read_ground_log(path) -> list[GroundPositionerRecord]:
    return parse_ground_log(read_text(path), source=str(path))


def write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
