"""Command-line front end: plan, validate, simulate, fuse, analyze, formats.

Exit codes: 0 success, 1 validation violation, 2 input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

from . import analysis, fuse, ingest
from .errors import FormatError
from .geo import EnuVector, GeoError, GeoPoint, LocalFrame, from_enu
from .mission import (InfeasiblePointing, MissionPlan, RegionOfInterest, ScanSpec, Waypoint, expand_schedule,
                      read_plan, serialize_plan, validate)
from .sim import RECORDING_MODES, simulate_campaign
from .sim import scenarios
from .sim.antenna import AntennaPattern
from .sim.channel import MmwaveConfig, NoiseParams, UwbConfig
from .sim.scene import read_scene, serialize_scene

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT = 0, 1, 2
OUTPUT_DIR_ENV = "UAVPROP_OUTPUT_DIR"

log = logging.getLogger("uavprop")


class UsageError(Exception):
    """Bad combination of inputs; reported with exit code 2."""


def _triple(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if len(vals) not in (3, 4) or not all(math.isfinite(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected E,N,U[,HOLD], got {text!r}")
    return vals


def _pair(text: str) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LAT,LON, got {text!r}") from None
    return a, b


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


class _ItemAction(argparse.Action):
    """Collect --wp / --roi in command-line order."""

    def __call__(self, parser, namespace, values, option_string=None):
        items = list(getattr(namespace, "items", None) or [])
        items.append((self.dest_kind, values))
        namespace.items = items


def _item_action(kind):
    return type(f"_{kind}Action", (_ItemAction,), {"dest_kind": kind})


SCENARIOS = ("free-space", "raster", "air-to-street-50", "air-to-street-19", "canyon", "scatter")


def _scenario(name: str):
    if name == "free-space":
        return scenarios.free_space_link()
    if name == "raster":
        return scenarios.raster_scan(EnuVector(-80.0, 55.0, 35.0))
    if name.startswith("air-to-street-"):
        return scenarios.air_to_street(float(name.rsplit("-", 1)[1]))
    if name == "canyon":
        return scenarios.street_canyon()
    return scenarios.scattering_wall()


def _out_dir(args) -> Path:
    d = Path(args.out or os.environ.get(OUTPUT_DIR_ENV) or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write(path: Path, text: str) -> None:
    ingest.write_text(path, text)
    log.info("wrote %s", path)


# -- plan / validate -------------------------------------------------------------------

def cmd_plan(args) -> int:
    scene = None
    if args.scenario:
        campaign = _scenario(args.scenario)
        plan, scene = campaign.plan, campaign.scene
    else:
        if not args.items:
            raise UsageError("give --scenario or at least one --wp")
        frame = LocalFrame(GeoPoint(*args.origin))
        items = []
        for kind, vals in args.items:
            p = from_enu(EnuVector(*vals[:3]), frame)
            if kind == "roi":
                if len(vals) == 4:
                    raise UsageError("--roi takes E,N,U")
                items.append(RegionOfInterest(p))
            else:
                items.append(Waypoint(p, vals[3] if len(vals) == 4 else args.hold))
        plan = MissionPlan(args.name, frame, tuple(items))
    if args.raster:
        scan = ScanSpec(args.az_step, tuple(args.tilts), args.dwell)
        plan = expand_schedule(plan, scan)
    report = validate(plan)
    n_wp = len(plan.waypoints())
    print(f"plan '{plan.name}': {len(plan.items)} items, {n_wp} waypoints")
    if report.violations:
        print(report.format())
    if not report.ok:
        return EXIT_VIOLATION
    if args.dry_run:
        print("dry run: nothing written")
        return EXIT_OK
    out = _out_dir(args)
    _write(out / args.output, serialize_plan(plan))
    if scene is not None:
        _write(out / "scene.json", serialize_scene(scene))
    return EXIT_OK


def cmd_validate(args) -> int:
    plan = read_plan(args.plan)
    report = validate(plan)
    print(report.format() if report.violations else "ok")
    return EXIT_OK if report.ok else EXIT_VIOLATION


# -- simulate ----------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    plan = read_plan(args.plan)
    scene = read_scene(args.scene)
    report = validate(plan)
    if not report.ok:
        print(report.format())
        return EXIT_VIOLATION
    seed = args.seed if args.seed is not None else (scene.seed if scene.seed is not None else 0)
    uwb = None if args.no_uwb else UwbConfig(n_bins=args.uwb_bins)
    air = AntennaPattern.omni() if args.air_antenna == "omni" else AntennaPattern.horn()
    data = simulate_campaign(plan, scene, seed, uwb=uwb, noise=NoiseParams(sigma_db=args.sigma_db),
                             mmwave=MmwaveConfig(air_antenna=air), recording=args.recording)
    out = _out_dir(args)
    _write(out / "telemetry.jsonl", ingest.format_telemetry(data.telemetry))
    _write(out / "rss.csv", ingest.format_rss(data.rss))
    if uwb is not None:
        _write(out / "pdp.jsonl", ingest.format_pdp(data.pdp))
    if data.ground_log:
        _write(out / "ground.csv", ingest.format_ground_log(data.ground_log))
    run = {"seed": seed, "recording": args.recording, "air_antenna": args.air_antenna, "sigma_db": args.sigma_db,
           "n_telemetry": len(data.telemetry), "n_rss": len(data.rss), "n_pdp": len(data.pdp),
           "n_ground": len(data.ground_log)}
    _write(out / "run.json", json.dumps(run, indent=2) + "\n")
    print(f"seed {seed}: {len(data.telemetry)} telemetry, {len(data.rss)} RSS, "
          f"{len(data.pdp)} PDP, {len(data.ground_log)} ground records")
    return EXIT_OK


# -- fuse ---------------------------------------------------------------------------------

def cmd_fuse(args) -> int:
    plan = read_plan(args.plan)
    if not (args.rss or args.pdp):
        raise UsageError("nothing to fuse: give --rss and/or --pdp")
    telemetry = ingest.read_telemetry(args.telemetry) if args.telemetry else []
    measurements = []
    if args.rss:
        measurements += ingest.read_rss(args.rss, args.sensitivity_dbm)
    if args.pdp:
        measurements += ingest.read_pdp(args.pdp)
    measurements.sort(key=lambda m: m.t_ms)
    ground = ingest.read_ground_log(args.ground_log) if args.ground_log else []
    seg_cfg = fuse.SegmenterConfig(args.capture_radius, args.min_dwell, args.guard)
    segments = fuse.segment_hovers(telemetry, plan, seg_cfg) if telemetry else []
    result = fuse.annotate(measurements, segments, ground, telemetry=telemetry)
    dwells = fuse.average_dwells(result.annotated)
    out = _out_dir(args)
    _write(out / "annotated.csv", fuse.format_annotated(result.annotated))
    _write(out / "orphans.csv", fuse.format_orphans(result.orphans))
    _write(out / "dwells.csv", fuse.format_dwells(dwells))
    below = sum(1 for s in result.annotated if s.below_sensitivity)
    reasons = {}
    for o in result.orphans:
        reasons[o.reason] = reasons.get(o.reason, 0) + 1
    print(f"segments found: {len(segments)}")
    print(f"samples annotated: {len(result.annotated)}")
    print(f"samples orphaned: {len(result.orphans)}"
          + "".join(f" ({n} {r})" for r, n in sorted(reasons.items())))
    print(f"below sensitivity: {below}")
    return EXIT_OK


# -- analyze ------------------------------------------------------------------------------

def _annotated(path) -> list[fuse.FusedRow]:
    return fuse.parse_annotated(ingest.read_text(path), source=str(path))


def _link_budget(args) -> analysis.LinkBudget:
    return analysis.LinkBudget(args.tx_power_dbm, args.amp_gain_db, args.tx_ant_gain_db,
                               args.rx_ant_gain_db, args.misc_loss_db)


def _dwells(args):
    rows = _annotated(args.annotated)
    if args.wp is not None:
        rows = [r for r in rows if r.wp_index in set(args.wp)]
    return fuse.average_dwells(rows)


def analyze_pap(args) -> str:
    profiles = analysis.power_angle_profiles(_dwells(args), "azimuth", source="air", step_deg=args.step)
    return analysis.format_pap_csv(profiles)


def analyze_pep(args) -> str:
    dwells = _dwells(args)
    if not any(d.ground_el_bin_deg is not None for d in dwells):
        raise UsageError("pep needs ground positioner data: fuse with --ground-log first")
    profile = analysis.power_angle_profile(dwells, "elevation", args.ground_az, source="ground", step_deg=args.step)
    return analysis.format_pep_csv(profile)


def analyze_pathgain(args) -> str:
    lb = _link_budget(args)
    dwells = [d for d in _dwells(args) if d.kind == "rss"]
    return analysis.format_pathgain_csv((d, analysis.measured_path_gain(d, lb)) for d in dwells)


def analyze_delayspread(args) -> str:
    profiles = ingest.read_pdp(args.pdp)
    if args.annotated:
        keep = {r.t_ms for r in _annotated(args.annotated) if r.kind == "pdp"}
        profiles = [p for p in profiles if p.t_ms in keep]
    policy = analysis.ThresholdPolicy(args.noise_margin_db, args.dynamic_cut_db)
    rows, rejected = [], 0
    for p in profiles:
        try:
            rows.append((p.t_ms, analysis.delay_stats(p, policy, args.cal_db)))
        except analysis.NoSignalError:
            rejected += 1
    if rejected:
        print(f"{rejected} profiles with no signal above threshold skipped", file=sys.stderr)
    return analysis.format_delay_csv(rows)


def analyze_scatter(args) -> str:
    geom = analysis.ScatterGeometry(EnuVector(*args.spot), args.radius, args.plane, args.normal_az, args.tolerance)
    return analysis.format_scatter_csv(analysis.scatter_pattern(_dwells(args), geom, args.bin))


def analyze_o2i(args) -> str:
    def mean_rss(path):
        rows = [r for r in _annotated(path) if r.kind == "rss" and not r.below_sensitivity]
        if not rows:
            raise UsageError(f"{path}: no usable RSS samples")
        return fuse.mean_dbm([r.power_dbm for r in rows])

    outdoor, indoor = mean_rss(args.outdoor), mean_rss(args.indoor)
    loss = analysis.o2i_penetration_loss(outdoor, indoor, args.outdoor_tag, args.indoor_tag)
    return f"tag,outdoor_dbm,indoor_dbm,loss_db\n{args.outdoor_tag},{outdoor!r},{indoor!r},{loss!r}\n"


ANALYSES = {"pap": analyze_pap, "pep": analyze_pep, "pathgain": analyze_pathgain,
            "delayspread": analyze_delayspread, "scatter": analyze_scatter, "o2i": analyze_o2i}


def cmd_analyze(args) -> int:
    text = ANALYSES[args.kind](args)
    if args.output == "-":
        sys.stdout.write(text)
    else:
        out = _out_dir(args)
        _write(out / (args.output or f"{args.kind}.csv"), text)
    return EXIT_OK


FORMATS = """\
Timestamps: ISO 8601 UTC, e.g. 2024-05-03T10:15:02.250Z (stored to the millisecond).

telemetry.jsonl  one JSON object per line:
  {"t_utc", "lat_deg", "lon_deg", "agl_m", "yaw_deg" [0,360), "gimbal_tilt_deg" (down positive),
   "mode": "AUTO" | "MANUAL"}
rss.csv          header t_utc,freq_ghz,rss_dbm; freq in [26, 40] GHz; readings below the
                 sensitivity (-100 dBm) are flagged and left out of averages
pdp.jsonl        one JSON object per line: {"t_utc", "bin_ns", "taps_db": [..]}; tap k is at k*bin_ns
ground.csv       header t_utc,az_deg,el_deg (ground positioner readback)
plan.json        {"name", "origin": {"lat_deg", "lon_deg"}, "constraints": {...},
                  "items": [{"type": "waypoint", "lat_deg", "lon_deg", "agl_m", "hold_s"} |
                            {"type": "roi", "lat_deg", "lon_deg", "agl_m"}]}
                 each waypoint is governed by the most recent preceding ROI
scene.json       {"buildings": [{"x_min", "y_min", "x_max", "y_max", "height_m", "reflection_coeff_db"}],
                  "ground_station": {"e", "n", "u", "antenna": "horn"|"omni",
                                     "positioner": [{"t_rel_s", "az_deg", "el_deg"}]}, "seed"}

Outputs:
annotated.csv    t_utc,kind,wp_index,roi_index,yaw_bin_deg,tilt_bin_deg,ground_az_deg,ground_el_deg,
                 power_dbm,below_sensitivity,east_m,north_m,up_m,n_taps
orphans.csv      t_utc,kind,power_dbm,reason
dwells.csv       kind,wp_index,yaw_bin_deg,tilt_bin_deg,ground_az_bin_deg,ground_el_bin_deg,
                 avg_power_dbm,n_samples,spread_db,n_below_sensitivity,east_m,north_m,up_m
pap.csv          tilt_deg,azimuth_deg,power_dbm,n
pep.csv          elevation_deg,power_dbm,n
pathgain.csv     wp_index,yaw_bin_deg,tilt_bin_deg,power_dbm,path_gain_db,n
delayspread.csv  t_utc,path_gain_db,mean_delay_ns,rms_ds_ns
scatter.csv      aspect_deg,rel_db
"""


def cmd_formats(args) -> int:
    sys.stdout.write(FORMATS)
    return EXIT_OK


# -- parser -------------------------------------------------------------------------------

def build_parser() -> tuple[argparse.ArgumentParser, list[argparse.ArgumentParser]]:
    # Global flags are accepted before or after the subcommand.  Below the top
    # level they default to SUPPRESS so they never clobber a value given earlier.
    def globals_(p, default):
        p.add_argument("--seed", type=int, default=default(None), help="run seed (default: scene seed, else 0)")
        p.add_argument("--config", default=default(None), help="JSON file of option defaults; flags win")
        p.add_argument("--out", default=default(None), help=f"output directory (default ${OUTPUT_DIR_ENV} or .)")
        p.add_argument("-v", "--verbose", action="store_true", default=default(False))

    common = argparse.ArgumentParser(add_help=False)
    globals_(common, lambda d: argparse.SUPPRESS)
    parser = argparse.ArgumentParser(prog="uavprop", description="UAV radio measurement campaign toolkit")
    globals_(parser, lambda d: d)
    sub = parser.add_subparsers(dest="command", required=True)
    subs = []

    def add(name, func, **kw):
        p = sub.add_parser(name, parents=[common], **kw)
        p.set_defaults(func=func)
        subs.append(p)
        return p

    p = add("plan", cmd_plan, help="build and validate a mission plan")
    p.add_argument("--scenario", choices=SCENARIOS, help="start from a scripted scenario (also writes scene.json)")
    p.add_argument("--origin", type=_pair, default=(scenarios.DEFAULT_ORIGIN.lat_deg, scenarios.DEFAULT_ORIGIN.lon_deg),
                   help="frame origin LAT,LON")
    p.add_argument("--name", default="mission")
    p.add_argument("--wp", type=_triple, action=_item_action("wp"), metavar="E,N,U[,HOLD]", dest="wp_opt")
    p.add_argument("--roi", type=_triple, action=_item_action("roi"), metavar="E,N,U", dest="roi_opt")
    p.add_argument("--hold", type=float, default=5.0, help="default waypoint hold (s)")
    p.add_argument("--raster", action="store_true", help="expand every waypoint into the azimuth/tilt raster")
    p.add_argument("--az-step", type=float, default=15.0)
    p.add_argument("--tilts", type=_floats, default=(0.0, 15.0, 30.0, 45.0, 60.0))
    p.add_argument("--dwell", type=float, default=5.0)
    p.add_argument("-o", "--output", default="plan.json")
    p.add_argument("--dry-run", action="store_true", help="report only, write nothing")
    p.set_defaults(items=None)

    p = add("validate", cmd_validate, help="check a plan against the mission constraints")
    p.add_argument("plan")

    p = add("simulate", cmd_simulate, help="synthesize telemetry and receiver logs")
    p.add_argument("--plan", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--recording", choices=RECORDING_MODES, default="hover")
    p.add_argument("--air-antenna", choices=("horn", "omni"), default="horn",
                   help="mm-wave antenna on the UAV (the air-to-street scenario uses omni)")
    p.add_argument("--sigma-db", type=float, default=NoiseParams().sigma_db)
    p.add_argument("--uwb-bins", type=int, default=UwbConfig().n_bins)
    p.add_argument("--no-uwb", action="store_true")

    p = add("fuse", cmd_fuse, help="segment hovers and annotate measurements")
    p.add_argument("--plan", required=True)
    p.add_argument("--telemetry")
    p.add_argument("--rss")
    p.add_argument("--pdp")
    p.add_argument("--ground-log")
    p.add_argument("--sensitivity-dbm", type=float, default=ingest.SENSITIVITY_DBM)
    p.add_argument("--capture-radius", type=float, default=fuse.SegmenterConfig().capture_radius_m)
    p.add_argument("--min-dwell", type=float, default=fuse.SegmenterConfig().min_dwell_s)
    p.add_argument("--guard", type=float, default=fuse.SegmenterConfig().guard_s)

    p = add("analyze", cmd_analyze, help="derive profiles and statistics from fused data")
    asub = p.add_subparsers(dest="kind", required=True)
    lb = analysis.LinkBudget()
    for kind in ANALYSES:
        a = asub.add_parser(kind, parents=[common])
        a.add_argument("-o", "--output", help="output file name in the output dir, or - for stdout")
        subs.append(a)
        if kind in ("pap", "pep", "pathgain", "scatter"):
            a.add_argument("--annotated", required=True)
            a.add_argument("--wp", type=int, action="append", help="restrict to waypoint index (repeatable)")
        if kind in ("pap", "pep"):
            a.add_argument("--step", type=float, default=15.0 if kind == "pap" else 5.0)
        if kind == "pep":
            a.add_argument("--ground-az", type=float, required=True, help="positioner azimuth of the scan")
        if kind == "pathgain":
            a.add_argument("--tx-power-dbm", type=float, default=lb.tx_power_dbm)
            a.add_argument("--amp-gain-db", type=float, default=lb.amp_gain_db)
            a.add_argument("--tx-ant-gain-db", type=float, default=lb.tx_ant_gain_db)
            a.add_argument("--rx-ant-gain-db", type=float, default=lb.rx_ant_gain_db)
            a.add_argument("--misc-loss-db", type=float, default=lb.misc_loss_db)
        if kind == "delayspread":
            tp = analysis.ThresholdPolicy()
            a.add_argument("--pdp", required=True)
            a.add_argument("--annotated", help="keep only profiles annotated to a hover")
            a.add_argument("--noise-margin-db", type=float, default=tp.noise_margin_db)
            a.add_argument("--dynamic-cut-db", type=float, default=tp.dynamic_cut_db)
            a.add_argument("--cal-db", type=float, default=0.0)
        if kind == "scatter":
            a.add_argument("--spot", type=_triple, required=True, metavar="E,N,U")
            a.add_argument("--radius", type=float, required=True)
            a.add_argument("--plane", choices=("horizontal", "vertical"), default="horizontal")
            a.add_argument("--normal-az", type=float, required=True)
            a.add_argument("--tolerance", type=float, default=0.5)
            a.add_argument("--bin", type=float, default=1.0)
        if kind == "o2i":
            a.add_argument("--outdoor", required=True)
            a.add_argument("--indoor", required=True)
            a.add_argument("--outdoor-tag", required=True)
            a.add_argument("--indoor-tag", required=True)

    add("formats", cmd_formats, help="print the file format reference")
    return parser, subs


GLOBAL_OPTIONS = {"seed", "config", "out", "verbose"}


def _load_config(argv) -> dict:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return {}
    try:
        with open(known.config, encoding="utf-8") as f:
            cfg = json.load(f)
    except OSError as exc:
        raise UsageError(f"cannot read config {known.config}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg}", source=known.config, line=exc.lineno) from None
    if not isinstance(cfg, dict):
        raise FormatError("config must be a JSON object", source=known.config)
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        config = _load_config(argv)
        parser, subs = build_parser()
        if config:
            parser.set_defaults(**{k: v for k, v in config.items() if k in GLOBAL_OPTIONS})
            for p in subs:
                dests = {a.dest for a in p._actions} - GLOBAL_OPTIONS
                p.set_defaults(**{k: v for k, v in config.items() if k in dests})
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s: %(message)s")
        return args.func(args)
    except InfeasiblePointing as exc:
        print(f"error: infeasible plan: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except (FormatError, GeoError, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
