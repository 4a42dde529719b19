import csv
import io
import json

import pytest

from oracles import BORESIGHT_LINK_DBM
from uavprop.cli import main
from uavprop.fuse import mean_dbm
from uavprop.ingest import PowerDelayProfile, format_pdp, parse_rss
from uavprop.mission import read_plan


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def free_space(tmp_path_factory):
    d = tmp_path_factory.mktemp("fs")
    assert main(["--out", str(d), "plan", "--scenario", "free-space"]) == 0
    assert main(["--out", str(d), "--seed", "7", "simulate", "--plan", str(d / "plan.json"),
                 "--scene", str(d / "scene.json")]) == 0
    return d


def test_plan_raster_defaults(tmp_path, capsys):
    code, out, _ = run(capsys, "--out", tmp_path, "plan", "--wp", "0,0,19", "--raster")
    assert code == 0
    plan = read_plan(tmp_path / "plan.json")
    assert len(plan.waypoints()) == 120


def test_plan_altitude_violation(tmp_path, capsys):
    code, out, _ = run(capsys, "--out", tmp_path, "plan", "--wp", "0,0,55")
    assert code == 1
    assert "altitude exceeds 50 m" in out
    assert not (tmp_path / "plan.json").exists()


def test_plan_dry_run_writes_nothing(tmp_path, capsys):
    code, out, _ = run(capsys, "--out", tmp_path, "plan", "--roi", "100,0,2", "--wp", "0,0,19", "--dry-run")
    assert code == 0 and "dry run" in out
    assert list(tmp_path.iterdir()) == []


def test_validate_command(tmp_path, capsys):
    run(capsys, "--out", tmp_path, "plan", "--roi", "100,0,2", "--wp", "0,0,19")
    code, out, _ = run(capsys, "validate", tmp_path / "plan.json")
    assert code == 0 and out.strip() == "ok"
    text = (tmp_path / "plan.json").read_text().replace('"agl_m": 19.0', '"agl_m": 55.0')
    (tmp_path / "bad.json").write_text(text)
    code, out, _ = run(capsys, "validate", tmp_path / "bad.json")
    assert code == 1 and "altitude_exceeded" in out


def test_free_space_mean_rss(free_space):
    rss = parse_rss((free_space / "rss.csv").read_text())
    assert len(rss) >= 100
    assert abs(mean_dbm([s.rss_dbm for s in rss]) - BORESIGHT_LINK_DBM) <= 0.2


def test_simulate_is_deterministic(tmp_path, free_space):
    assert main(["--out", str(tmp_path), "--seed", "7", "simulate", "--plan", str(free_space / "plan.json"),
                 "--scene", str(free_space / "scene.json")]) == 0
    for name in ("telemetry.jsonl", "rss.csv", "pdp.jsonl", "run.json"):
        assert (tmp_path / name).read_bytes() == (free_space / name).read_bytes()


def test_simulate_missing_scene(tmp_path, capsys, free_space):
    code, _, err = run(capsys, "--out", tmp_path, "simulate", "--plan", free_space / "plan.json",
                       "--scene", tmp_path / "nope.json")
    assert code == 2 and "nope.json" in err


def test_fuse_simulated_has_no_orphans(tmp_path, capsys, free_space):
    code, out, _ = run(capsys, "--out", tmp_path, "fuse", "--plan", free_space / "plan.json",
                       "--telemetry", free_space / "telemetry.jsonl", "--rss", free_space / "rss.csv",
                       "--pdp", free_space / "pdp.jsonl")
    assert code == 0
    assert "segments found: 1" in out and "samples orphaned: 0" in out
    assert (tmp_path / "orphans.csv").read_text().count("\n") == 1


def test_fuse_without_telemetry_orphans_everything(tmp_path, capsys, free_space):
    code, out, _ = run(capsys, "--out", tmp_path, "fuse", "--plan", free_space / "plan.json",
                       "--rss", free_space / "rss.csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO((tmp_path / "orphans.csv").read_text())))
    n = len(parse_rss((free_space / "rss.csv").read_text()))
    assert len(rows) == n and {r["reason"] for r in rows} == {"no segment"}


def test_fuse_manual_phase_orphaned(tmp_path, capsys):
    d = tmp_path
    assert main(["--out", str(d), "plan", "--scenario", "free-space"]) == 0
    assert main(["--out", str(d), "simulate", "--plan", str(d / "plan.json"), "--scene", str(d / "scene.json"),
                 "--recording", "continuous", "--no-uwb"]) == 0
    capsys.readouterr()
    code, out, _ = run(capsys, "--out", d, "fuse", "--plan", d / "plan.json", "--telemetry", d / "telemetry.jsonl",
                       "--rss", d / "rss.csv")
    assert code == 0
    reasons = {r["reason"] for r in csv.DictReader(io.StringIO((d / "orphans.csv").read_text()))}
    assert "manual phase" in reasons
    annotated = list(csv.DictReader(io.StringIO((d / "annotated.csv").read_text())))
    assert annotated


def test_analyze_pap_on_raster(tmp_path, capsys):
    d = tmp_path
    assert main(["--out", str(d), "plan", "--scenario", "raster"]) == 0
    assert main(["--out", str(d), "simulate", "--plan", str(d / "plan.json"), "--scene", str(d / "scene.json"),
                 "--no-uwb"]) == 0
    assert main(["--out", str(d), "fuse", "--plan", str(d / "plan.json"), "--telemetry", str(d / "telemetry.jsonl"),
                 "--rss", str(d / "rss.csv")]) == 0
    capsys.readouterr()
    code, out, _ = run(capsys, "analyze", "pap", "--annotated", d / "annotated.csv", "-o", "-")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 120
    assert sorted({float(r["tilt_deg"]) for r in rows}) == [0, 15, 30, 45, 60]
    assert all(sum(1 for r in rows if float(r["tilt_deg"]) == t) == 24 for t in (0, 15, 30, 45, 60))
    code, _, err = run(capsys, "analyze", "pep", "--annotated", d / "annotated.csv", "--ground-az", "90", "-o", "-")
    assert code == 2 and "ground" in err


def test_analyze_delayspread_two_taps(tmp_path, capsys):
    taps = [-200.0] * 200
    taps[20] = taps[120] = -70.0
    (tmp_path / "pdp.jsonl").write_text(format_pdp([PowerDelayProfile(1_700_000_000_000 + 100 * k, 1.0, tuple(taps))
                                                    for k in range(3)]))
    code, out, _ = run(capsys, "analyze", "delayspread", "--pdp", tmp_path / "pdp.jsonl", "-o", "-")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [float(r["rms_ds_ns"]) for r in rows] == [50.0, 50.0, 50.0]


def test_analyze_o2i_tag_mismatch(tmp_path, capsys, free_space):
    run(capsys, "--out", tmp_path, "fuse", "--plan", free_space / "plan.json",
        "--telemetry", free_space / "telemetry.jsonl", "--rss", free_space / "rss.csv")
    a = tmp_path / "annotated.csv"
    code, out, _ = run(capsys, "analyze", "o2i", "--outdoor", a, "--indoor", a, "--outdoor-tag", "f1",
                       "--indoor-tag", "f1", "-o", "-")
    assert code == 0 and out.splitlines()[1].endswith(",0.0")
    code, _, err = run(capsys, "analyze", "o2i", "--outdoor", a, "--indoor", a, "--outdoor-tag", "f1",
                       "--indoor-tag", "f2", "-o", "-")
    assert code == 2 and "tag" in err


def test_config_file_and_flag_precedence(tmp_path, capsys, free_space):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 3, "sigma_db": 0.0, "out": str(tmp_path / "a")}))
    base = ["simulate", "--plan", str(free_space / "plan.json"), "--scene", str(free_space / "scene.json"), "--no-uwb"]
    assert main(["--config", str(cfg)] + base) == 0
    run_a = json.loads((tmp_path / "a" / "run.json").read_text())
    assert run_a["seed"] == 3 and run_a["sigma_db"] == 0.0
    assert main(["--config", str(cfg), "--seed", "4", "--out", str(tmp_path / "b")] + base + ["--sigma-db", "1"]) == 0
    run_b = json.loads((tmp_path / "b" / "run.json").read_text())
    assert run_b["seed"] == 4 and run_b["sigma_db"] == 1.0


def test_env_output_dir(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("UAVPROP_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["plan", "--roi", "100,0,2", "--wp", "0,0,19"]) == 0
    assert (tmp_path / "env" / "plan.json").exists()


def test_bad_input_is_exit_2(tmp_path, capsys, free_space):
    (tmp_path / "rss.csv").write_text("t_utc,freq_ghz,rss_dbm\n2024-05-03T10:15:00Z,27.0,abc\n")
    code, _, err = run(capsys, "--out", tmp_path, "fuse", "--plan", free_space / "plan.json",
                       "--rss", tmp_path / "rss.csv")
    assert code == 2 and "rss.csv" in err and "line 2" in err


def test_formats_lists_every_file(capsys):
    code, out, _ = run(capsys, "formats")
    assert code == 0
    for name in ("telemetry.jsonl", "rss.csv", "pdp.jsonl", "ground.csv", "plan.json", "scene.json"):
        assert name in out
