import json

import pytest

from cardioloop.cli import main
from cardioloop.session import load_log


def run_cli(*argv):
    return main(list(argv))


def test_zones_age_30(capsys):
    assert run_cli("zones", "--age", "30") == 0
    out = capsys.readouterr().out
    assert "187.0" in out
    zone3 = next(l for l in out.splitlines() if l.startswith("Zone 3"))
    assert "130.9" in zone3 and "149.6" in zone3


def test_zones_fox(capsys):
    assert run_cli("zones", "--age", "40", "--formula", "fox") == 0
    assert "180.0" in capsys.readouterr().out


def test_zones_bad_age():
    assert run_cli("zones", "--age", "300") == 64


def test_unknown_flag_rejected():
    assert run_cli("zones", "--age", "30", "--frobnicate") == 64


def sim_args(tmp_path, name, *extra):
    cfg = tmp_path / "small.json"
    if not cfg.exists():
        cfg.write_text(json.dumps({
            "session": {"zone_schedule": [[1, 6.0]], "training_s": 2.0,
                        "tick_hz": 25, "hr_window_s": 2.0}}))
    return ["--seed", "5", "--config", str(cfg), "sim",
            "--out", str(tmp_path / name), *extra]


def test_sim_writes_log_and_prints_metrics(tmp_path, capsys):
    assert main(sim_args(tmp_path, "run.jsonl")) == 0
    out = capsys.readouterr().out
    assert "optimal HR ratio" in out
    log = load_log(tmp_path / "run.jsonl")
    assert log.summary is not None


def test_sim_deterministic_bytes(tmp_path):
    assert main(sim_args(tmp_path, "a.jsonl")) == 0
    assert main(sim_args(tmp_path, "b.jsonl")) == 0
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_sim_constant_policy(tmp_path, capsys):
    assert main(sim_args(tmp_path, "c.jsonl", "--condition", "baseline",
                         "--policy", "constant:0")) == 0


def test_sim_bad_policy(tmp_path):
    assert main(sim_args(tmp_path, "d.jsonl", "--policy", "sprint")) == 64


def test_analyze_matches_stored_summary(tmp_path, capsys):
    assert main(sim_args(tmp_path, "run.jsonl")) == 0
    capsys.readouterr()
    assert run_cli("analyze", str(tmp_path / "run.jsonl"),
                   "--out-dir", str(tmp_path / "report")) == 0
    captured = capsys.readouterr()
    assert "disagrees" not in captured.err
    summary_path = tmp_path / "report" / "run.summary.json"
    assert summary_path.exists()
    stored = [json.loads(l) for l in
              (tmp_path / "run.jsonl").read_text().splitlines()
              if json.loads(l)["type"] == "summary"][0]
    recomputed = json.loads(summary_path.read_text())
    stored.pop("type")
    assert recomputed == stored
    # report figures land alongside the summary
    assert (tmp_path / "report" / "run_hr.png").exists()
    assert (tmp_path / "report" / "run_segments.png").exists()


def test_analyze_truncated_file(tmp_path, capsys):
    path = tmp_path / "broken.jsonl"
    path.write_text('{"type":"config"\n')
    assert run_cli("analyze", str(path)) == 65
    assert "line 1" in capsys.readouterr().err


def test_analyze_no_hr_ticks(tmp_path, capsys):
    cfg = tmp_path / "sensorless.jsonl"
    lines = [json.dumps({
        "type": "config", "participant_id": "x", "age": 30,
        "hr_max_formula": "tanaka", "condition": "baseline",
        "zone_schedule": [[1, 1.0]], "tick_hz": 10, "hr_window_s": 2.0,
        "training_s": 0.0, "ecg_fs": 130.0,
        "seeds": {"adaptation": 1, "rider": 2, "ecg": 3},
        "adaptation": {"max_offset_m": 30.0, "full_scale_dev_bpm": 15.0,
                       "npc_slew_mps": 10.0, "green_radius_m": None,
                       "random_retarget_s": 2.0, "rng_seed": 0}})]
    for i in range(10):
        lines.append(json.dumps({
            "type": "tick", "t_s": (i + 1) / 10, "phase": "running",
            "hr_bpm": None, "hr_norm": None, "current_zone": None,
            "target_zone": 1, "remaining_s": 0.0, "condition": "baseline",
            "npc": None, "bike_view": None, "speed_mps": 0.0,
            "end_prompt": False}))
    cfg.write_text("\n".join(lines) + "\n")
    assert run_cli("analyze", str(cfg)) == 2
    assert "undefined metric" in capsys.readouterr().err


def test_synth_ecg_writes_csv_and_sidecar(tmp_path, capsys):
    out = tmp_path / "trace.csv"
    assert run_cli("synth-ecg", "--bpm", "60", "--duration", "10",
                   "--out", str(out)) == 0
    assert out.exists()
    beats = [json.loads(l) for l in
             out.with_suffix(".beats.jsonl").read_text().splitlines()]
    assert len(beats) == 9  # first beat completes at t = 1 s
    header = out.read_text().splitlines()[0]
    assert header == "t,v"


def test_replay_emits_peaks_and_hr(tmp_path, capsys):
    out = tmp_path / "trace.csv"
    assert run_cli("synth-ecg", "--bpm", "75", "--duration", "30",
                   "--out", str(out)) == 0
    capsys.readouterr()
    assert run_cli("replay", str(out), "--out-dir", str(tmp_path / "rep")) == 0
    peaks = [json.loads(l) for l in
             (tmp_path / "rep" / "trace.peaks.jsonl").read_text().splitlines()]
    assert peaks and set(peaks[0]) == {"t", "amplitude"}
    hrs = [json.loads(l) for l in
           (tmp_path / "rep" / "trace.hr.jsonl").read_text().splitlines()]
    assert hrs and set(hrs[0]) == {"t", "hr_bpm"}
    assert (tmp_path / "rep" / "trace.detection.png").exists()


def test_replay_missing_file(tmp_path):
    assert run_cli("replay", str(tmp_path / "nope.csv")) == 65


def test_config_file_unknown_section(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{"physiology": {}}')
    assert main(["--config", str(cfg), "sim",
                 "--out", str(tmp_path / "x.jsonl")]) == 64


def test_config_overrides_rider(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "session": {"zone_schedule": [[1, 4.0]], "training_s": 1.0,
                    "tick_hz": 25, "hr_window_s": 2.0},
        "rider": {"hr_rest_bpm": 70.0}}))
    out = tmp_path / "r.jsonl"
    assert main(["--config", str(cfg), "sim", "--out", str(out)]) == 0
    log = load_log(out)
    assert log.sim["rider"]["hr_rest_bpm"] == 70.0
