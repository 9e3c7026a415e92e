"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`. The closed-loop criterion
runs 30 full sessions (simulated time); the streaming criterion runs a real
60-second sensor session, so the whole module takes a couple of minutes.
"""

import asyncio
import json
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest

from cardioloop import metrics as metrics_mod
from cardioloop import protocol
from cardioloop.adaptation import AdaptationConfig, Condition, adaptive_offset
from cardioloop.cli import main as cli_main
from cardioloop.dsp import EcgPipeline, FilterSpec, design_bandpass
from cardioloop.rider import RiderModel, RiderPolicy, synth_ecg
from cardioloop.server import LoopServer
from cardioloop.session import (LoopState, Seeds, SessionConfig, SessionLog,
                                dumps_line, load_log, run_simulated)
from cardioloop.zones import AthleteProfile, classify, compute_zone_model


def report(criterion: int, name: str, ok: bool, detail: str = ""):
    verdict = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {criterion} {name}: {verdict}{suffix}")
    assert ok, f"criterion {criterion} {name}{suffix}"


# -- 1: zone arithmetic --------------------------------------------------------


def test_criterion_1_zone_arithmetic(capsys):
    t0 = time.monotonic()
    code = cli_main(["zones", "--age", "30"])
    elapsed = time.monotonic() - t0
    out = capsys.readouterr().out
    with capsys.disabled():
        zone3 = [l for l in out.splitlines() if l.startswith("Zone 3")]
        ok = (code == 0 and "187.0" in out and zone3
              and "130.9" in zone3[0] and "149.6" in zone3[0]
              and elapsed < 1.0)
        report(1, "zone arithmetic", ok,
               f"exit={code}, {elapsed:.2f}s")


# -- 2: dsp round trip -----------------------------------------------------------


def test_criterion_2_dsp_round_trip():
    t0 = time.monotonic()
    rng = np.random.default_rng(2024)
    samples, beats = synth_ecg(75.0, 130.0, 120.0, rng=rng, noise_snr_db=20.0)
    ts = np.array([s.t for s in samples])
    vs = np.array([s.v for s in samples])
    peaks, estimates = EcgPipeline(130.0).push_chunk(ts, vs)
    elapsed = time.monotonic() - t0

    pt = np.array([p.t for p in peaks])
    matched = sum(1 for b in beats
                  if pt.size and np.min(np.abs(pt - b)) <= 0.030)
    recall = matched / len(beats)
    mean_hr = float(np.mean([e.hr_bpm for e in estimates]))
    ok = recall >= 0.98 and abs(mean_hr - 75.0) <= 2.0 and elapsed < 5.0
    report(2, "dsp round trip", ok,
           f"recall={recall:.3f}, mean HR={mean_hr:.2f}, {elapsed:.2f}s")


# -- 3: filter properties --------------------------------------------------------


def test_criterion_3_filter_properties():
    h = design_bandpass(FilterSpec())

    def mag(f_hz):  # direct frequency-response evaluation of the taps
        k = np.arange(len(h))
        return abs(np.sum(h * np.exp(-2j * np.pi * f_hz * k / 130.0)))

    h0 = mag(0.0)
    h24 = mag(24.0)
    atten_db = 20 * np.log10(h24 / mag(0.5))
    ok = h0 < 0.01 and 0.89 <= h24 <= 1.12 and atten_db >= 20.0
    report(3, "filter properties", ok,
           f"|H(0)|={h0:.4f}, |H(24)|={h24:.3f}, atten={atten_db:.1f} dB")


# -- 4: closed-loop directional reproduction -------------------------------------


def _closed_loop_run(args):
    condition_value, seed = args
    condition = Condition(condition_value)
    config = SessionConfig(condition=condition, seeds=Seeds.from_base(seed))
    policy = RiderPolicy("follow_bike" if condition == Condition.BASELINE
                         else "follow_npc")
    log = run_simulated(config, RiderModel(), policy)
    return condition_value, log.summary["optimal_hr_ratio_pct"]


def test_criterion_4_closed_loop():
    jobs = [(c.value, seed)
            for c in (Condition.ADAPTIVE_NPC, Condition.RANDOM_NPC,
                      Condition.BASELINE)
            for seed in range(1, 11)]
    t0 = time.monotonic()
    ratios = {}
    with ProcessPoolExecutor(max_workers=2) as pool:
        for cond, ratio in pool.map(_closed_loop_run, jobs):
            ratios.setdefault(cond, []).append(ratio)
    elapsed = time.monotonic() - t0

    adaptive = float(np.mean(ratios["adaptive"]))
    random_ = float(np.mean(ratios["random"]))
    baseline = float(np.mean(ratios["baseline"]))
    ok = (adaptive >= 70.0 and adaptive - random_ >= 10.0
          and 0.0 < baseline < adaptive and elapsed < 30.0)
    report(4, "closed loop", ok,
           f"adaptive={adaptive:.1f}%, random={random_:.1f}%, "
           f"baseline={baseline:.1f}%, {elapsed:.1f}s")


# -- 5: metric oracle -------------------------------------------------------------


def _crafted_half_log():
    model = compute_zone_model(AthleteProfile(30))
    config = SessionConfig(zone_schedule=((3, 10.0),), training_s=0.0,
                           tick_hz=10)
    ticks = []
    for i in range(100):
        hr = 140.0 if i % 2 == 0 else 100.0  # zone 3 / zone 1 alternating
        ticks.append(LoopState(
            t_s=(i + 1) / 10, phase="running", hr_bpm=hr,
            hr_norm=hr / model.hr_max_bpm,
            current_zone=classify(hr, model), target_zone=3,
            remaining_s=0.0, condition="adaptive", npc=None, bike_view=None,
            speed_mps=0.0))
    return SessionLog(config=config, sim=None, ticks=ticks)


def test_criterion_5_metric_oracle(tmp_path, capsys):
    half = metrics_mod.compute(_crafted_half_log()).optimal_hr_ratio_pct
    out = tmp_path / "run.jsonl"
    code = cli_main(["--seed", "7", "sim", "--out", str(out)])
    stored_line = next(l for l in out.read_text().splitlines()
                       if json.loads(l)["type"] == "summary")
    log = load_log(out)
    recomputed = metrics_mod.compute(log).to_record()
    rebuilt_line = dumps_line({"type": "summary", **recomputed})
    with capsys.disabled():
        ok = half == 50.0 and code == 0 and rebuilt_line == stored_line
        report(5, "metric oracle", ok,
               f"half={half}, byte-exact={rebuilt_line == stored_line}")


# -- 6: determinism ----------------------------------------------------------------


def test_criterion_6_determinism(tmp_path, capsys):
    args = ["--seed", "11", "sim", "--condition", "adaptive", "--age", "30",
            "--policy", "follow-npc"]
    code_a = cli_main(args + ["--out", str(tmp_path / "a.jsonl")])
    code_b = cli_main(args + ["--out", str(tmp_path / "b.jsonl")])
    same = (tmp_path / "a.jsonl").read_bytes() == \
        (tmp_path / "b.jsonl").read_bytes()
    with capsys.disabled():
        report(6, "determinism", code_a == 0 and code_b == 0 and same,
               f"identical={same}")


# -- 7: protocol -------------------------------------------------------------------


def test_criterion_7_protocol_round_trip_and_latency():
    from test_protocol import random_frame

    rng = np.random.default_rng(77)
    ok_round = all(
        protocol.decode_frame(protocol.encode_frame(f)) == f
        for f in (random_frame(rng) for _ in range(10_000)))

    latencies = asyncio.run(_sensor_latency_session())
    p95 = float(np.percentile(latencies, 95)) * 1000.0
    hr_seen = _LAST_HR.get("hr")
    ok = (ok_round and len(latencies) > 1000 and p95 < 20.0
          and hr_seen is not None and abs(hr_seen - 75.0) <= 3.0)
    report(7, "protocol", ok,
           f"round_trip={ok_round}, p95={p95:.2f} ms, "
           f"final hr={hr_seen and round(hr_seen, 1)}")


_LAST_HR = {}


async def _sensor_latency_session():
    config = SessionConfig(zone_schedule=((1, 55.0),), training_s=0.0,
                           tick_hz=50, hr_window_s=3.0)
    server = LoopServer(config, mode="sensor")
    await server.start("127.0.0.1", 0)
    port = server._servers[0].sockets[0].getsockname()[1]

    samples, _ = synth_ecg(75.0, 130.0, 62.0)
    latencies = []

    async def sensor():
        reader, writer = await asyncio.open_connection("127.0.0.1", port)
        writer.write(protocol.encode_frame(protocol.hello("sensor")))
        await writer.drain()
        await reader.readline()  # hello ack
        start = time.monotonic()
        sent = 0
        # 130 samples/s in 100 ms batches for 60 s
        while sent < 60 * 130:
            target = min(int((time.monotonic() - start + 0.1) * 130.0),
                         60 * 130)
            if target > sent:
                batch = samples[sent:target]
                frame = protocol.ecg([s.t for s in batch],
                                     [s.v for s in batch])
                writer.write(protocol.encode_frame(frame))
                await writer.drain()
                sent = target
            await asyncio.sleep(0.1)
        writer.close()

    async def observer():
        reader, writer = await asyncio.open_connection("127.0.0.1", port)
        writer.write(protocol.encode_frame(protocol.hello("observer")))
        await writer.drain()
        writer.write(protocol.encode_frame(
            protocol.cmd("start", age=30, condition="adaptive")))
        await writer.drain()
        end = time.monotonic() + 61.0
        while time.monotonic() < end:
            try:
                line = await asyncio.wait_for(reader.readline(), 2.0)
            except asyncio.TimeoutError:
                break
            if not line:
                break
            frame = json.loads(line)
            if frame.get("type") != "state":
                continue
            latencies.append(time.time() - frame["wall_t"])
            if frame.get("hr_bpm") is not None:
                _LAST_HR["hr"] = frame["hr_bpm"]
            if frame.get("phase") == "finished":
                break
        writer.close()

    try:
        await asyncio.gather(sensor(), observer())
    finally:
        await server.stop()
    return latencies


# -- 8: controller laws --------------------------------------------------------------


def test_criterion_8_controller_laws():
    model = compute_zone_model(AthleteProfile(30))
    cfg = AdaptationConfig()
    rng = np.random.default_rng(8)
    n = 100_000
    zones = rng.integers(1, 6, n)
    hrs = rng.uniform(30.0, 220.0, n)
    steps = rng.uniform(1e-3, 40.0, n)
    ok = True
    for i in range(n):
        zone = int(zones[i])
        hr = float(hrs[i])
        off = adaptive_offset(hr, zone, model, cfg)
        centre = model.zone_center(zone)
        if abs(off) > cfg.max_offset_m + 1e-12:
            ok = False
            break
        if hr != centre and np.sign(off) != np.sign(centre - hr) and off != 0.0:
            # saturated-to-zero cannot happen; zero only at the centre
            ok = False
            break
        if adaptive_offset(hr + float(steps[i]), zone, model, cfg) > off:
            ok = False
            break
    report(8, "controller laws", ok, f"{n} samples")
