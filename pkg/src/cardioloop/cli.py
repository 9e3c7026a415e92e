"""Operator command line: serve, sim, analyze, synth-ecg, zones, replay.

Every subcommand is deterministic given its flags; `--seed` defaults to the
documented constant below. Exit codes follow sysexits where applicable:
64 usage, 65 bad data, 74 write failure, 2 undefined metric, 0 success.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from .adaptation import AdaptationConfig, Condition
from .dsp import (detect_batch, infer_fs, read_ecg_csv, write_ecg_csv,
                  write_hr_jsonl, write_peaks_jsonl)
from .errors import ParameterError, UndefinedMetricError
from .rider import BikePhysics, RiderModel, RiderPolicy, synth_ecg
from .session import (LogParseError, Seeds, SessionConfig, dumps_line,
                      load_log, run_simulated, save_log)
from .zones import (AthleteProfile, ZONE_LABELS, compute_zone_model)

DEFAULT_SEED = 42

EX_OK = 0
EX_UNDEFINED_METRIC = 2
EX_USAGE = 64
EX_DATA = 65
EX_IOERR = 74

CONFIG_SECTIONS = ("session", "adaptation", "rider", "policy", "physics")


class _CliError(Exception):
    def __init__(self, exit_code: int, message: str):
        super().__init__(message)
        self.exit_code = exit_code


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise _CliError(EX_USAGE, f"cannot read config file: {exc}")
    except json.JSONDecodeError as exc:
        raise _CliError(EX_DATA, f"config file is not valid JSON: {exc.msg}")
    if not isinstance(data, dict):
        raise _CliError(EX_DATA, "config file must hold a JSON object")
    unknown = set(data) - set(CONFIG_SECTIONS)
    if unknown:
        raise _CliError(EX_USAGE,
                        f"unknown config sections: {sorted(unknown)}; "
                        f"expected {CONFIG_SECTIONS}")
    return data


def _build(cls, overrides: dict, **base):
    try:
        return cls(**{**base, **overrides})
    except (ParameterError, TypeError) as exc:
        raise _CliError(EX_USAGE, f"bad {cls.__name__} settings: {exc}")


def _parse_policy(text: str, overrides: dict) -> RiderPolicy:
    kind = text
    extra = {}
    if text.startswith("constant:"):
        kind = "constant"
        try:
            extra["constant_power_w"] = float(text.split(":", 1)[1])
        except ValueError:
            raise _CliError(EX_USAGE, f"bad constant power in {text!r}")
    kind = {"follow-npc": "follow_npc", "follow-bike": "follow_bike",
            "constant": "constant"}.get(kind)
    if kind is None:
        raise _CliError(EX_USAGE,
                        "policy must be follow-npc, follow-bike, or constant:W")
    return _build(RiderPolicy, {**extra, **overrides}, kind=kind)


def _session_config(args, file_cfg: dict) -> SessionConfig:
    overrides = dict(file_cfg.get("session", {}))
    if "zone_schedule" in overrides:
        overrides["zone_schedule"] = tuple(
            (int(z), float(d)) for z, d in overrides["zone_schedule"])
    if "condition" in overrides:
        overrides["condition"] = Condition(overrides["condition"])
    if "seeds" in overrides:
        overrides["seeds"] = Seeds(**overrides["seeds"])
    adaptation = _build(AdaptationConfig, file_cfg.get("adaptation", {}))
    base = dict(
        participant_id=getattr(args, "participant", "anon"),
        age=getattr(args, "age", 30),
        hr_max_formula=getattr(args, "formula", "tanaka"),
        condition=Condition(getattr(args, "condition", "adaptive")),
        seeds=Seeds.from_base(args.seed),
        adaptation=adaptation,
    )
    return _build(SessionConfig, overrides, **base)


# -- subcommands ---------------------------------------------------------------


def cmd_zones(args) -> int:
    try:
        profile = AthleteProfile(args.age, args.formula)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_USAGE
    model = compute_zone_model(profile)
    print(f"hr_max ({args.formula}): {model.hr_max_bpm:.1f} bpm")
    for zone in range(1, 6):
        lo, hi = model.zone_bounds(zone)
        label = ZONE_LABELS[zone]
        print(f"Zone {zone}  {label:<10s} [{lo:.1f}, {hi:.1f}) bpm")
    return EX_OK


def cmd_sim(args) -> int:
    file_cfg = _load_config_file(args.config)
    config = _session_config(args, file_cfg)
    rider = _build(RiderModel, file_cfg.get("rider", {}))
    policy = _parse_policy(args.policy, file_cfg.get("policy", {}))
    physics = _build(BikePhysics, file_cfg.get("physics", {}))
    log = run_simulated(config, rider, policy, physics)
    out = Path(args.out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        save_log(log, out)
    except OSError as exc:
        print(f"error: cannot write {out}: {exc}", file=sys.stderr)
        return EX_IOERR
    m = metrics_mod.compute(log)
    print(f"wrote {out} ({len(log.ticks)} ticks)")
    print(metrics_mod.format_table(m))
    return EX_OK


def cmd_analyze(args) -> int:
    try:
        log = load_log(args.log)
    except OSError as exc:
        print(f"error: cannot read {args.log}: {exc}", file=sys.stderr)
        return EX_DATA
    except LogParseError as exc:
        print(f"error: {args.log}: {exc}", file=sys.stderr)
        return EX_DATA
    try:
        m = metrics_mod.compute(log)
    except UndefinedMetricError as exc:
        print(f"undefined metric: {exc}", file=sys.stderr)
        return EX_UNDEFINED_METRIC
    record = m.to_record()
    if log.summary is not None and log.summary != record:
        print("warning: stored summary disagrees with recomputed metrics",
              file=sys.stderr)
    print(metrics_mod.format_table(m))
    out_dir = Path(args.out_dir) if args.out_dir else Path(args.log).parent
    stem = Path(args.log).stem
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        summary_path = out_dir / f"{stem}.summary.json"
        summary_path.write_text(dumps_line(record) + "\n", encoding="utf-8")
        print(f"wrote {summary_path}")
        if args.plots:
            from .report import render_session_figures
            for path in render_session_figures(log, out_dir, stem):
                print(f"wrote {path}")
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return EX_IOERR
    return EX_OK


def cmd_synth_ecg(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.ramp is not None:
        try:
            start, end = (float(x) for x in args.ramp.split(":"))
        except ValueError:
            print("error: --ramp expects START:END bpm", file=sys.stderr)
            return EX_USAGE
        duration = args.duration
        schedule = lambda t: start + (end - start) * min(t / duration, 1.0)
    else:
        schedule = args.bpm
    try:
        samples, beats = synth_ecg(schedule, args.fs, args.duration, rng=rng,
                                   noise_snr_db=args.snr_db)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_USAGE
    out = Path(args.out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        write_ecg_csv(out, [s.t for s in samples], [s.v for s in samples])
        beats_path = out.with_suffix(".beats.jsonl")
        with open(beats_path, "w", newline="\n", encoding="utf-8") as fh:
            for t in beats:
                fh.write(json.dumps({"t": round(t, 6)}) + "\n")
    except OSError as exc:
        print(f"error: cannot write {out}: {exc}", file=sys.stderr)
        return EX_IOERR
    print(f"wrote {out} ({len(samples)} samples) and {beats_path} "
          f"({len(beats)} beats)")
    return EX_OK


def cmd_replay(args) -> int:
    try:
        ts, vs = read_ecg_csv(args.csv)
    except OSError as exc:
        print(f"error: cannot read {args.csv}: {exc}", file=sys.stderr)
        return EX_DATA
    except (ParameterError, ValueError) as exc:
        print(f"error: {args.csv}: {exc}", file=sys.stderr)
        return EX_DATA
    if len(ts) < 2:
        print("error: trace too short", file=sys.stderr)
        return EX_DATA
    fs = args.fs if args.fs is not None else infer_fs(ts)
    peaks, estimates = detect_batch(ts, vs, fs, hr_window_s=args.hr_window)
    out_dir = Path(args.out_dir) if args.out_dir else Path(args.csv).parent
    stem = Path(args.csv).stem
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        peaks_path = out_dir / f"{stem}.peaks.jsonl"
        hr_path = out_dir / f"{stem}.hr.jsonl"
        write_peaks_jsonl(peaks_path, peaks)
        write_hr_jsonl(hr_path, estimates)
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return EX_IOERR
    print(f"{len(peaks)} beats, {len(estimates)} HR estimates "
          f"(fs={fs:.1f} Hz)")
    print(f"wrote {peaks_path}")
    print(f"wrote {hr_path}")
    if args.plots:
        from .report import render_detection_figure
        fig_path = render_detection_figure(ts, vs, peaks, estimates,
                                           out_dir / f"{stem}.detection.png")
        print(f"wrote {fig_path}")
    return EX_OK


def cmd_serve(args) -> int:
    from .server import serve

    file_cfg = _load_config_file(args.config)
    if args.tick_hz is not None:
        session = dict(file_cfg.get("session", {}))
        session["tick_hz"] = args.tick_hz
        file_cfg["session"] = session
    config = _session_config(args, file_cfg)
    rider = _build(RiderModel, file_cfg.get("rider", {}))
    policy = _parse_policy(args.policy, file_cfg.get("policy", {}))
    physics = _build(BikePhysics, file_cfg.get("physics", {}))

    async def main():
        server = await serve(args.port, config, host=args.host, mode=args.mode,
                             http_port=args.http_port,
                             console_dir=args.console_dir, rider=rider,
                             policy=policy, physics=physics,
                             log_dir=args.log_dir)
        where = f"tcp://{args.host}:{args.port}"
        if args.http_port:
            where += f", ws+http://{args.host}:{args.http_port}"
        print(f"serving on {where} (mode={args.mode})", flush=True)
        try:
            await server.run_forever()
        finally:
            await server.stop()

    try:
        asyncio.run(main())
    except KeyboardInterrupt:
        pass
    return EX_OK


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cardioloop",
        description="Heart-rate-adaptive training engine")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED,
                        help=f"base RNG seed (default {DEFAULT_SEED})")
    parser.add_argument("--config", metavar="PATH",
                        help="JSON file overriding engine defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("zones", help="print the five-zone table for an age")
    p.add_argument("--age", type=int, required=True)
    p.add_argument("--formula", choices=["tanaka", "fox"], default="tanaka")
    p.set_defaults(func=cmd_zones)

    p = sub.add_parser("sim", help="run a simulated closed-loop session")
    p.add_argument("--condition", choices=["baseline", "random", "adaptive"],
                   default="adaptive")
    p.add_argument("--age", type=int, default=30)
    p.add_argument("--formula", choices=["tanaka", "fox"], default="tanaka")
    p.add_argument("--participant", default="sim")
    p.add_argument("--policy", default="follow-npc",
                   help="follow-npc | follow-bike | constant:WATTS")
    p.add_argument("--out", default="session.jsonl")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("analyze", help="recompute metrics from a session log")
    p.add_argument("log")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--no-plots", dest="plots", action="store_false")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth-ecg", help="write a synthetic ECG CSV + beats")
    p.add_argument("--bpm", type=float, default=75.0)
    p.add_argument("--ramp", metavar="START:END", default=None)
    p.add_argument("--duration", type=float, default=120.0)
    p.add_argument("--fs", type=float, default=130.0)
    p.add_argument("--snr-db", type=float, default=None)
    p.add_argument("--out", default="ecg.csv")
    p.set_defaults(func=cmd_synth_ecg)

    p = sub.add_parser("replay", help="run a recorded ECG CSV through the "
                                      "detector, writing peaks and HR")
    p.add_argument("csv")
    p.add_argument("--fs", type=float, default=None,
                   help="sample rate; inferred from timestamps when omitted")
    p.add_argument("--hr-window", type=float, default=3.0)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--no-plots", dest="plots", action="store_false")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="run the streaming service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--http-port", type=int, default=None,
                   help="WebSocket gateway + console static files")
    p.add_argument("--tick-hz", type=int, default=None)
    p.add_argument("--mode", choices=["sensor", "manual", "sim"],
                   default="sim")
    p.add_argument("--condition", choices=["baseline", "random", "adaptive"],
                   default="adaptive")
    p.add_argument("--age", type=int, default=30)
    p.add_argument("--participant", default="live")
    p.add_argument("--policy", default="follow-npc")
    p.add_argument("--console-dir", default=None)
    p.add_argument("--log-dir", default=None)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags; map to the sysexits usage code
        return EX_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_USAGE


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
