"""Figure rendering for the report-producing CLI paths.

Everything draws to files via the Agg backend; nothing here opens windows.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .session import SessionLog
from .zones import AthleteProfile, compute_zone_model

ZONE_COLORS = ["#c6dbef", "#9ecae1", "#a1d99b", "#fdae6b", "#fb6a4a"]


def _zone_bands(ax, boundaries, t0, t1):
    for i in range(5):
        ax.axhspan(boundaries[i], boundaries[i + 1], xmin=0, xmax=1,
                   color=ZONE_COLORS[i], alpha=0.35, lw=0)
    ax.set_xlim(t0, t1)


def render_session_figures(log: SessionLog, out_dir, stem: str) -> list[Path]:
    """HR trace with zone bands, pacer offset, and per-segment adherence."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    model = compute_zone_model(
        AthleteProfile(log.config.age, log.config.hr_max_formula))

    ticks = log.ticks
    t = np.array([s.t_s for s in ticks])
    hr = np.array([np.nan if s.hr_bpm is None else s.hr_bpm for s in ticks])
    target = np.array([s.target_zone for s in ticks])
    running = np.array([s.phase == "running" for s in ticks])

    fig, ax = plt.subplots(figsize=(10, 5))
    _zone_bands(ax, model.boundaries, t[0] if len(t) else 0.0,
                t[-1] if len(t) else 1.0)
    # outline the scheduled target band over time
    lo = np.array([model.boundaries[z - 1] for z in target], dtype=float)
    hi = np.array([model.boundaries[z] for z in target], dtype=float)
    ax.fill_between(t, lo, hi, color="#31a354", alpha=0.25, lw=0,
                    label="target zone")
    ax.plot(t, hr, color="#08306b", lw=1.2, label="heart rate")
    if running.any():
        ax.axvline(t[np.argmax(running)], color="k", ls="--", lw=0.8)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("heart rate (bpm)")
    ax.set_title(f"{log.config.participant_id}: {log.config.condition.value}")
    ax.legend(loc="lower right")
    path = out_dir / f"{stem}_hr.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    if any(s.npc is not None for s in ticks):
        off = np.array([np.nan if s.npc is None else s.npc.offset_m
                        for s in ticks])
        green = log.config.adaptation.green_radius_m
        if green is None:
            from .adaptation import zone_edge_offset
            green = zone_edge_offset(model, log.config.adaptation)
        fig, ax = plt.subplots(figsize=(10, 3.2))
        ax.axhspan(-green, green, color="#a1d99b", alpha=0.5, lw=0,
                   label="aligned")
        ax.plot(t, off, color="#54278f", lw=1.0, label="pacer offset")
        ax.set_ylim(-32, 32)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("offset (m)")
        ax.legend(loc="upper right")
        path = out_dir / f"{stem}_offset.png"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

    if log.summary and log.summary.get("per_segment"):
        seg = log.summary["per_segment"]
        fig, ax = plt.subplots(figsize=(5, 3.2))
        xs = np.arange(len(seg))
        ax.bar(xs, [s["ratio_pct"] for s in seg], color="#3182bd")
        ax.set_xticks(xs, [f"zone {s['zone']}" for s in seg])
        ax.set_ylim(0, 100)
        ax.set_ylabel("time on target (%)")
        path = out_dir / f"{stem}_segments.png"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written


def render_detection_figure(ts, vs, peaks, estimates, out_path) -> Path:
    """Recorded trace with detected beats and the running HR estimate."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(10, 6), sharex=True,
                                   height_ratios=[2, 1])
    ax0.plot(ts, vs, color="#636363", lw=0.6)
    if peaks:
        ts_arr = np.asarray(ts)
        vs_arr = np.asarray(vs)
        idx = np.searchsorted(ts_arr, [p.t for p in peaks]).clip(0, len(ts_arr) - 1)
        ax0.scatter(ts_arr[idx], vs_arr[idx], color="#de2d26", s=12, zorder=3,
                    label="beats")
        ax0.legend(loc="upper right")
    ax0.set_ylabel("ecg (mV)")
    if estimates:
        ax1.step([e.t for e in estimates], [e.hr_bpm for e in estimates],
                 where="post", color="#08519c")
    ax1.set_ylabel("heart rate (bpm)")
    ax1.set_xlabel("time (s)")
    fig.savefig(out_path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return out_path
