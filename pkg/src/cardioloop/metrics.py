"""Adherence metrics over session logs.

Both metrics are tick-weighted over Running-phase ticks that carry a heart
rate estimate: warm-up ticks without HR are excluded from numerator and
denominator alike, and training-phase ticks never count. The optimal-HR
ratio is the percentage of those ticks whose measured zone equals the
scheduled target zone; normalized HR is HR divided by the athlete's HR_max.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

from .errors import UndefinedMetricError

if TYPE_CHECKING:  # avoids a circular import; logs are duck-typed here
    from .session import SessionLog

PHASE_RUNNING = "running"


@dataclass(frozen=True)
class SegmentMetrics:
    zone: int
    ratio_pct: float
    mean_hr_norm: float
    n_ticks: int


@dataclass(frozen=True)
class SessionMetrics:
    optimal_hr_ratio_pct: float
    mean_hr_norm: float
    per_segment: tuple[SegmentMetrics, ...]
    n_ticks_total: int

    def to_record(self) -> dict:
        return {
            "optimal_hr_ratio_pct": self.optimal_hr_ratio_pct,
            "mean_hr_norm": self.mean_hr_norm,
            "per_segment": [
                {"zone": s.zone, "ratio_pct": s.ratio_pct,
                 "mean_hr_norm": s.mean_hr_norm, "n_ticks": s.n_ticks}
                for s in self.per_segment
            ],
            "n_ticks_total": self.n_ticks_total,
        }


def _segment_index(run_tick: int, starts: list[int], counts: list[int]) -> int:
    for i, (start, n) in enumerate(zip(starts, counts)):
        if start <= run_tick < start + n:
            return i
    return len(starts) - 1


def compute(log: "SessionLog") -> SessionMetrics:
    """Recompute all metrics from the tick stream (pure; replay-exact)."""
    config = log.config
    hz = config.tick_hz
    counts = [round(d * hz) for _, d in config.zone_schedule]
    starts = []
    acc = 0
    for n in counts:
        starts.append(acc)
        acc += n

    n_seg = len(counts)
    seg_on = [0] * n_seg
    seg_total = [0] * n_seg
    seg_norm_sum = [0.0] * n_seg

    run_tick = -1
    for state in log.ticks:
        if state.phase != PHASE_RUNNING:
            continue
        run_tick += 1
        if state.hr_bpm is None:
            continue
        seg = _segment_index(run_tick, starts, counts)
        seg_total[seg] += 1
        seg_norm_sum[seg] += state.hr_norm
        if state.current_zone == state.target_zone:
            seg_on[seg] += 1

    total = sum(seg_total)
    if total == 0:
        raise UndefinedMetricError(
            "no Running-phase ticks with a heart rate estimate")

    per_segment = tuple(
        SegmentMetrics(
            zone=config.zone_schedule[i][0],
            ratio_pct=100.0 * seg_on[i] / seg_total[i] if seg_total[i] else 0.0,
            mean_hr_norm=(seg_norm_sum[i] / seg_total[i]
                          if seg_total[i] else 0.0),
            n_ticks=seg_total[i],
        )
        for i in range(n_seg)
    )
    return SessionMetrics(
        optimal_hr_ratio_pct=100.0 * sum(seg_on) / total,
        mean_hr_norm=sum(seg_norm_sum) / total,
        per_segment=per_segment,
        n_ticks_total=total,
    )


def optimal_hr_ratio(log: "SessionLog") -> SessionMetrics:
    """Spec-facing name for the full metric computation."""
    return compute(log)


def mean_normalized_hr(log: "SessionLog") -> float:
    return compute(log).mean_hr_norm


def format_table(m: SessionMetrics) -> str:
    lines = [
        f"optimal HR ratio : {m.optimal_hr_ratio_pct:6.2f} %",
        f"mean normalized HR: {m.mean_hr_norm:6.4f}",
        f"HR-bearing ticks  : {m.n_ticks_total}",
        "segment  zone  ratio%   hr_norm   ticks",
    ]
    for i, s in enumerate(m.per_segment, start=1):
        lines.append(f"{i:>7}  {s.zone:>4}  {s.ratio_pct:6.2f}"
                     f"   {s.mean_hr_norm:7.4f}   {s.n_ticks:>5}")
    return "\n".join(lines)
