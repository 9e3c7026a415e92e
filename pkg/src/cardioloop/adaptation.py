"""Per-tick feedback controllers for the three session conditions.

The adaptive pacer maps heart-rate deviation from the target-zone centre to a
longitudinal offset (pacer ahead = HR too low, behind = too high), saturating
at +/-30 m and moving under a slew limit so its motion stays plausible. The
random pacer draws bounded offsets from a seeded generator on a fixed
retarget period, and the baseline condition is a bike-computer readout with
no pacer at all.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .errors import ParameterError
from .zones import ZoneModel, classify


class Condition(str, enum.Enum):
    BASELINE = "baseline"
    RANDOM_NPC = "random"
    ADAPTIVE_NPC = "adaptive"


@dataclass(frozen=True)
class AdaptationConfig:
    """Geometry and timing of the pacing feedback.

    ``green_radius_m`` is the alignment radius; left unset it resolves to the
    offset produced at the target-zone edge, which makes "aligned" coincide
    with "heart rate in target zone" under the default linear map.
    """

    max_offset_m: float = 30.0
    full_scale_dev_bpm: float = 15.0
    npc_slew_mps: float = 10.0
    green_radius_m: float | None = None
    random_retarget_s: float = 2.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_offset_m <= 0:
            raise ParameterError("max_offset_m must be positive")
        if self.full_scale_dev_bpm <= 0:
            raise ParameterError("full_scale_dev_bpm must be positive")
        if self.npc_slew_mps <= 0:
            raise ParameterError("npc_slew_mps must be positive")
        if self.random_retarget_s <= 0:
            raise ParameterError("random_retarget_s must be positive")
        if self.green_radius_m is not None and not (
                0.0 < self.green_radius_m < self.max_offset_m):
            raise ParameterError(
                f"green_radius_m must lie in (0, {self.max_offset_m})")


@dataclass(slots=True)
class NpcState:
    """Pacer snapshot: offset (+ = ahead of the rider), alignment, score."""

    offset_m: float = 0.0
    aligned: bool = True
    score: int = 0


@dataclass(slots=True)
class BikeComputerView:
    """Baseline readout: numeric HR plus current and target zone ids."""

    hr_bpm: float | None
    current_zone: int | None
    target_zone: int


def zone_edge_offset(model: ZoneModel, cfg: AdaptationConfig) -> float:
    """Offset magnitude produced when HR sits exactly on a zone edge."""
    half_width = 0.05 * model.hr_max_bpm  # all five zones span 10% of HR_max
    return min(cfg.max_offset_m * half_width / cfg.full_scale_dev_bpm,
               cfg.max_offset_m)


def resolve_green_radius(model: ZoneModel, cfg: AdaptationConfig) -> AdaptationConfig:
    if cfg.green_radius_m is not None:
        return cfg
    return replace(cfg, green_radius_m=zone_edge_offset(model, cfg))


def adaptive_offset(hr_bpm: float, target_zone: int, model: ZoneModel,
                    cfg: AdaptationConfig) -> float:
    """Target offset: linear in (zone centre - HR), saturating at the bound."""
    if not 1 <= target_zone <= 5:
        raise ParameterError(f"target zone must be 1..5, got {target_zone}")
    if not hr_bpm > 0:
        raise ParameterError(f"hr_bpm must be positive, got {hr_bpm}")
    centre = model.zone_center(target_zone)
    raw = cfg.max_offset_m * (centre - hr_bpm) / cfg.full_scale_dev_bpm
    return min(max(raw, -cfg.max_offset_m), cfg.max_offset_m)


def step_npc(state: NpcState, target_offset_m: float, dt: float,
             cfg: AdaptationConfig, *, scoring: bool = True) -> NpcState:
    """Move the pacer toward its target under the slew limit; update score."""
    if dt <= 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    if cfg.green_radius_m is None:
        raise ParameterError("green_radius_m must be resolved before stepping")
    max_move = cfg.npc_slew_mps * dt
    delta = target_offset_m - state.offset_m
    delta = min(max(delta, -max_move), max_move)
    offset = state.offset_m + delta
    offset = min(max(offset, -cfg.max_offset_m), cfg.max_offset_m)
    aligned = abs(offset) <= cfg.green_radius_m
    score = state.score + 1 if (aligned and scoring) else state.score
    return NpcState(offset_m=offset, aligned=aligned, score=score)


def random_offset_target(rng: np.random.Generator, cfg: AdaptationConfig) -> float:
    """Uniform draw on [-max_offset, +max_offset] from the seeded generator."""
    return float(rng.uniform(-cfg.max_offset_m, cfg.max_offset_m))


def baseline_view(hr_bpm: float | None, model: ZoneModel,
                  target_zone: int) -> BikeComputerView:
    """Bike-computer readout; HR may be absent during sensor warm-up."""
    if not 1 <= target_zone <= 5:
        raise ParameterError(f"target zone must be 1..5, got {target_zone}")
    current = classify(hr_bpm, model) if hr_bpm is not None else None
    return BikeComputerView(hr_bpm=hr_bpm, current_zone=current,
                            target_zone=target_zone)


class AdaptiveNpcController:
    """HR deviation -> slewed offset; holds at 0 until HR estimates exist."""

    def __init__(self, model: ZoneModel, cfg: AdaptationConfig):
        self.model = model
        self.cfg = resolve_green_radius(model, cfg)
        self.state = NpcState(aligned=True)

    def update(self, hr_bpm: float | None, target_zone: int, dt: float) -> NpcState:
        if hr_bpm is None:
            target = self.state.offset_m
        else:
            target = adaptive_offset(hr_bpm, target_zone, self.model, self.cfg)
        self.state = step_npc(self.state, target, dt, self.cfg, scoring=True)
        return self.state


class RandomNpcController:
    """Seeded random walk between uniform targets; never influenced by HR."""

    def __init__(self, model: ZoneModel, cfg: AdaptationConfig,
                 rng: np.random.Generator):
        self.cfg = resolve_green_radius(model, cfg)
        self._rng = rng
        self.state = NpcState(aligned=True)
        self._elapsed = 0.0
        self._next_draw = 0.0
        self._target = 0.0

    def update(self, hr_bpm: float | None, target_zone: int, dt: float) -> NpcState:
        if self._elapsed >= self._next_draw:
            self._target = random_offset_target(self._rng, self.cfg)
            self._next_draw += self.cfg.random_retarget_s
        self._elapsed += dt
        self.state = step_npc(self.state, self._target, dt, self.cfg,
                              scoring=False)
        return self.state


class BaselineController:
    """No pacer; just the readout."""

    def __init__(self, model: ZoneModel, cfg: AdaptationConfig):
        self.model = model
        self.cfg = resolve_green_radius(model, cfg)

    def update(self, hr_bpm: float | None, target_zone: int,
               dt: float) -> BikeComputerView:
        return baseline_view(hr_bpm, self.model, target_zone)


def make_controller(condition: Condition, model: ZoneModel,
                    cfg: AdaptationConfig, rng: np.random.Generator):
    if condition == Condition.ADAPTIVE_NPC:
        return AdaptiveNpcController(model, cfg)
    if condition == Condition.RANDOM_NPC:
        return RandomNpcController(model, cfg, rng)
    if condition == Condition.BASELINE:
        return BaselineController(model, cfg)
    raise ParameterError(f"unknown condition {condition!r}")
