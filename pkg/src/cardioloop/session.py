"""Fixed-tick session state machine and its append-only log.

A session owns the whole loop for one run: zone schedule, DSP pipeline,
condition controller, clock, and the tick records that make up the log. The
clock is an integer tick counter (t = n / tick_hz), so schedule boundaries
land exactly and two runs with the same seeds produce byte-identical logs.

Log files are JSON Lines (UTF-8, LF): a config object first, then one tick
object per tick, then a summary object.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import metrics as _metrics_mod
from .adaptation import (AdaptationConfig, BikeComputerView, Condition,
                         NpcState, make_controller)
from .dsp import DEFAULT_HR_WINDOW_S, EcgPipeline, FilterSpec, NOMINAL_FS_HZ
from .errors import ParameterError, StateError
from .rider import (BikePhysics, EcgSynthesizer, PolicyRunner, RiderModel,
                    RiderPolicy, hr_step, power_to_speed)
from .zones import AthleteProfile, ZoneModel, classify, compute_zone_model

TICK_HZ_MIN = 10
TICK_HZ_MAX = 250

DEFAULT_SCHEDULE = ((1, 120.0), (2, 120.0), (3, 120.0))
DEFAULT_TRAINING_S = 120.0

PHASE_TRAINING = "training"
PHASE_RUNNING = "running"
PHASE_FINISHED = "finished"


@dataclass(frozen=True)
class Seeds:
    adaptation: int = 1
    rider: int = 2
    ecg: int = 3

    @classmethod
    def from_base(cls, seed: int) -> "Seeds":
        return cls(adaptation=seed, rider=seed + 1, ecg=seed + 2)


@dataclass(frozen=True)
class SessionConfig:
    participant_id: str = "anon"
    age: int = 30
    hr_max_formula: str = "tanaka"
    condition: Condition = Condition.ADAPTIVE_NPC
    zone_schedule: tuple = DEFAULT_SCHEDULE
    tick_hz: int = 50
    hr_window_s: float = DEFAULT_HR_WINDOW_S
    training_s: float = DEFAULT_TRAINING_S
    ecg_fs: float = NOMINAL_FS_HZ
    seeds: Seeds = field(default_factory=Seeds)
    adaptation: AdaptationConfig = field(default_factory=AdaptationConfig)

    def __post_init__(self):
        AthleteProfile(self.age, self.hr_max_formula)  # validates
        if not isinstance(self.condition, Condition):
            object.__setattr__(self, "condition", Condition(self.condition))
        if not self.zone_schedule:
            raise ParameterError("zone schedule must not be empty")
        for zone, duration in self.zone_schedule:
            if not 1 <= zone <= 5:
                raise ParameterError(f"scheduled zone {zone} must be 1..5")
            if duration <= 0:
                raise ParameterError("scheduled durations must be positive")
        if not TICK_HZ_MIN <= self.tick_hz <= TICK_HZ_MAX:
            raise ParameterError(
                f"tick_hz must lie in [{TICK_HZ_MIN}, {TICK_HZ_MAX}]")
        if self.hr_window_s <= 0:
            raise ParameterError("hr_window_s must be positive")
        if self.training_s < 0:
            raise ParameterError("training_s must be >= 0")


@dataclass(slots=True)
class LoopState:
    """One tick of engine output, the unit the console and the log consume."""

    t_s: float
    phase: str
    hr_bpm: float | None
    hr_norm: float | None
    current_zone: int | None
    target_zone: int
    remaining_s: float
    condition: str
    npc: NpcState | None
    bike_view: BikeComputerView | None
    speed_mps: float
    end_prompt: bool = False


@dataclass
class SessionLog:
    """Config snapshot, ordered tick records, and the summary metrics."""

    config: SessionConfig
    sim: dict | None
    ticks: list[LoopState]
    summary: dict | None = None


class Session:
    """One run of the loop; a single caller drives it tick by tick.

    Without a rider model the session is sensor-fed: each tick takes the raw
    ECG samples that arrived since the last one. With a rider model the
    session generates its own ECG from the model heart rate; power comes from
    the policy when one is given, otherwise from ``set_power`` (manual play).
    """

    def __init__(self, config: SessionConfig, *,
                 rider: RiderModel | None = None,
                 policy: RiderPolicy | None = None,
                 physics: BikePhysics | None = None):
        self.config = config
        self.zone_model = compute_zone_model(
            AthleteProfile(config.age, config.hr_max_formula))
        self.rider = rider
        self.policy = policy
        self.physics = physics or BikePhysics()
        if policy is not None and rider is None:
            raise ParameterError("a policy needs a rider model")

        self._adapt_rng = np.random.default_rng(config.seeds.adaptation)
        self.controller = make_controller(
            config.condition, self.zone_model, config.adaptation,
            self._adapt_rng)
        self.pipeline = EcgPipeline(
            config.ecg_fs, filter_spec=FilterSpec(fs=config.ecg_fs),
            hr_window_s=config.hr_window_s)

        if rider is not None:
            self._rider_rng = np.random.default_rng(config.seeds.rider)
            self._ecg_rng = np.random.default_rng(config.seeds.ecg)
            self._synth = EcgSynthesizer(config.ecg_fs, rng=self._ecg_rng)
            self._model_hr = rider.hr_rest_bpm
            self._runner = (PolicyRunner(policy, rider.p_max_w)
                            if policy is not None else None)
            self.power_w = (self._runner.initial_power()
                            if self._runner is not None else 0.0)
        else:
            self._synth = None
            self._runner = None
            self.power_w = 0.0

        hz = config.tick_hz
        self._training_ticks = round(config.training_s * hz)
        self._segment_ticks = [round(d * hz) for _, d in config.zone_schedule]
        self._segment_starts = []
        acc = 0
        for n in self._segment_ticks:
            self._segment_starts.append(acc)
            acc += n
        self._running_ticks = acc
        self._tick_count = 0
        self.phase = PHASE_TRAINING if self._training_ticks > 0 else PHASE_RUNNING
        self._last_feedback = None
        self.last_state: LoopState | None = None

    # -- schedule -----------------------------------------------------------

    def target_zone_at(self, run_tick: int) -> int:
        """Scheduled zone for a 0-based running tick index (left-closed)."""
        zone = self.config.zone_schedule[-1][0]
        for (z, _), start, n in zip(self.config.zone_schedule,
                                    self._segment_starts, self._segment_ticks):
            if start <= run_tick < start + n:
                return z
        return zone

    @property
    def total_ticks(self) -> int:
        return self._training_ticks + self._running_ticks

    def set_power(self, power_w: float) -> float:
        """Manual-play power input; returns the clamped value applied."""
        if self.rider is None:
            raise StateError("manual power requires a rider model")
        self.power_w = min(max(power_w, 0.0), self.rider.p_max_w)
        return self.power_w

    # -- tick ---------------------------------------------------------------

    def tick(self, ecg: tuple | None = None) -> LoopState:
        """Advance one tick; sensor-fed sessions pass (ts, vs) arrays."""
        if self.phase == PHASE_FINISHED:
            raise StateError("session already finished")
        cfg = self.config
        hz = cfg.tick_hz
        n = self._tick_count  # ticks completed; this tick covers (n, n+1]/hz
        dt = 1.0 / hz
        t = (n + 1) / hz

        if n >= self.total_ticks:
            self.phase = PHASE_FINISHED
            state = self._assemble(t, n, end_prompt=True)
            self.last_state = state
            self._tick_count += 1
            return state

        if self.rider is not None:
            if self._runner is not None:
                self.power_w = self._runner.step(
                    n / hz, self._last_feedback, self.power_w, dt)
            self._model_hr = hr_step(self._model_hr, self.power_w, dt,
                                     self.rider, self._rider_rng)
            bpm = min(max(self._model_hr, 25.0), 230.0)
            ts, vs = self._synth.advance(t, bpm)
            if len(ts):
                self.pipeline.push_chunk(ts, vs)
        elif ecg is not None:
            ts, vs = ecg
            if len(ts):
                self.pipeline.push_chunk(ts, vs)

        self._tick_count = n + 1
        if self.phase == PHASE_TRAINING and self._tick_count > self._training_ticks:
            self.phase = PHASE_RUNNING
        state = self._assemble(t, n)
        self.last_state = state
        return state

    def finish(self) -> LoopState:
        """End the run now (operator stop); emits the final prompt state."""
        if self.phase == PHASE_FINISHED:
            raise StateError("session already finished")
        n = self._tick_count
        self.phase = PHASE_FINISHED
        state = self._assemble((n + 1) / self.config.tick_hz, n, end_prompt=True)
        self.last_state = state
        self._tick_count = n + 1
        return state

    def _assemble(self, t: float, n: int, end_prompt: bool = False) -> LoopState:
        cfg = self.config
        hz = cfg.tick_hz
        if end_prompt:
            phase = PHASE_FINISHED
            run_tick = min(max(n - self._training_ticks, 0),
                           self._running_ticks - 1)
        elif n < self._training_ticks:
            phase = PHASE_TRAINING
            run_tick = 0
        else:
            phase = PHASE_RUNNING
            run_tick = n - self._training_ticks
        target = self.target_zone_at(run_tick)

        est = self.pipeline.current_hr
        # round at the source so in-memory states match their serialized form
        # and metrics replay exactly from a stored log
        hr = round(est.hr_bpm, 6) if est is not None else None
        hr_norm = (round(hr / self.zone_model.hr_max_bpm, 6)
                   if hr is not None else None)
        current = classify(hr, self.zone_model) if hr is not None else None

        if end_prompt and self._last_feedback is not None:
            feedback = self._last_feedback  # the loop stops; nothing moves
        else:
            feedback = self.controller.update(hr, target, 1.0 / hz)
            self._last_feedback = feedback
        npc = feedback if isinstance(feedback, NpcState) else None
        view = feedback if isinstance(feedback, BikeComputerView) else None

        speed = (power_to_speed(self.power_w, self.physics)
                 if self.rider is not None else 0.0)
        remaining = max((self.total_ticks - (n + 1)) / hz, 0.0)
        return LoopState(
            t_s=t, phase=phase, hr_bpm=hr, hr_norm=hr_norm,
            current_zone=current, target_zone=target, remaining_s=remaining,
            condition=cfg.condition.value, npc=npc, bike_view=view,
            speed_mps=speed, end_prompt=end_prompt)


def start(config: SessionConfig, **kwargs) -> Session:
    """Construct a ready session (zone model computed, pipelines built)."""
    return Session(config, **kwargs)


def run_simulated(config: SessionConfig, rider: RiderModel,
                  policy: RiderPolicy,
                  physics: BikePhysics | None = None) -> SessionLog:
    """Drive a full closed-loop session headlessly and summarise it."""
    session = Session(config, rider=rider, policy=policy, physics=physics)
    ticks: list[LoopState] = []
    while session.phase != PHASE_FINISHED:
        ticks.append(session.tick())
    sim = {"rider": asdict(rider), "policy": asdict(policy),
           "physics": asdict(physics or BikePhysics())}
    log = SessionLog(config=config, sim=sim, ticks=ticks)
    log.summary = _metrics_mod.compute(log).to_record()
    return log


# -- serialization ----------------------------------------------------------


def _round6(x: float | None):
    return None if x is None else round(x, 6)


def config_record(config: SessionConfig, sim: dict | None,
                  zone_model: ZoneModel) -> dict:
    from .adaptation import resolve_green_radius
    resolved = resolve_green_radius(zone_model, config.adaptation)
    rec = {
        "type": "config",
        "participant_id": config.participant_id,
        "age": config.age,
        "hr_max_formula": config.hr_max_formula,
        "condition": config.condition.value,
        "zone_schedule": [[z, d] for z, d in config.zone_schedule],
        "tick_hz": config.tick_hz,
        "hr_window_s": config.hr_window_s,
        "training_s": config.training_s,
        "ecg_fs": config.ecg_fs,
        "seeds": asdict(config.seeds),
        "adaptation": asdict(config.adaptation),
        "hr_max_bpm": _round6(zone_model.hr_max_bpm),
        "zone_boundaries": [_round6(b) for b in zone_model.boundaries],
        # display geometry for consoles, resolved like the controllers do
        "green_radius_m": _round6(resolved.green_radius_m),
        "max_offset_m": config.adaptation.max_offset_m,
        "p_max_w": (sim or {}).get("rider", {}).get("p_max_w",
                                                    RiderModel().p_max_w),
    }
    if sim is not None:
        rec["sim"] = sim
    return rec


def tick_record(state: LoopState) -> dict:
    npc = None
    if state.npc is not None:
        npc = {"offset_m": _round6(state.npc.offset_m),
               "aligned": state.npc.aligned, "score": state.npc.score}
    view = None
    if state.bike_view is not None:
        view = {"hr_bpm": _round6(state.bike_view.hr_bpm),
                "current_zone": state.bike_view.current_zone,
                "target_zone": state.bike_view.target_zone}
    return {
        "type": "tick",
        "t_s": _round6(state.t_s),
        "phase": state.phase,
        "hr_bpm": _round6(state.hr_bpm),
        "hr_norm": _round6(state.hr_norm),
        "current_zone": state.current_zone,
        "target_zone": state.target_zone,
        "remaining_s": _round6(state.remaining_s),
        "condition": state.condition,
        "npc": npc,
        "bike_view": view,
        "speed_mps": _round6(state.speed_mps),
        "end_prompt": state.end_prompt,
    }


def state_from_record(rec: dict) -> LoopState:
    npc = None
    if rec.get("npc") is not None:
        r = rec["npc"]
        npc = NpcState(offset_m=r["offset_m"], aligned=r["aligned"],
                       score=r["score"])
    view = None
    if rec.get("bike_view") is not None:
        r = rec["bike_view"]
        view = BikeComputerView(hr_bpm=r["hr_bpm"],
                                current_zone=r["current_zone"],
                                target_zone=r["target_zone"])
    return LoopState(
        t_s=rec["t_s"], phase=rec["phase"], hr_bpm=rec.get("hr_bpm"),
        hr_norm=rec.get("hr_norm"), current_zone=rec.get("current_zone"),
        target_zone=rec["target_zone"], remaining_s=rec["remaining_s"],
        condition=rec["condition"], npc=npc, bike_view=view,
        speed_mps=rec.get("speed_mps", 0.0),
        end_prompt=rec.get("end_prompt", False))


def config_from_record(rec: dict) -> tuple[SessionConfig, dict | None]:
    config = SessionConfig(
        participant_id=rec["participant_id"],
        age=rec["age"],
        hr_max_formula=rec["hr_max_formula"],
        condition=Condition(rec["condition"]),
        zone_schedule=tuple((z, d) for z, d in rec["zone_schedule"]),
        tick_hz=rec["tick_hz"],
        hr_window_s=rec["hr_window_s"],
        training_s=rec["training_s"],
        ecg_fs=rec.get("ecg_fs", NOMINAL_FS_HZ),
        seeds=Seeds(**rec["seeds"]),
        adaptation=AdaptationConfig(**rec["adaptation"]),
    )
    return config, rec.get("sim")


def dumps_line(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def save_log(log: SessionLog, path) -> None:
    zone_model = compute_zone_model(
        AthleteProfile(log.config.age, log.config.hr_max_formula))
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(dumps_line(config_record(log.config, log.sim, zone_model)))
        fh.write("\n")
        for state in log.ticks:
            fh.write(dumps_line(tick_record(state)))
            fh.write("\n")
        if log.summary is not None:
            fh.write(dumps_line({"type": "summary", **log.summary}))
            fh.write("\n")


class LogParseError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def load_log(path) -> SessionLog:
    config = None
    sim = None
    ticks: list[LoopState] = []
    summary = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogParseError(line_no, f"invalid JSON ({exc.msg})") from exc
            kind = rec.get("type")
            if kind == "config":
                try:
                    config, sim = config_from_record(rec)
                except (KeyError, TypeError, ParameterError) as exc:
                    raise LogParseError(line_no, f"bad config record: {exc}")
            elif kind == "tick":
                if config is None:
                    raise LogParseError(line_no, "tick before config record")
                try:
                    ticks.append(state_from_record(rec))
                except (KeyError, TypeError) as exc:
                    raise LogParseError(line_no, f"bad tick record: {exc}")
            elif kind == "summary":
                summary = {k: v for k, v in rec.items() if k != "type"}
            else:
                raise LogParseError(line_no, f"unknown record type {kind!r}")
    if config is None:
        raise LogParseError(0, "no config record found")
    return SessionLog(config=config, sim=sim, ticks=ticks, summary=summary)
