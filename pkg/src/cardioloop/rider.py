"""Simulated cyclist for closing the loop headlessly.

A first-order heart-rate response to pedalling power (rising faster than it
recovers), a flat-road power-to-speed conversion, behaviour policies that
react to each feedback surface, and a synthetic ECG generator slaved to the
model heart rate so the full sensing pipeline can be exercised end to end.
None of the physiological constants here are measured values; they are
conventional defaults and all configurable.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .adaptation import BikeComputerView, NpcState
from .dsp import EcgSample
from .errors import ParameterError


@dataclass(frozen=True)
class RiderModel:
    """First-order HR response: hr_ss = rest + gain * power, asymmetric taus."""

    hr_rest_bpm: float = 60.0
    hr_gain_bpm_per_w: float = 0.30
    tau_up_s: float = 30.0
    tau_down_s: float = 45.0
    p_max_w: float = 400.0
    noise_bpm_sd: float = 1.0

    def __post_init__(self):
        for name in ("hr_rest_bpm", "hr_gain_bpm_per_w", "tau_up_s",
                     "tau_down_s", "p_max_w"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        if self.noise_bpm_sd < 0:
            raise ParameterError("noise_bpm_sd must be >= 0")
        if self.tau_down_s < self.tau_up_s:
            raise ParameterError("tau_down_s must be >= tau_up_s")


def hr_step(hr_bpm: float, power_w: float, dt: float, model: RiderModel,
            rng: np.random.Generator | None = None) -> float:
    """Advance the model heart rate by one step of dt seconds."""
    if dt <= 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    if not 0.0 <= power_w <= model.p_max_w:
        raise ParameterError(f"power {power_w} outside [0, {model.p_max_w}]")
    hr_ss = model.hr_rest_bpm + model.hr_gain_bpm_per_w * power_w
    tau = model.tau_up_s if hr_ss > hr_bpm else model.tau_down_s
    hr = hr_bpm + dt / tau * (hr_ss - hr_bpm)
    if rng is not None and model.noise_bpm_sd > 0:
        hr += model.noise_bpm_sd * math.sqrt(dt) * rng.standard_normal()
    return hr


@dataclass(frozen=True)
class BikePhysics:
    """Flat-road force model: aero drag plus rolling resistance."""

    mass_kg: float = 85.0
    crr: float = 0.005
    cda_m2: float = 0.4
    air_density: float = 1.225
    g: float = 9.81

    def __post_init__(self):
        for name in ("mass_kg", "crr", "cda_m2", "air_density", "g"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")


def required_power(speed_mps: float, physics: BikePhysics) -> float:
    """Steady-state pedalling power needed to hold a speed on the flat."""
    aero = 0.5 * physics.air_density * physics.cda_m2 * speed_mps ** 3
    rolling = physics.crr * physics.mass_kg * physics.g * speed_mps
    return aero + rolling


def _cbrt(x: float) -> float:
    return math.copysign(abs(x) ** (1.0 / 3.0), x)


def power_to_speed(power_w: float, physics: BikePhysics = BikePhysics()) -> float:
    """Unique non-negative speed satisfying the steady-state power balance.

    The balance P = a*v^3 + b*v (a, b > 0) has exactly one real root, given
    in closed form; it reproduces P to well under 0.01 W.
    """
    if power_w < 0:
        raise ParameterError(f"power must be >= 0, got {power_w}")
    if power_w == 0.0:
        return 0.0
    a = 0.5 * physics.air_density * physics.cda_m2
    b = physics.crr * physics.mass_kg * physics.g
    p = b / a
    q = -power_w / a
    disc = math.sqrt(q * q / 4.0 + p ** 3 / 27.0)
    return _cbrt(-q / 2.0 + disc) + _cbrt(-q / 2.0 - disc)


POLICY_KINDS = ("follow_npc", "follow_bike", "constant")


@dataclass(frozen=True)
class RiderPolicy:
    """How the simulated rider converts feedback into pedalling power."""

    kind: str = "follow_npc"
    gain_w_per_m: float = 9.0
    reaction_delay_s: float = 0.75
    zone_step_w: float = 10.0
    constant_power_w: float = 0.0

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ParameterError(
                f"policy kind must be one of {POLICY_KINDS}, got {self.kind!r}")
        if self.gain_w_per_m < 0 or self.reaction_delay_s < 0:
            raise ParameterError("gain and reaction delay must be >= 0")


class PolicyRunner:
    """Stateful wrapper applying one policy tick by tick.

    FollowNpc integrates the NPC offset (positive offset means the pacer is
    ahead, so push harder) acting on feedback ``reaction_delay_s`` old;
    FollowBikeComputer nudges power a fixed step per tick toward the target
    zone; ConstantPower never changes.
    """

    def __init__(self, policy: RiderPolicy, p_max_w: float):
        self.policy = policy
        self.p_max_w = p_max_w
        self._history: deque[tuple[float, float]] = deque()

    def initial_power(self) -> float:
        if self.policy.kind == "constant":
            return min(max(self.policy.constant_power_w, 0.0), self.p_max_w)
        return 0.0

    def _delayed_offset(self, t: float) -> float:
        cutoff = t - self.policy.reaction_delay_s
        chosen = 0.0
        for ht, off in self._history:
            if ht > cutoff:
                break
            chosen = off
        while len(self._history) > 1 and self._history[1][0] <= cutoff:
            self._history.popleft()
        return chosen

    def step(self, t: float, feedback, power_w: float, dt: float) -> float:
        if dt <= 0:
            raise ParameterError(f"dt must be positive, got {dt}")
        kind = self.policy.kind
        if kind == "constant":
            return power_w
        if kind == "follow_npc":
            offset = feedback.offset_m if isinstance(feedback, NpcState) else 0.0
            self._history.append((t, offset))
            power_w += self.policy.gain_w_per_m * self._delayed_offset(t) * dt
        elif kind == "follow_bike":
            if (isinstance(feedback, BikeComputerView)
                    and feedback.current_zone is not None):
                if feedback.current_zone < feedback.target_zone:
                    power_w += self.policy.zone_step_w
                elif feedback.current_zone > feedback.target_zone:
                    power_w -= self.policy.zone_step_w
        return min(max(power_w, 0.0), self.p_max_w)


# PQRST template: (offset from R in seconds, amplitude in mV, sigma in seconds)
ECG_TEMPLATE = (
    (-0.200, 0.15, 0.025),   # P
    (-0.030, -0.12, 0.010),  # Q
    (0.000, 1.00, 0.012),    # R
    (0.030, -0.20, 0.010),   # S
    (0.250, 0.30, 0.040),    # T
)

_TEMPLATE_HALF_S = max(abs(off) + 4.0 * sig for off, _, sig in ECG_TEMPLATE)

SCHEDULE_MIN_BPM = 25.0
SCHEDULE_MAX_BPM = 230.0


def _template_wave(dt: np.ndarray) -> np.ndarray:
    v = np.zeros_like(dt)
    for off, amp, sig in ECG_TEMPLATE:
        v += amp * np.exp(-0.5 * ((dt - off) / sig) ** 2)
    return v


class EcgSynthesizer:
    """Streams synthetic ECG at a given sample rate, slaved to a beat rate.

    Beat times come from integrating the instantaneous rate; each beat stamps
    a fixed PQRST template (sum of five Gaussians, 1 mV R wave) onto the
    sample grid. Because the P wave precedes the beat time, emission lags the
    generation frontier by a little more than the template half-width; call
    ``flush`` at the end of a record to drain the tail.
    """

    def __init__(self, fs: float, *, rng: np.random.Generator | None = None,
                 noise_mv_sd: float = 0.0):
        if fs < 100:
            raise ParameterError(f"fs must be >= 100 Hz, got {fs}")
        if noise_mv_sd < 0:
            raise ParameterError("noise_mv_sd must be >= 0")
        self.fs = fs
        self.noise_mv_sd = noise_mv_sd
        self._rng = rng
        self._lag = int(math.ceil(_TEMPLATE_HALF_S * fs)) + 1
        self._phase = 0.0
        self._next_i = 0       # next sample index to generate
        self._emit_i = 0       # next sample index to emit
        self._buf = np.zeros(0)
        self._buf_start = 0
        self.beat_times: list[float] = []

    def _ensure_buf(self, upto_i: int):
        need = upto_i - self._buf_start + 1
        if need > len(self._buf):
            grown = np.zeros(max(need, 2 * len(self._buf) + 64))
            grown[:len(self._buf)] = self._buf
            self._buf = grown

    def _stamp_beat(self, t_beat: float):
        self.beat_times.append(t_beat)
        i0 = max(0, int(math.ceil((t_beat - _TEMPLATE_HALF_S) * self.fs)))
        i1 = int(math.floor((t_beat + _TEMPLATE_HALF_S) * self.fs))
        i0 = max(i0, self._buf_start)
        self._ensure_buf(i1)
        idx = np.arange(i0, i1 + 1)
        self._buf[i0 - self._buf_start:i1 + 1 - self._buf_start] += \
            _template_wave(idx / self.fs - t_beat)

    def _emit_ready(self) -> tuple[np.ndarray, np.ndarray]:
        last = self._next_i - self._lag  # exclusive
        if last <= self._emit_i:
            return np.empty(0), np.empty(0)
        a = self._emit_i - self._buf_start
        b = last - self._buf_start
        self._ensure_buf(last)
        vs = self._buf[a:b].copy()
        ts = np.arange(self._emit_i, last) / self.fs
        self._buf = self._buf[b:].copy()
        self._buf_start = last
        self._emit_i = last
        if self.noise_mv_sd > 0 and self._rng is not None:
            vs += self._rng.normal(0.0, self.noise_mv_sd, len(vs))
        return ts, vs

    def advance(self, until_t: float, bpm: float) -> tuple[np.ndarray, np.ndarray]:
        """Generate up to ``until_t`` at a constant rate; return ready samples."""
        if not SCHEDULE_MIN_BPM <= bpm <= SCHEDULE_MAX_BPM:
            raise ParameterError(
                f"beat rate {bpm} outside [{SCHEDULE_MIN_BPM}, {SCHEDULE_MAX_BPM}]")
        dphase = bpm / 60.0 / self.fs
        while self._next_i / self.fs < until_t:
            self._phase += dphase
            if self._phase >= 1.0:
                overshoot = (self._phase - 1.0) / (bpm / 60.0)
                self._stamp_beat(self._next_i / self.fs - overshoot)
                self._phase -= 1.0
            self._next_i += 1
        return self._emit_ready()

    def flush(self) -> tuple[np.ndarray, np.ndarray]:
        """Emit everything generated so far."""
        lag, self._lag = self._lag, 0
        try:
            return self._emit_ready()
        finally:
            self._lag = lag


def synth_ecg(hr_schedule, fs: float, duration_s: float, *,
              rng: np.random.Generator | None = None,
              noise_snr_db: float | None = None
              ) -> tuple[list[EcgSample], list[float]]:
    """Batch-generate a synthetic ECG record plus its ground-truth beat times.

    ``hr_schedule`` is either a constant bpm or a callable t -> bpm. When an
    SNR is given, white Gaussian noise is added at that ratio relative to the
    clean record's power.
    """
    if duration_s <= 0:
        raise ParameterError(f"duration must be positive, got {duration_s}")
    schedule = hr_schedule if callable(hr_schedule) else (lambda _t: hr_schedule)
    synth = EcgSynthesizer(fs)
    n = int(round(duration_s * fs))
    parts = []
    for i in range(n):
        parts.append(synth.advance((i + 1) / fs, float(schedule(i / fs))))
    parts.append(synth.flush())
    ts = np.concatenate([p[0] for p in parts])
    vs = np.concatenate([p[1] for p in parts])
    if noise_snr_db is not None:
        if rng is None:
            raise ParameterError("noise_snr_db requires an rng")
        p_signal = float(np.mean(vs ** 2))
        sd = math.sqrt(p_signal / (10.0 ** (noise_snr_db / 10.0)))
        vs = vs + rng.normal(0.0, sd, len(vs))
    samples = [EcgSample(float(t), float(v)) for t, v in zip(ts, vs)]
    return samples, list(synth.beat_times)
