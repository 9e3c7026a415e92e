"""Streaming ECG pipeline: band-pass filter, QRS detection, heart rate.

The chain is filter -> detect -> estimate. Each stage is a fold over an
ordered sample stream with private state; feeding a record one sample at a
time or all at once produces identical output. Stages are not shareable
between concurrent sessions.

The detector follows the Hamilton / Pan-Tompkins family: rectified first
difference, short moving-average integration, then an adaptive threshold
maintained from running buffers of recent QRS and noise peak heights, with a
refractory lockout and an RR-based search-back for missed beats.
"""

from __future__ import annotations

import csv
import json
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, StreamError

NOMINAL_FS_HZ = 130.0

HR_VALID_MIN_BPM = 25.0
HR_VALID_MAX_BPM = 230.0

# Trailing mean-RR window. Short enough that the control loop is not fighting
# a stale estimate, long enough to hold several beats at training heart rates.
DEFAULT_HR_WINDOW_S = 3.0


@dataclass(frozen=True, slots=True)
class EcgSample:
    """One raw electrode reading: seconds since stream start, millivolts."""

    t: float
    v: float

    def __post_init__(self):
        if not (math.isfinite(self.t) and self.t >= 0.0):
            raise ParameterError(f"sample time must be finite and >= 0, got {self.t}")
        if not math.isfinite(self.v):
            raise ParameterError(f"sample value must be finite, got {self.v}")


@dataclass(frozen=True)
class FilterSpec:
    """Band edges and length of the linear-phase band-pass."""

    f_lo: float = 3.0
    f_hi: float = 45.0
    fs: float = NOMINAL_FS_HZ
    n_taps: int = 129

    def __post_init__(self):
        if not 0.0 < self.f_lo < self.f_hi < self.fs / 2.0:
            raise ParameterError(
                f"band edges must satisfy 0 < f_lo < f_hi < fs/2, "
                f"got ({self.f_lo}, {self.f_hi}) at fs={self.fs}"
            )
        if self.n_taps < 3 or self.n_taps % 2 == 0:
            raise ParameterError(f"n_taps must be odd and >= 3, got {self.n_taps}")

    @property
    def group_delay_s(self) -> float:
        return (self.n_taps - 1) / 2.0 / self.fs

    @property
    def mid_band_hz(self) -> float:
        return (self.f_lo + self.f_hi) / 2.0


def design_bandpass(spec: FilterSpec) -> np.ndarray:
    """Hamming-windowed-sinc band-pass coefficients, unit gain at mid-band.

    Built as the difference of two windowed-sinc low-passes, so the taps are
    symmetric (exact linear phase) and DC is rejected by construction.
    """
    n = spec.n_taps
    k = np.arange(n) - (n - 1) / 2.0

    def lowpass(fc: float) -> np.ndarray:
        return 2.0 * fc / spec.fs * np.sinc(2.0 * fc * k / spec.fs)

    h = (lowpass(spec.f_hi) - lowpass(spec.f_lo)) * np.hamming(n)
    h /= np.abs(frequency_response(h, [spec.mid_band_hz], spec.fs))[0]
    return h


def frequency_response(coeffs: np.ndarray, freqs_hz, fs: float) -> np.ndarray:
    """Complex response H(f) of an FIR, evaluated by direct summation."""
    coeffs = np.asarray(coeffs, dtype=float)
    freqs = np.atleast_1d(np.asarray(freqs_hz, dtype=float))
    k = np.arange(len(coeffs))
    phases = np.exp(-2j * np.pi * np.outer(freqs, k) / fs)
    return phases @ coeffs


@dataclass(slots=True)
class FilteredChunk:
    """Contiguous filtered samples; ``reset`` tells the detector to restart."""

    ts: np.ndarray
    vs: np.ndarray
    reset: bool = False


class BandpassFilter:
    """Causal streaming FIR with group-delay-compensated timestamps.

    Keeps the last ``n_taps - 1`` inputs as state. Output timestamps are input
    timestamps minus the group delay, and the first ``(n_taps - 1) / 2``
    outputs after a (re)start are suppressed so emitted times never precede
    the stream start. A gap of more than ``max_gap_samples`` nominal sample
    intervals restarts the filter and flags the next chunk so downstream
    stages drop their adaptive state.
    """

    def __init__(self, spec: FilterSpec, coeffs: np.ndarray | None = None,
                 max_gap_samples: int = 5):
        self.spec = spec
        self._b = np.asarray(coeffs if coeffs is not None else design_bandpass(spec),
                             dtype=float)
        if len(self._b) != spec.n_taps:
            raise ParameterError("coefficient count does not match spec.n_taps")
        self._max_gap_s = max_gap_samples / spec.fs
        self._delay_s = spec.group_delay_s
        self._suppress = (spec.n_taps - 1) // 2
        self._tail = np.zeros(spec.n_taps - 1)
        self._to_suppress = self._suppress
        self._prev_t: float | None = None
        self._pending_reset = False

    def _restart(self):
        self._tail[:] = 0.0
        self._to_suppress = self._suppress
        self._pending_reset = True

    def push_chunk(self, ts: np.ndarray, vs: np.ndarray) -> list[FilteredChunk]:
        """Filter a batch of samples; returns zero or more output chunks."""
        ts = np.asarray(ts, dtype=float)
        vs = np.asarray(vs, dtype=float)
        if ts.shape != vs.shape:
            raise ParameterError("timestamp and value arrays must match in length")
        n = ts.size
        if n == 0:
            return []

        gap_idx = ()
        prev = self._prev_t
        if n <= 32:  # per-tick chunks: plain loop beats array ops
            t0 = ts[0]
            if prev is not None and t0 < prev:
                raise StreamError(f"timestamp regression at t={t0}")
            if prev is not None and t0 - prev > self._max_gap_s:
                gap_idx = (0,)
            for i in range(1, n):
                dt = ts[i] - ts[i - 1]
                if dt < 0.0:
                    raise StreamError(f"timestamp regression at t={ts[i]}")
                if dt > self._max_gap_s:
                    gap_idx = (*gap_idx, i)
        else:
            dts = np.diff(ts, prepend=prev if prev is not None else ts[0])
            if np.any(dts < 0.0):
                bad = float(ts[int(np.argmax(dts < 0.0))])
                raise StreamError(f"timestamp regression at t={bad}")
            gap_idx = tuple(np.flatnonzero(dts > self._max_gap_s))
        self._prev_t = float(ts[-1])

        if not gap_idx:
            chunk = self._run_segment(ts, vs)
            return [chunk] if chunk is not None else []
        out: list[FilteredChunk] = []
        start = 0
        for cut in (*gap_idx, n):
            if cut > start:
                chunk = self._run_segment(ts[start:cut], vs[start:cut])
                if chunk is not None:
                    out.append(chunk)
            if cut < n:
                self._restart()
            start = cut
        return out

    def _run_segment(self, ts: np.ndarray, vs: np.ndarray) -> FilteredChunk | None:
        # Direct convolution against the carried tail: each output is one dot
        # product over its own window, so chunk boundaries cannot change it.
        x = np.concatenate((self._tail, vs))
        ys = np.convolve(x, self._b, mode="valid")
        self._tail = x[-len(self._tail):].copy()
        skip = min(self._to_suppress, len(ys))
        self._to_suppress -= skip
        if skip == len(ys):
            return None
        chunk = FilteredChunk(ts[skip:] - self._delay_s, ys[skip:], self._pending_reset)
        self._pending_reset = False
        return chunk

    def push(self, sample: EcgSample) -> list[FilteredChunk]:
        return self.push_chunk(np.array([sample.t]), np.array([sample.v]))


@dataclass(frozen=True, slots=True)
class RPeak:
    """A detected beat: time of the R wave and its filtered amplitude."""

    t: float
    amplitude: float


class QrsDetector:
    """Streaming QRS detector with an adaptive QRS/noise threshold.

    Constants are configurable; the defaults (threshold coefficient 0.3125,
    200 ms refractory, 80 ms integration window, peak buffers of length 8,
    search-back at 1.5x the running mean RR) are the conventional values for
    this detector family. During the first ``learn_s`` after a (re)start,
    peaks only seed the noise estimate and nothing is emitted.
    """

    def __init__(self, fs: float, *, th_coeff: float = 0.3125,
                 refractory_s: float = 0.200, integration_s: float = 0.080,
                 buffer_len: int = 8, searchback_factor: float = 1.5,
                 learn_s: float = 1.0):
        if fs <= 0:
            raise ParameterError(f"fs must be positive, got {fs}")
        self.fs = fs
        self.th_coeff = th_coeff
        self.refractory_s = refractory_s
        self.searchback_factor = searchback_factor
        self.learn_s = learn_s
        self._win = max(1, round(integration_s * fs))
        # R waves sit within roughly one integration window plus the QRS
        # width before the integrated peak.
        self._lookback_s = integration_s + 0.060
        self._hist_len = int(self._lookback_s * fs) + 2
        self._buffer_len = buffer_len
        self.reset()

    def reset(self):
        """Drop all adaptive state (also the divergence recovery path)."""
        self._prev_v: float | None = None
        self._ring = deque([0.0] * self._win, maxlen=self._win)
        self._ma_sum = 0.0
        self._ma2 = self._ma1 = 0.0
        self._t1: float | None = None
        self._hist: deque[tuple[float, float]] = deque(maxlen=self._hist_len)
        self._pending: tuple[float, float, float, float] | None = None
        self._qrs_levels: deque[float] = deque(maxlen=self._buffer_len)
        self._noise_levels: deque[float] = deque(maxlen=self._buffer_len)
        self._rr: deque[float] = deque(maxlen=self._buffer_len)
        self._rr_mean: float | None = None
        self._threshold = 0.0
        self._last_ma_t: float | None = None
        self._last_r_t: float | None = None
        self._rejected: list[tuple[float, float, float, float]] = []
        self._sb_tried = 0
        self._learn_until: float | None = None

    def _update_threshold(self):
        noise = (sum(self._noise_levels) / len(self._noise_levels)
                 if self._noise_levels else 0.0)
        qrs = (sum(self._qrs_levels) / len(self._qrs_levels)
               if self._qrs_levels else 0.0)
        th = noise + self.th_coeff * (qrs - noise)
        if not math.isfinite(th) or th < 0.0:
            # divergence: drop back to the initial threshold state
            self._qrs_levels.clear()
            self._noise_levels.clear()
            self._threshold = 0.0
        else:
            self._threshold = th

    def _locate_r(self, ma_t: float) -> tuple[float, float]:
        lo = ma_t - self._lookback_s
        best_t, best_v = self._hist[-1]
        best_mag = -1.0
        for t, v in self._hist:
            if t < lo:
                continue
            mag = abs(v)
            if mag > best_mag:
                best_mag, best_t, best_v = mag, t, v
        return best_t, best_v

    def _accept(self, ma_t: float, level: float, r_t: float, r_amp: float,
                out: list[RPeak]):
        out.append(RPeak(r_t, r_amp))
        if self._last_r_t is not None:
            rr = r_t - self._last_r_t
            if rr <= 3.0:  # keep pauses from inflating the search-back horizon
                self._rr.append(rr)
                self._rr_mean = sum(self._rr) / len(self._rr)
        self._last_r_t = r_t
        self._last_ma_t = ma_t
        self._qrs_levels.append(level)
        self._update_threshold()
        self._rejected = [c for c in self._rejected if c[0] > ma_t]
        self._sb_tried = 0

    def _classify(self, cand: tuple[float, float, float, float],
                  now_t: float, out: list[RPeak]):
        ma_t, level, r_t, r_amp = cand
        if self._learn_until is not None and now_t < self._learn_until:
            self._noise_levels.append(level)
            self._update_threshold()
            return
        refractory_ok = (self._last_r_t is None
                         or r_t - self._last_r_t > self.refractory_s)
        if level > self._threshold and refractory_ok:
            self._accept(ma_t, level, r_t, r_amp, out)
        else:
            self._noise_levels.append(level)
            self._update_threshold()
            if refractory_ok:
                self._rejected.append(cand)
                if len(self._rejected) > 128:
                    del self._rejected[:64]
                    self._sb_tried = max(0, self._sb_tried - 64)

    def _search_back(self, out: list[RPeak]):
        threshold = 0.5 * self._threshold
        best = None
        for cand in self._rejected:
            ma_t, level, r_t, r_amp = cand
            if r_t - self._last_r_t <= self.refractory_s:
                continue
            if level > threshold and (best is None or level > best[1]):
                best = cand
        if best is not None:
            self._accept(*best, out)
        else:
            self._sb_tried = len(self._rejected)

    def push_chunk(self, chunk: FilteredChunk) -> list[RPeak]:
        if chunk.reset:
            self.reset()
        out: list[RPeak] = []
        ts = chunk.ts.tolist()
        vs = chunk.vs.tolist()
        hist = self._hist
        ring = self._ring
        win = self._win
        hold_off = self.refractory_s
        prev = self._prev_v
        ma_sum = self._ma_sum
        ma1, ma2, t1 = self._ma1, self._ma2, self._t1
        for t, v in zip(ts, vs):
            if self._learn_until is None:
                self._learn_until = t + self.learn_s
            hist.append((t, v))
            if prev is None:
                prev = v
                continue
            d = abs(v - prev)
            prev = v
            ma_sum += d - ring[0]
            ring.append(d)
            ma = ma_sum / win
            # A candidate is the largest integrated local maximum within a
            # hold-off span; classification happens once the span expires.
            pending = self._pending
            if pending is not None and t - pending[0] > hold_off:
                self._classify(pending, t, out)
                pending = self._pending = None
            if t1 is not None and ma1 > ma2 and ma1 > ma:
                if pending is None or ma1 > pending[1]:
                    self._pending = (t1, ma1, *self._locate_r(t1))
            ma2, ma1, t1 = ma1, ma, t
            last_ma_t = self._last_ma_t
            if (self._rr_mean is not None and last_ma_t is not None
                    and t - last_ma_t > self.searchback_factor * self._rr_mean
                    and len(self._rejected) > self._sb_tried):
                self._search_back(out)
        self._prev_v = prev
        self._ma_sum = ma_sum
        self._ma1, self._ma2, self._t1 = ma1, ma2, t1
        return out

    def push(self, t: float, v: float, reset: bool = False) -> list[RPeak]:
        return self.push_chunk(FilteredChunk(np.array([t]), np.array([v]), reset))


@dataclass(frozen=True, slots=True)
class HrEstimate:
    """Mean heart rate over the trailing window, stamped at the newest beat."""

    t: float
    hr_bpm: float
    n_beats: int


class HrEstimator:
    """Turns R peaks into held mean-HR estimates.

    One estimate per new peak: 60 / mean(RR) over the trailing window, after
    discarding RR intervals outside the plausible [25, 230] bpm band. Nothing
    is emitted before ``warmup_s`` so start-up transients never reach the
    controller; between peaks the last estimate is held on ``current``.
    """

    def __init__(self, window_s: float = DEFAULT_HR_WINDOW_S, *,
                 hr_min_bpm: float = HR_VALID_MIN_BPM,
                 hr_max_bpm: float = HR_VALID_MAX_BPM,
                 warmup_s: float | None = None):
        if window_s <= 0:
            raise ParameterError(f"window_s must be positive, got {window_s}")
        self.window_s = window_s
        self.warmup_s = window_s if warmup_s is None else warmup_s
        self._rr_min = 60.0 / hr_max_bpm
        self._rr_max = 60.0 / hr_min_bpm
        self._peaks: deque[float] = deque()
        self.current: HrEstimate | None = None

    def reset(self):
        self._peaks.clear()
        self.current = None

    def push(self, peak: RPeak) -> HrEstimate | None:
        t = peak.t
        self._peaks.append(t)
        cutoff = t - self.window_s
        while self._peaks[0] < cutoff:
            self._peaks.popleft()
        if t < self.warmup_s or len(self._peaks) < 2:
            return None
        times = list(self._peaks)
        rrs = [b - a for a, b in zip(times, times[1:])
               if self._rr_min <= b - a <= self._rr_max]
        if not rrs:
            return None
        estimate = HrEstimate(t, 60.0 / (sum(rrs) / len(rrs)), len(rrs))
        self.current = estimate
        return estimate


class EcgPipeline:
    """filter -> detect -> estimate, wired together for one session.

    ``push_chunk`` accepts raw timestamp/value arrays and returns the newly
    detected peaks and HR estimates; ``current_hr`` holds the latest estimate
    between beats. The warm-up for HR estimates is the larger of the HR
    window and the filter group delay.
    """

    def __init__(self, fs: float = NOMINAL_FS_HZ, *,
                 filter_spec: FilterSpec | None = None,
                 hr_window_s: float = DEFAULT_HR_WINDOW_S,
                 detector_kwargs: dict | None = None):
        spec = filter_spec or FilterSpec(fs=fs)
        if spec.fs != fs:
            raise ParameterError("filter spec fs does not match pipeline fs")
        self.spec = spec
        self.filter = BandpassFilter(spec)
        self.detector = QrsDetector(fs, **(detector_kwargs or {}))
        self.estimator = HrEstimator(
            hr_window_s, warmup_s=max(hr_window_s, spec.group_delay_s))

    @property
    def current_hr(self) -> HrEstimate | None:
        return self.estimator.current

    def push_chunk(self, ts, vs) -> tuple[list[RPeak], list[HrEstimate]]:
        peaks: list[RPeak] = []
        estimates: list[HrEstimate] = []
        for chunk in self.filter.push_chunk(ts, vs):
            if chunk.reset:
                self.estimator.reset()
            for peak in self.detector.push_chunk(chunk):
                peaks.append(peak)
                est = self.estimator.push(peak)
                if est is not None:
                    estimates.append(est)
        return peaks, estimates

    def push_samples(self, samples) -> tuple[list[RPeak], list[HrEstimate]]:
        ts = np.array([s.t for s in samples])
        vs = np.array([s.v for s in samples])
        return self.push_chunk(ts, vs)


def read_ecg_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``t,v`` CSV (seconds, millivolts) into arrays."""
    ts: list[float] = []
    vs: list[float] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:2]] != ["t", "v"]:
            raise ParameterError(f"{path}: expected CSV header 't,v'")
        for row in reader:
            if not row:
                continue
            ts.append(float(row[0]))
            vs.append(float(row[1]))
    return np.asarray(ts), np.asarray(vs)


def write_ecg_csv(path, ts, vs):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("t,v\n")
        for t, v in zip(ts, vs):
            fh.write(f"{t:.6f},{v:.6f}\n")


def write_peaks_jsonl(path, peaks: list[RPeak]):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        for p in peaks:
            fh.write(json.dumps({"t": round(p.t, 6),
                                 "amplitude": round(p.amplitude, 6)}) + "\n")


def write_hr_jsonl(path, estimates: list[HrEstimate]):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        for e in estimates:
            fh.write(json.dumps({"t": round(e.t, 6),
                                 "hr_bpm": round(e.hr_bpm, 6)}) + "\n")


def detect_batch(ts, vs, fs: float | None = None, *,
                 hr_window_s: float = DEFAULT_HR_WINDOW_S
                 ) -> tuple[list[RPeak], list[HrEstimate]]:
    """One-shot batch run of the full pipeline over a recorded trace."""
    ts = np.asarray(ts, dtype=float)
    if fs is None:
        if ts.size < 2:
            raise ParameterError("cannot infer fs from fewer than two samples")
        fs = 1.0 / float(np.median(np.diff(ts)))
    pipeline = EcgPipeline(fs, hr_window_s=hr_window_s)
    return pipeline.push_chunk(ts, np.asarray(vs, dtype=float))


def infer_fs(ts) -> float:
    ts = np.asarray(ts, dtype=float)
    if ts.size < 2:
        raise ParameterError("cannot infer fs from fewer than two samples")
    return 1.0 / float(np.median(np.diff(ts)))
