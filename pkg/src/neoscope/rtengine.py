"""Streaming scorer: ring buffer, per-second quality ticks, latency audit.

One engine owns one stream: pushes land in a 10 s ring at 4 kHz (chunks
are resampled on ingest), ticks snapshot the ring under a short lock and
score outside it, so ingest never waits on feature extraction. Streaming
mode filters causally; the models it loads should be trained the same
way (their metadata records the filtering choice).
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, asdict

import numpy as np

from . import dsp, heartseg, vitals
from .audio import AudioRecording, TARGET_FS, resample_to_4k
from .features import CATALOG_SIZE, catalog, extract
from .training import QualityModel

SCHEMA_VERSION = 1
WINDOW_S = 10
CAPACITY = TARGET_FS * WINDOW_S


@dataclass
class ScoreMessage:
    t: float
    heart_quality: float | None
    lung_quality: float | None
    hr: float | None
    hr_flag: bool
    br: float | None
    br_flag: bool
    latency_ms: float
    window_s: int = WINDOW_S
    warmup: bool = False

    def to_json(self) -> dict:
        doc = {"type": "score", "v": SCHEMA_VERSION}
        doc.update(asdict(self))
        return doc


class RingBuffer:
    """Fixed 10 s sample ring; oldest data falls off the back."""

    def __init__(self, capacity: int = CAPACITY):
        self.capacity = capacity
        self._buf = np.zeros(capacity)
        self._write = 0
        self.filled = 0
        self.total_in = 0

    def push(self, samples: np.ndarray) -> None:
        n = len(samples)
        self.total_in += n
        if n >= self.capacity:
            self._buf[:] = samples[-self.capacity:]
            self._write = 0
            self.filled = self.capacity
            return
        end = self._write + n
        if end <= self.capacity:
            self._buf[self._write:end] = samples
        else:
            split = self.capacity - self._write
            self._buf[self._write:] = samples[:split]
            self._buf[: end - self.capacity] = samples[split:]
        self._write = end % self.capacity
        self.filled = min(self.capacity, self.filled + n)

    def snapshot(self) -> np.ndarray:
        """Chronological copy of the filled region."""
        if self.filled < self.capacity:
            return self._buf[: self.filled].copy()
        return np.concatenate([self._buf[self._write:], self._buf[: self._write]])


def hr_instant(window: np.ndarray, fs: float = TARGET_FS) -> tuple[float, bool]:
    """(bpm, low_confidence) from the trailing 3 s of a heart-band window."""
    seg = window[-int(vitals.HR_WINDOW_S * fs):]
    env = dsp.analytic_envelope(seg)
    ac = dsp.autocorr(env, fs)
    lag_lo = int(np.floor(60.0 / vitals.HR_BAND[1] * fs))
    lag_hi = min(int(np.ceil(60.0 / vitals.HR_BAND[0] * fs)), len(ac.values) - 1)
    band = ac.values[lag_lo : lag_hi + 1]
    k = int(np.argmax(band))
    bpm = float(np.clip(60.0 * fs / (lag_lo + k), *vitals.HR_BAND))
    return bpm, bool(band[k] < vitals.LOW_PERIODICITY)


def br_instant(window: np.ndarray, fs: float = TARGET_FS) -> tuple[float, bool]:
    """(breaths/min, low_confidence) from the trailing 6 s of a lung-band window."""
    seg = window[-int(vitals.BR_WINDOW_S * fs):]
    peaks = heartseg.breath_peaks(seg, fs, vitals.BR_WINDOW_S).times()
    if len(peaks) < 2:
        return vitals.BR_SENTINEL, True
    span = peaks[-1] - peaks[0]
    if span <= 0:
        return vitals.BR_SENTINEL, True
    bpm = float(np.clip(60.0 * (len(peaks) - 1) / span, *vitals.BR_BAND))
    return bpm, False


def score_window(
    window: np.ndarray,
    heart_model: QualityModel,
    lung_model: QualityModel,
) -> dict:
    """Pure scoring of one full 10 s window (causal filtering)."""
    rec = AudioRecording(window, TARGET_FS, recording_id="stream")
    fv = extract(rec, mode="fast", zero_phase=False)
    values = np.nan_to_num(fv.values, nan=0.0)  # slow ids are absent in fast mode
    heart_q = float(heart_model.predict(values)[0])
    lung_q = float(lung_model.predict(values)[0])
    ctx_hb = heartseg.heart_band_of(window, TARGET_FS, zero_phase=False)
    from .audio import band_filter

    lung_band = band_filter(rec, "lung", zero_phase=False).samples
    hr, hr_flag = hr_instant(ctx_hb)
    br, br_flag = br_instant(lung_band)
    return {
        "heart_quality": heart_q,
        "lung_quality": lung_q,
        "hr": hr,
        "hr_flag": hr_flag,
        "br": br,
        "br_flag": br_flag,
    }


class StreamEngine:
    """One live stream: ingest writer + scoring reader over a shared ring."""

    def __init__(self, heart_model: QualityModel, lung_model: QualityModel):
        if heart_model.mode != "fast" or lung_model.mode != "fast":
            raise ValueError("streaming requires fast-mode models")
        from . import _hsmm_kernels

        _hsmm_kernels.warmup()  # pay decoder compilation before the first tick
        self.heart_model = heart_model
        self.lung_model = lung_model
        self.ring = RingBuffer()
        self.lock = threading.Lock()
        self.overruns = 0
        self.markers: list[dict] = []
        self._last_t = -1.0

    def push(self, samples: np.ndarray, fs: float) -> None:
        """Ingest a chunk at any rate >= 4 kHz; resampled per chunk."""
        samples = np.asarray(samples, dtype=float)
        if len(samples) == 0:
            return
        if fs != TARGET_FS:
            rec = AudioRecording(samples, fs)
            samples = resample_to_4k(rec).samples
        if len(samples) > self.ring.capacity:
            self.overruns += 1
        with self.lock:
            self.ring.push(samples)

    def mark(self, label, t: float | None = None) -> dict:
        marker = {"t": self.stream_seconds() if t is None else t, "label": label}
        self.markers.append(marker)
        return marker

    def stream_seconds(self) -> float:
        return self.ring.total_in / TARGET_FS

    def tick(self) -> ScoreMessage:
        """Score the current window; warm-up message until 10 s arrived."""
        t0 = time.perf_counter()
        with self.lock:
            window = self.ring.snapshot()
            t = self.stream_seconds()
        if t <= self._last_t:
            t = np.nextafter(self._last_t, np.inf)  # monotone even without new data
        self._last_t = t
        if len(window) < CAPACITY:
            return ScoreMessage(
                t=t, heart_quality=None, lung_quality=None,
                hr=None, hr_flag=True, br=None, br_flag=True,
                latency_ms=(time.perf_counter() - t0) * 1000.0, warmup=True,
            )
        scores = score_window(window, self.heart_model, self.lung_model)
        return ScoreMessage(
            t=t,
            latency_ms=(time.perf_counter() - t0) * 1000.0,
            **scores,
        )


def bench_features(rec: AudioRecording, repetitions: int = 3) -> dict:
    """Median per-family extraction cost and the fast/full totals.

    Pin the process to one core for stable numbers; the report records
    cost-class expectations next to the measurements.
    """
    per_family: dict[str, list[float]] = {}
    full_totals, fast_totals = [], []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fv = extract(rec, mode="full")
        full_totals.append((time.perf_counter() - t0) * 1000.0)
        for fam, ms in fv.family_times_ms.items():
            per_family.setdefault(fam, []).append(ms)
        t0 = time.perf_counter()
        extract(rec, mode="fast")
        fast_totals.append((time.perf_counter() - t0) * 1000.0)
    classes: dict[str, set] = {}
    for spec in catalog():
        classes.setdefault(spec.family, set()).add(spec.cost_class)
    report = {
        "families": {
            fam: {
                "median_ms": float(np.median(ms)),
                "cost_classes": sorted(classes[fam]),
            }
            for fam, ms in sorted(per_family.items())
        },
        "full_total_ms_median": float(np.median(full_totals)),
        "fast_total_ms_median": float(np.median(fast_totals)),
        "repetitions": repetitions,
        "catalog_size": CATALOG_SIZE,
    }
    covered = set(per_family)
    report["family_coverage"] = sorted(covered) == sorted(classes)
    return report
