"""Per-second heart-rate and breathing-rate estimation plus error analysis.

Heart rate comes from the trailing 3 s envelope autocorrelation (peak
in the 70-220 beats/min band), optionally refined by the duration-HMM
segmentation (rate = inverse mean first-sound spacing). Breathing rate
uses breath peaks in a trailing 6 s window. Every estimate carries a
low-confidence flag so consumers can ignore clinically unusable values.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dsp, heartseg
from .audio import AudioRecording, TARGET_FS

HR_WINDOW_S = 3.0
BR_WINDOW_S = 6.0
HR_BAND = (70.0, 220.0)
BR_BAND = (15.0, 80.0)
LOW_PERIODICITY = 0.3
ACCEPTABLE_ERROR = 5.0  # beats or breaths per minute

BR_SENTINEL = BR_BAND[0]  # reported when fewer than two peaks exist, always flagged


@dataclass
class VitalSeries:
    kind: str  # hr | br
    times: np.ndarray  # seconds from recording start
    values: np.ndarray  # beats or breaths per minute
    flags: np.ndarray  # True = low confidence
    window_s: float
    method: str

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.flags = np.asarray(self.flags, dtype=bool)
        lo, hi = HR_BAND if self.kind == "hr" else BR_BAND
        ok = (self.values >= lo - 1e-9) & (self.values <= hi + 1e-9)
        if not np.all(ok | self.flags):
            raise ValueError(f"unflagged {self.kind} values outside [{lo}, {hi}]")


def _window_band(window: np.ndarray, fs: float, target: str) -> np.ndarray:
    """Zero-phase band view of one trailing window.

    Filtering only the window keeps every estimate a strict function of
    samples up to its own instant while avoiding the group-delay skew a
    causal single-pass filter would add."""
    from .audio import band_filter

    return band_filter(AudioRecording(window, fs), target).samples


def hr_schmidt(rec: AudioRecording) -> VitalSeries:
    """Envelope-autocorrelation heart rate every second (trailing 3 s)."""
    if rec.fs != TARGET_FS:
        raise ValueError(f"expected fs={TARGET_FS}")
    x = rec.samples if rec.band == "heart_band" else np.asarray(rec.samples, dtype=float)
    prefiltered = rec.band == "heart_band"
    if len(x) < HR_WINDOW_S * rec.fs:
        raise dsp.SignalTooShort(f"need at least {HR_WINDOW_S} s")
    times, values, flags = [], [], []
    t = HR_WINDOW_S
    while t <= len(x) / rec.fs + 1e-9:
        window = x[int((t - HR_WINDOW_S) * rec.fs) : int(t * rec.fs)]
        if not prefiltered:
            window = _window_band(window, rec.fs, "heart")
        seg = dsp.analytic_envelope(window)
        ac = dsp.autocorr(seg, rec.fs)
        lag_lo = int(np.floor(60.0 / HR_BAND[1] * rec.fs))
        lag_hi = min(int(np.ceil(60.0 / HR_BAND[0] * rec.fs)), len(ac.values) - 1)
        band = ac.values[lag_lo : lag_hi + 1]
        k = int(np.argmax(band))
        bpm = 60.0 * rec.fs / (lag_lo + k)
        times.append(t)
        values.append(float(np.clip(bpm, *HR_BAND)))
        flags.append(bool(band[k] < LOW_PERIODICITY))
        t += 1.0
    return VitalSeries("hr", times, values, flags, HR_WINDOW_S, "envelope_autocorr")


def hr_springer(rec: AudioRecording, model: heartseg.EmissionModel | None = None) -> VitalSeries:
    """Segmentation-refined heart rate; falls back to the autocorrelation
    estimate (flagged) when a window fails to decode."""
    base = hr_schmidt(rec)
    x = np.asarray(rec.samples, dtype=float)
    prefiltered = rec.band == "heart_band"
    values = base.values.copy()
    flags = base.flags.copy()
    for i, t in enumerate(base.times):
        seg = x[int((t - HR_WINDOW_S) * rec.fs) : int(t * rec.fs)]
        if not prefiltered:
            seg = _window_band(seg, rec.fs, "heart")
        try:
            seq = heartseg.springer_segment(seg, rec.fs, model=model, hr_bpm=values[i])
            onsets = seq.onsets(heartseg.S1)
            if len(onsets) and onsets[0] == 0.0:
                onsets = onsets[1:]  # window opened mid-sound, onset unknown
            if len(onsets) > 2:
                onsets = onsets[:-1]  # final cycle is stretched to the boundary
            if len(onsets) < 2:
                raise heartseg.SegmentationError("fewer than two decoded cycles")
            iv = np.diff(onsets)
            med = float(np.median(iv))
            kept = iv[(iv > 0.7 * med) & (iv < 1.3 * med)]  # drop merged/split cycles
            if len(kept) == 0:
                kept = iv
            bpm = 60.0 / float(np.mean(kept))
            values[i] = float(np.clip(bpm, *HR_BAND))
        except (heartseg.SegmentationError, dsp.SignalTooShort, ValueError):
            flags[i] = True  # keep the autocorrelation estimate, flagged
    return VitalSeries("hr", base.times, values, flags, HR_WINDOW_S, "duration_hmm")


def br_estimate(rec: AudioRecording) -> VitalSeries:
    """Breath rate from inspiration peaks in a trailing 6 s window."""
    if rec.fs != TARGET_FS:
        raise ValueError(f"expected fs={TARGET_FS}")
    x = np.asarray(rec.samples, dtype=float)
    prefiltered = rec.band == "lung_band"
    if len(x) < BR_WINDOW_S * rec.fs:
        raise dsp.SignalTooShort(f"need at least {BR_WINDOW_S} s")
    times, values, flags = [], [], []
    t = BR_WINDOW_S
    while t <= len(x) / rec.fs + 1e-9:
        window = x[int((t - BR_WINDOW_S) * rec.fs) : int(t * rec.fs)]
        if not prefiltered:
            window = _window_band(window, rec.fs, "lung")
        in_win = heartseg.breath_peaks(window, rec.fs, BR_WINDOW_S).times()
        # respiratory-band rhythmicity of the window's power envelope
        env = dsp.compute_envelope(window, "psd_300_450", rec.fs)
        ac = dsp.autocorr(env.values, env.fs)
        lag_lo = int(np.floor(60.0 / BR_BAND[1] * env.fs))
        lag_hi = min(int(np.ceil(60.0 / BR_BAND[0] * env.fs)), len(ac.values) - 1)
        rhythmic = float(np.max(ac.values[lag_lo : lag_hi + 1])) if lag_hi > lag_lo else 0.0
        if len(in_win) < 2:
            times.append(t)
            values.append(BR_SENTINEL)
            flags.append(True)
        else:
            span = in_win[-1] - in_win[0]
            bpm = 60.0 * (len(in_win) - 1) / span if span > 0 else BR_SENTINEL
            times.append(t)
            values.append(float(np.clip(bpm, *BR_BAND)))
            flags.append(bool(rhythmic < LOW_PERIODICITY))
        t += 1.0
    return VitalSeries("br", times, values, flags, BR_WINDOW_S, "band_env_peaks")


# ---------------------------------------------------------------------------
# error analysis against a reference


@dataclass
class VitalErrorReport:
    kind: str
    method: str
    strata: dict[int, dict] = field(default_factory=dict)  # quality -> {mae, pct, n}
    overall_mae: float = float("nan")
    overall_pct_acceptable: float = float("nan")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "method": self.method,
            "overall_mae": self.overall_mae,
            "overall_pct_acceptable": self.overall_pct_acceptable,
            "by_quality": {str(k): v for k, v in sorted(self.strata.items())},
        }

    def table_csv(self) -> str:
        lines = ["quality,mae,pct_acceptable,n"]
        for q in sorted(self.strata):
            s = self.strata[q]
            lines.append(f"{q},{s['mae']:.3f},{s['pct_acceptable']:.3f},{s['n']}")
        return "\n".join(lines) + "\n"


def align_series(est: VitalSeries, ref_times: np.ndarray, ref_values: np.ndarray
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Match estimate instants to 1 Hz reference instants (center alignment)."""
    ref_times = np.asarray(ref_times, dtype=float)
    ref_values = np.asarray(ref_values, dtype=float)
    est_v, ref_v = [], []
    for t, v in zip(est.times, est.values):
        j = int(np.argmin(np.abs(ref_times - t)))
        if abs(ref_times[j] - t) <= 0.5:
            est_v.append(v)
            ref_v.append(ref_values[j])
    if not est_v:
        raise ValueError("estimate and reference series do not overlap")
    return np.asarray(est_v), np.asarray(ref_v)


def vital_error(
    pairs: list[tuple[VitalSeries, np.ndarray, np.ndarray, int]],
    kind: str,
    method: str,
) -> VitalErrorReport:
    """Stratified error table from (series, ref_times, ref_values, quality)."""
    by_q: dict[int, list[float]] = {}
    for est, ref_t, ref_v, quality in pairs:
        ev, rv = align_series(est, ref_t, ref_v)
        errs = np.abs(ev - rv)
        by_q.setdefault(int(quality), []).extend(errs.tolist())
    if not by_q:
        raise ValueError("no overlapping series")
    report = VitalErrorReport(kind=kind, method=method)
    all_errs: list[float] = []
    for q, errs in by_q.items():
        arr = np.asarray(errs)
        report.strata[q] = {
            "mae": float(arr.mean()),
            "pct_acceptable": float(np.mean(arr < ACCEPTABLE_ERROR)),
            "n": int(len(arr)),
        }
        all_errs.extend(errs)
    arr = np.asarray(all_errs)
    report.overall_mae = float(arr.mean())
    report.overall_pct_acceptable = float(np.mean(arr < ACCEPTABLE_ERROR))
    return report


def read_reference_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(t_seconds, hr_bpm, br_bpm) columns from a reference vitals CSV."""
    t, hr, br = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = {"t_seconds", "hr_bpm", "br_bpm"}
        if reader.fieldnames is None or set(reader.fieldnames) != expected:
            raise ValueError(
                f"reference header must be t_seconds,hr_bpm,br_bpm; got {reader.fieldnames}"
            )
        for row in reader:
            t.append(float(row["t_seconds"]))
            hr.append(float(row["hr_bpm"]))
            br.append(float(row["br_bpm"]))
    return np.asarray(t), np.asarray(hr), np.asarray(br)


def write_report(path: str | Path, reports: list[VitalErrorReport]) -> None:
    Path(path).write_text(
        json.dumps([r.to_json() for r in reports], indent=1, sort_keys=True)
    )
