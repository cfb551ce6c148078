"""Recording ingest: WAV I/O, rate conversion, band splitting, segmentation.

All chest-sound processing downstream assumes 4 kHz mono in [-1, 1]. The
heart band is 50-250 Hz, the lung band 200-1000 Hz, both 4th-order
Butterworth bandpasses. Offline paths filter forward-backward so envelope
timing is not phase-shifted; the streaming engine requests causal mode.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import butter, firwin, kaiserord, resample_poly, sosfilt, sosfiltfilt

TARGET_FS = 4000
SEGMENT_SECONDS = 10
HEART_BAND = (50.0, 250.0)
LUNG_BAND = (200.0, 1000.0)

# anti-alias FIR: keep 1900 Hz within 1 dB, suppress above 2080 Hz by >= 30 dB
_AA_PASS_HZ = 1900.0
_AA_STOP_HZ = 2080.0
_AA_RIPPLE_DB = 60.0


class AudioIOError(RuntimeError):
    """Unreadable, malformed, or unsupported audio container."""


class ResampleError(ValueError):
    """Requested conversion is outside the supported direction (no upsampling)."""


class SegmentBoundsError(ValueError):
    """Segment window falls outside the recording."""


@dataclass
class AudioRecording:
    """Mono sample buffer with identity and band provenance."""

    samples: np.ndarray
    fs: float
    patient_id: str = ""
    recording_id: str = ""
    band: str = "raw"  # raw | heart_band | lung_band
    start_offset: float = 0.0

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=float).ravel()
        if self.fs <= 0:
            raise ValueError(f"fs must be positive, got {self.fs}")
        if self.samples.size < 1:
            raise ValueError("recording must contain at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("recording contains non-finite samples")
        if self.band not in ("raw", "heart_band", "lung_band"):
            raise ValueError(f"unknown band tag: {self.band!r}")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.fs


@dataclass
class ManifestEntry:
    recording_id: str
    patient_id: str
    path: str
    target: str  # heart | lung
    label: int | None = None


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for e in self.entries:
            if e.recording_id in seen:
                raise ValueError(f"duplicate recording_id: {e.recording_id}")
            seen.add(e.recording_id)
            if e.target not in ("heart", "lung"):
                raise ValueError(f"bad target {e.target!r} for {e.recording_id}")
            if e.label is not None and e.label not in (1, 2, 3, 4, 5):
                raise ValueError(f"label out of range for {e.recording_id}: {e.label}")


def load_wav(path: str | Path, patient_id: str = "", recording_id: str = "") -> AudioRecording:
    """Read a RIFF WAV (PCM16 or float32), normalized to [-1, 1].

    Stereo input keeps the first channel; more channels are rejected as
    ambiguous.
    """
    path = Path(path)
    if not path.exists():
        raise AudioIOError(f"no such file: {path}")
    try:
        fs, data = wavfile.read(path)
    except Exception as exc:
        raise AudioIOError(f"malformed container: {path} ({exc})") from exc
    if data.ndim == 2:
        if data.shape[1] > 2:
            raise AudioIOError(f"{data.shape[1]}-channel file is ambiguous: {path}")
        data = data[:, 0]
    if data.dtype == np.int16:
        samples = data.astype(float) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(float) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = np.clip(data.astype(float), -1.0, 1.0)
    else:
        raise AudioIOError(f"unsupported encoding {data.dtype} in {path}")
    if samples.size == 0:
        raise AudioIOError(f"empty audio payload: {path}")
    return AudioRecording(
        samples=samples,
        fs=float(fs),
        patient_id=patient_id,
        recording_id=recording_id or path.stem,
    )


def save_wav(path: str | Path, rec: AudioRecording) -> None:
    """Write as PCM16; samples are clipped to full scale."""
    pcm = np.clip(rec.samples, -1.0, 1.0)
    wavfile.write(Path(path), int(rec.fs), (pcm * 32767.0).astype(np.int16))


@lru_cache(maxsize=16)
def _antialias_fir(up: int, down: int, in_fs: int) -> np.ndarray:
    rate = in_fs * up
    width = (_AA_STOP_HZ - _AA_PASS_HZ) / (rate / 2.0)
    numtaps, beta = kaiserord(_AA_RIPPLE_DB, width)
    numtaps |= 1  # symmetric zero-phase filter
    cutoff = (_AA_PASS_HZ + _AA_STOP_HZ) / rate  # normalized to Nyquist = 1
    return firwin(numtaps, cutoff, window=("kaiser", beta)) * up


def resample_to_4k(rec: AudioRecording) -> AudioRecording:
    """Polyphase resample to 4 kHz with a Kaiser anti-alias lowpass."""
    if rec.fs < TARGET_FS:
        raise ResampleError(f"upsampling unsupported: fs={rec.fs} < {TARGET_FS}")
    if rec.fs == TARGET_FS:
        return replace(rec, samples=rec.samples.copy())
    frac = Fraction(TARGET_FS, int(round(rec.fs)))
    up, down = frac.numerator, frac.denominator
    h = _antialias_fir(up, down, int(round(rec.fs)))
    out = resample_poly(rec.samples, up, down, window=h)
    return replace(rec, samples=out, fs=float(TARGET_FS))


@lru_cache(maxsize=32)
def _band_sos(lo: float, hi: float, fs: float, order: int = 4) -> np.ndarray:
    return butter(order, [lo, hi], btype="bandpass", fs=fs, output="sos")


def band_filter(rec: AudioRecording, target: str, zero_phase: bool = True) -> AudioRecording:
    """Split into the heart (50-250 Hz) or lung (200-1000 Hz) band.

    `zero_phase=False` selects the causal single-pass variant used by the
    streaming engine; offline extraction keeps the default. Works at any
    rate whose Nyquist clears the band's upper edge (the pipeline runs
    it at 4 kHz).
    """
    if target == "heart":
        lo, hi = HEART_BAND
        tag = "heart_band"
    elif target == "lung":
        lo, hi = LUNG_BAND
        tag = "lung_band"
    else:
        raise ValueError(f"unknown band target: {target!r}")
    if rec.fs <= 2 * hi:
        raise ValueError(f"fs={rec.fs} cannot carry the {lo}-{hi} Hz band")
    sos = _band_sos(lo, hi, rec.fs)
    out = sosfiltfilt(sos, rec.samples) if zero_phase else sosfilt(sos, rec.samples)
    return replace(rec, samples=out, band=tag)


def segment_10s(rec: AudioRecording, start: float) -> AudioRecording:
    """Cut a 10 s window beginning `start` seconds into the recording."""
    if rec.fs != TARGET_FS:
        raise ValueError(f"segment_10s expects fs={TARGET_FS}, got {rec.fs}")
    i0 = int(round(start * rec.fs))
    i1 = i0 + SEGMENT_SECONDS * TARGET_FS
    if start < 0 or i1 > len(rec.samples):
        raise SegmentBoundsError(
            f"window [{start}, {start + SEGMENT_SECONDS}] s outside recording "
            f"of {rec.duration:.3f} s"
        )
    return replace(
        rec,
        samples=rec.samples[i0:i1].copy(),
        start_offset=rec.start_offset + start,
    )


def peak_normalize(samples: np.ndarray) -> np.ndarray:
    """Scale to max |sample| = 1; silence passes through unchanged."""
    peak = float(np.max(np.abs(samples))) if len(samples) else 0.0
    if peak <= 0.0:
        return np.asarray(samples, dtype=float).copy()
    return np.asarray(samples, dtype=float) / peak


def read_manifest(path: str | Path) -> DatasetManifest:
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = {"recording_id", "patient_id", "path", "target", "label"}
        if reader.fieldnames is None or set(reader.fieldnames) != expected:
            raise AudioIOError(
                f"manifest header must be recording_id,patient_id,path,target,label; "
                f"got {reader.fieldnames}"
            )
        for row in reader:
            label = row["label"].strip()
            entries.append(
                ManifestEntry(
                    recording_id=row["recording_id"],
                    patient_id=row["patient_id"],
                    path=row["path"],
                    target=row["target"],
                    label=int(label) if label else None,
                )
            )
    return DatasetManifest(entries)


def write_manifest(path: str | Path, manifest: DatasetManifest) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["recording_id", "patient_id", "path", "target", "label"])
        for e in manifest.entries:
            writer.writerow(
                [e.recording_id, e.patient_id, e.path, e.target,
                 "" if e.label is None else e.label]
            )
