"""Synthetic labeled corpus: clean heart/lung sounds plus controlled noise.

Clean heart sounds are S1/S2 dyads (the first sound longer and lower
pitched, the second shorter and higher) with per-beat timing jitter;
clean lung sounds are amplitude-modulated 200-1000 Hz noise bursts at the
breathing rate. Noise generators cover stationary white noise,
babble-like chatter, stethoscope-movement bumps, and a cry-band tone
complex. Mixing is exact in power ratio, and quality labels follow a
fixed monotone SNR staircase. Everything is reproducible from the seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import butter, sosfiltfilt

from .audio import AudioRecording, DatasetManifest, ManifestEntry, save_wav, TARGET_FS


@dataclass
class SynthSpec:
    target: str  # heart | lung
    rate_bpm: float  # heart rate or breathing rate
    snr_db: float
    noise_kind: str = "white"  # white | babble | bumps | cry
    seed: int = 0
    duration_s: float = 10.0
    fs: float = TARGET_FS

    def __post_init__(self) -> None:
        if self.target not in ("heart", "lung"):
            raise ValueError(f"unknown target {self.target!r}")
        if self.target == "heart" and not 70 <= self.rate_bpm <= 220:
            raise ValueError("heart rate outside [70, 220] bpm")
        if self.target == "lung" and not 15 <= self.rate_bpm <= 80:
            raise ValueError("breathing rate outside [15, 80] breaths/min")


@dataclass
class HeartEvents:
    s1_starts: np.ndarray
    s1_ends: np.ndarray
    s2_starts: np.ndarray
    s2_ends: np.ndarray


def _tone_burst(n: int, fs: float, freq: float, width_s: float, rng) -> np.ndarray:
    t = (np.arange(n) - n / 2) / fs
    envelope = np.exp(-0.5 * (t / (width_s / 2.355)) ** 2)  # FWHM = width_s
    phase = rng.uniform(0, 2 * np.pi)
    return envelope * np.sin(2 * np.pi * freq * t + phase)


def heart_clean(spec: SynthSpec) -> tuple[np.ndarray, HeartEvents]:
    """Clean dyad train plus the ground-truth sound boundaries."""
    rng = np.random.default_rng(spec.seed)
    fs = spec.fs
    n = int(round(spec.duration_s * fs))
    x = np.zeros(n)
    cycle = 60.0 / spec.rate_bpm
    s1_dur, s2_dur = 0.122, 0.080
    s1s, s1e, s2s, s2e = [], [], [], []
    t = 0.05 * cycle
    while t + cycle < spec.duration_s:
        jitter = rng.normal(0, 0.01 * cycle)
        s1_at = t + jitter
        s2_at = s1_at + 0.35 * cycle + rng.normal(0, 0.005 * cycle)
        # the first sound carries its energy low in the band, the second
        # sits higher and shorter
        for at, dur, freqs, amps, starts, ends in (
            (s1_at, s1_dur, (50.0, 95.0), (0.6, 1.0), s1s, s1e),
            (s2_at, s2_dur, (160.0,), (0.75,), s2s, s2e),
        ):
            i0 = int(round(at * fs))
            burst_n = int(round(dur * fs))
            if i0 + burst_n <= n:
                for freq, amp in zip(freqs, amps):
                    x[i0 : i0 + burst_n] += amp * _tone_burst(burst_n, fs, freq, dur * 0.6, rng)
                starts.append(at)
                ends.append(at + dur)
        t += cycle
    events = HeartEvents(
        np.array(s1s), np.array(s1e), np.array(s2s), np.array(s2e)
    )
    return x, events


def synth_heart(spec: SynthSpec) -> AudioRecording:
    x, _ = heart_clean(spec)
    return AudioRecording(
        samples=x, fs=spec.fs,
        recording_id=f"synth-heart-{spec.seed}", band="raw",
    )


def lung_clean(spec: SynthSpec) -> np.ndarray:
    """Breath-rate AM bursts of 200-1000 Hz noise with a quiet baseline."""
    rng = np.random.default_rng(spec.seed)
    fs = spec.fs
    n = int(round(spec.duration_s * fs))
    noise = rng.normal(size=n)
    sos = butter(4, [200.0, 1000.0], btype="band", fs=fs, output="sos")
    carrier = sosfiltfilt(sos, noise)
    period = 60.0 / spec.rate_bpm
    t = np.arange(n) / fs
    phase = (t % period) / period
    duty = 0.4  # inspiration fraction of the cycle
    env = np.where(
        phase < duty,
        0.5 * (1 - np.cos(2 * np.pi * phase / duty)),
        0.0,
    )
    env = env + 0.05
    return carrier * env


def synth_lung(spec: SynthSpec) -> AudioRecording:
    return AudioRecording(
        samples=lung_clean(spec), fs=spec.fs,
        recording_id=f"synth-lung-{spec.seed}", band="raw",
    )


def gen_noise(kind: str, n: int, fs: float, seed: int) -> np.ndarray:
    """One noise realization; every kind carries a 10% broadband floor so
    mixing at a target in-band ratio never needs unbounded scaling."""
    shaped = _gen_noise_shaped(kind, n, fs, seed)
    if kind == "white":
        return shaped
    floor = np.random.default_rng(seed + 7919).normal(size=n)
    shaped = shaped / np.sqrt(np.mean(shaped**2))
    floor = floor / np.sqrt(np.mean(floor**2))
    return np.sqrt(0.9) * shaped + np.sqrt(0.1) * floor


def _gen_noise_shaped(kind: str, n: int, fs: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    t = np.arange(n) / fs
    if kind == "white":
        return rng.normal(size=n)
    if kind == "babble":
        out = np.zeros(n)
        sos = butter(2, [300.0, min(1800.0, fs / 2 - 1)], btype="band", fs=fs, output="sos")
        for _ in range(6):
            voice = sosfiltfilt(sos, rng.normal(size=n))
            syllabic = 0.5 * (1 + np.sin(2 * np.pi * rng.uniform(2.5, 5.0) * t + rng.uniform(0, 2 * np.pi)))
            out += voice * syllabic
        return out
    if kind == "bumps":
        out = np.zeros(n)
        count = max(3, rng.poisson(1.2 * n / fs))
        for _ in range(count):
            center = rng.uniform(0, n / fs)
            width = rng.uniform(0.03, 0.10)
            freq = rng.uniform(25.0, 140.0)
            burst_n = int(6 * width * fs)
            i0 = int(center * fs) - burst_n // 2
            burst = _tone_burst(burst_n, fs, freq, width, rng) * rng.uniform(0.5, 1.5)
            lo = max(0, i0)
            hi = min(n, i0 + burst_n)
            if hi > lo:
                out[lo:hi] += burst[lo - i0 : hi - i0]
        return out
    if kind == "cry":
        f0 = rng.uniform(330.0, 430.0)
        vibrato = 1.0 + 0.02 * np.sin(2 * np.pi * rng.uniform(4, 7) * t)
        out = np.zeros(n)
        for h in range(1, 5):
            out += np.sin(2 * np.pi * h * f0 * np.cumsum(vibrato) / fs + rng.uniform(0, 2 * np.pi)) / h
        # cry bouts with gaps
        env = np.zeros(n)
        pos = rng.uniform(0.0, 0.5)
        while pos < n / fs:
            bout = rng.uniform(0.8, 2.0)
            i0, i1 = int(pos * fs), min(n, int((pos + bout) * fs))
            seg = np.hanning(max(i1 - i0, 2))
            env[i0:i1] = seg[: i1 - i0]
            pos += bout + rng.uniform(0.3, 1.0)
        return out * env
    raise ValueError(f"unknown noise kind {kind!r}")


def mix(
    clean: AudioRecording,
    noise: np.ndarray,
    snr_db: float,
    band: tuple[float, float] | None = None,
) -> AudioRecording:
    """Combine at an exact clean-to-noise power ratio, then peak-normalize.

    With `band=(lo, hi)` the ratio is enforced on band-filtered copies,
    so the label tracks degradation where the target sounds live rather
    than broadband loudness.
    """
    if np.isinf(snr_db) and snr_db > 0:
        return clean
    c = clean.samples
    noise = np.asarray(noise, dtype=float)
    if len(c) != len(noise):
        raise ValueError("clean and noise lengths differ")
    if band is None:
        p_clean = float(np.mean(c**2))
        p_noise = float(np.mean(noise**2))
    else:
        sos = butter(4, list(band), btype="band", fs=clean.fs, output="sos")
        p_clean = float(np.mean(sosfiltfilt(sos, c) ** 2))
        p_noise = float(np.mean(sosfiltfilt(sos, noise) ** 2))
    if p_clean <= 0 or p_noise <= 0:
        raise ValueError("zero-power input")
    scale = np.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0)))
    mixed = c + scale * noise
    peak = np.max(np.abs(mixed))
    out = mixed / peak if peak > 0 else mixed
    return AudioRecording(
        samples=out, fs=clean.fs,
        patient_id=clean.patient_id,
        recording_id=clean.recording_id,
        band=clean.band,
    )


SNR_STAIRCASE = ((-10.0, 1), (-3.0, 2), (3.0, 3), (10.0, 4))


def label_map(snr_db: float) -> int:
    """Monotone SNR-to-quality staircase (versioned convention)."""
    for upper, label in SNR_STAIRCASE:
        if snr_db < upper:
            return label
    return 5


_SNR_BUCKETS = {
    1: (-18.0, -10.5),
    2: (-10.0, -3.5),
    3: (-3.0, 2.5),
    4: (3.0, 9.5),
    5: (10.0, 18.0),
}

NOISE_KINDS = ("white", "babble", "bumps", "cry")


@dataclass
class CorpusItem:
    recording_id: str
    patient_id: str
    target: str
    rate_bpm: float
    snr_db: float
    noise_kind: str
    label: int
    seed: int


def plan_corpus(n_items: int, root_seed: int, per_patient: int = 3) -> list[CorpusItem]:
    """Deterministic corpus plan: half heart, half lung, quality buckets
    cycled evenly, `per_patient` consecutive recordings per patient."""
    rng = np.random.default_rng(root_seed)
    items: list[CorpusItem] = []
    n_heart = n_items // 2
    for i in range(n_items):
        target = "heart" if i < n_heart else "lung"
        j = i if i < n_heart else i - n_heart
        bucket = j % 5 + 1
        lo, hi = _SNR_BUCKETS[bucket]
        snr = float(rng.uniform(lo, hi))
        rate = float(rng.uniform(80, 200)) if target == "heart" else float(rng.uniform(20, 70))
        kind = NOISE_KINDS[int(rng.integers(len(NOISE_KINDS)))]
        seed = int(rng.integers(2**31 - 1))
        items.append(
            CorpusItem(
                recording_id=f"syn-{target}-{j:04d}",
                patient_id=f"pat-{target[0]}{j // per_patient:04d}",
                target=target,
                rate_bpm=rate,
                snr_db=snr,
                noise_kind=kind,
                label=label_map(snr),
                seed=seed,
            )
        )
    return items


TARGET_BANDS = {"heart": (50.0, 250.0), "lung": (200.0, 1000.0)}


def render_item(item: CorpusItem, duration_s: float = 10.0) -> AudioRecording:
    """Mixture whose labeled ratio holds inside the target's own band."""
    spec = SynthSpec(
        target=item.target,
        rate_bpm=item.rate_bpm,
        snr_db=item.snr_db,
        noise_kind=item.noise_kind,
        seed=item.seed,
        duration_s=duration_s,
    )
    clean = synth_heart(spec) if item.target == "heart" else synth_lung(spec)
    noise = gen_noise(item.noise_kind, len(clean.samples), spec.fs, item.seed + 1)
    rec = mix(clean, noise, item.snr_db, band=TARGET_BANDS[item.target])
    rec.patient_id = item.patient_id
    rec.recording_id = item.recording_id
    return rec


def generate_corpus(
    out_dir: str | Path,
    n_items: int,
    root_seed: int,
    duration_s: float = 10.0,
) -> DatasetManifest:
    """Write WAVs, a manifest, and a single-rater annotation CSV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    ann_rows = []
    for item in plan_corpus(n_items, root_seed):
        rec = render_item(item, duration_s)
        wav_path = out / f"{item.recording_id}.wav"
        save_wav(wav_path, rec)
        entries.append(
            ManifestEntry(
                recording_id=item.recording_id,
                patient_id=item.patient_id,
                path=str(wav_path),
                target=item.target,
                label=item.label,
            )
        )
        ann_rows.append((item.recording_id, "synthetic", item.label))
    manifest = DatasetManifest(entries)
    from .audio import write_manifest

    write_manifest(out / "manifest.csv", manifest)
    with open(out / "annotations.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["recording_id", "rater_id", "score"])
        writer.writerows(ann_rows)
    return manifest
