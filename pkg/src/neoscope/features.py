"""The 400-feature catalog and its extraction engine.

Feature ids are stable: the first 146 follow the published table order,
the remainder instantiate the documented text families (acceptable
windows, per-envelope HSMM quality, truncated-autocorrelation variants,
envelope statistic and location grids, native-band powers, extended
MFCC statistics, spectral shape) over both the heart and lung envelope
sets. The full instantiation table is exported by `catalog_json`.

Cost classes partition the catalog for real-time use: the slow set is
exactly the autocorrelation sample entropies, the self-calibrated
segmenter features, the SVD dependency block, everything derived from
the STFT envelope, and the 1 kHz / 2 kHz mean-rate average energies.
Extraction shares intermediates through a per-recording context and
never aborts a vector: failures become the family's documented
worst-case sentinel and the id is flagged.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.signal import butter, sosfiltfilt

from . import dsp, heartseg
from .audio import AudioRecording, TARGET_FS, band_filter, peak_normalize
from .wavelets import wavedec, waverec

CATALOG_VERSION = "1"
CATALOG_SIZE = 400

HEART_STREAMS = tuple(dsp.HEART_ENVELOPE_KINDS) + ("hilbert_raw",)
LUNG_STREAMS = tuple(dsp.LUNG_ENVELOPE_KINDS)
ALL_STREAMS = tuple(dsp.HEART_ENVELOPE_KINDS) + LUNG_STREAMS + ("hilbert_raw", "shannon_raw")

STAT_FS = 50.0  # envelope statistic grids run on 50 Hz streams
ENTROPY_FS = 30.0  # sample-entropy inputs

HEART_WIN_S, HEART_HOP_S = 2.2, 1.65  # 25% overlap
LUNG_WIN_S, LUNG_HOP_S = 4.0, 3.0


@dataclass
class FeatureSpec:
    id: int
    name: str
    family: str
    target: str  # heart | lung | both
    cost_class: str  # fast | slow
    params: dict
    sentinel: float
    compute: Callable[["ExtractionContext"], float]

    def describe(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "family": self.family,
            "target": self.target,
            "cost_class": self.cost_class,
            "params": self.params,
            "sentinel": self.sentinel,
        }


@dataclass
class FeatureVector:
    recording_id: str
    values: np.ndarray
    flagged_ids: list[int]
    family_times_ms: dict[str, float]
    mode: str
    catalog_version: str = CATALOG_VERSION


class ExtractionContext:
    """Lazy, memoized intermediates shared across feature computations."""

    def __init__(self, rec: AudioRecording, zero_phase: bool = True):
        if rec.fs != TARGET_FS:
            raise ValueError(f"extraction expects fs={TARGET_FS}, got {rec.fs}")
        self.raw = np.asarray(rec.samples, dtype=float)  # pre-normalization
        self.x = peak_normalize(self.raw)
        self.fs = float(rec.fs)
        self.zero_phase = zero_phase
        self._cache: dict = {}

    def _memo(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    # -- band views ---------------------------------------------------------

    def heart_band(self) -> np.ndarray:
        return self._memo("heart_band", lambda: band_filter(
            AudioRecording(self.x, self.fs), "heart", zero_phase=self.zero_phase,
        ).samples)

    def lung_band(self) -> np.ndarray:
        return self._memo("lung_band", lambda: band_filter(
            AudioRecording(self.x, self.fs), "lung", zero_phase=self.zero_phase,
        ).samples)

    # -- envelopes ----------------------------------------------------------

    def _band_frames(self, band: str):
        """Shared Hann spectrogram + unwindowed frame view for one band."""
        def build():
            from scipy.fft import rfft, rfftfreq
            from scipy.signal import get_window

            sig = self.heart_band() if band == "heart" else self.lung_band()
            win = int(round(dsp.FRAME_WIN_S * self.fs))
            hop = int(round(dsp.FRAME_HOP_S * self.fs))
            time_frames = dsp._frames(sig, win, hop)
            power = np.abs(rfft(time_frames * get_window("hann", win), axis=1)) ** 2 / win
            return rfftfreq(win, 1.0 / self.fs), power, time_frames, win
        return self._memo(("band_frames", band), build)

    def envelope(self, stream: str) -> dsp.Envelope:
        def build():
            if stream == "hilbert_raw":
                return dsp.compute_envelope(self.x, "hilbert", self.fs)
            if stream == "shannon_raw":
                return dsp.compute_envelope(self.x, "shannon_energy", self.fs)
            band = "heart" if stream in dsp.HEART_ENVELOPE_KINDS else "lung"
            if stream in dsp.FRAME_ENVELOPE_KINDS:
                freqs, power, time_frames, win = self._band_frames(band)
                vals = dsp.frame_envelope(stream, freqs, power, time_frames, win)
                return dsp.Envelope(vals, 1.0 / dsp.FRAME_HOP_S, stream)
            sig = self.heart_band() if band == "heart" else self.lung_band()
            return dsp.compute_envelope(sig, stream, self.fs)
        return self._memo(("env", stream), build)

    def env_at(self, stream: str, rate: float) -> np.ndarray:
        def build():
            env = self.envelope(stream)
            if env.fs == rate:
                return np.asarray(env.values, dtype=float)
            if rate < STAT_FS < env.fs:  # chain through the cached 50 Hz view
                return dsp.resample_sequence(self.env_at(stream, STAT_FS), STAT_FS, rate)
            return dsp.resample_sequence(env.values, env.fs, rate)
        return self._memo(("env_at", stream, rate), build)

    # -- autocorrelation of the raw hilbert envelope -------------------------

    def acf(self, truncate_s: float | None = None) -> dsp.AutocorrSeq:
        def build():
            env = self.envelope("hilbert_raw")
            return dsp.autocorr(env.values, env.fs, truncate_s)
        return self._memo(("acf", truncate_s), build)

    def acf30(self, truncate_s: float | None = None) -> np.ndarray:
        def build():
            ac = self.acf(truncate_s)
            return dsp.resample_sequence(ac.values, ac.fs, ENTROPY_FS)
        return self._memo(("acf30", truncate_s), build)

    # -- spectra --------------------------------------------------------------

    def welch(self, rate_tag: str = "native") -> tuple[np.ndarray, np.ndarray]:
        def build():
            if rate_tag == "native":
                return dsp.psd(self.x, self.fs)
            sig = dsp.resample_sequence(self.x, self.fs, 2000.0)
            return dsp.psd(sig, 2000.0)
        return self._memo(("welch", rate_tag), build)

    def mfcc_matrix(self) -> np.ndarray:
        return self._memo("mfcc", lambda: dsp.mfcc(self.x, self.fs))

    def f0_track(self) -> np.ndarray:
        return self._memo("f0", lambda: dsp.cepstral_f0(self.x, self.fs))

    # -- rhythm ---------------------------------------------------------------

    def heart_rate(self) -> tuple[float, float]:
        def build():
            try:
                bpm, strength = heartseg.estimate_heart_rate(self.heart_band(), self.fs)
            except (dsp.SignalTooShort, heartseg.SegmentationError):
                return 120.0, 0.0
            return float(np.clip(bpm, heartseg.MIN_HR_BPM, heartseg.MAX_HR_BPM)), strength
        return self._memo("heart_rate", build)

    def cycle_duration(self, lo_bpm: float, hi_bpm: float) -> float:
        """Autocorrelation peak lag (s) inside a beats-per-minute band."""
        def build():
            ac = self.acf()
            lag_lo = int(np.floor(60.0 / hi_bpm * ac.fs))
            lag_hi = min(int(np.ceil(60.0 / lo_bpm * ac.fs)), len(ac.values) - 1)
            if lag_hi <= lag_lo:
                raise dsp.SignalTooShort("lag band empty")
            seg = ac.values[lag_lo : lag_hi + 1]
            return (lag_lo + int(np.argmax(seg))) / ac.fs
        return self._memo(("cycle", lo_bpm, hi_bpm), build)

    # -- segmentations --------------------------------------------------------

    def springer(self) -> heartseg.StateSequence:
        return self._memo("springer", lambda: heartseg.springer_segment(
            self.heart_band(), self.fs, hr_bpm=self.heart_rate()[0],
            env_at=self.env_at))

    def schmidt(self) -> heartseg.StateSequence:
        def build():
            env = self.envelope("hilbert")
            return heartseg.schmidt_segment(env, self.heart_rate()[0])
        return self._memo("schmidt", build)

    def segmentation(self, which: str) -> heartseg.StateSequence:
        return self.springer() if which == "springer" else self.schmidt()

    def peaks(self, detector: str) -> heartseg.PeakList:
        def build():
            if detector == "gieraltowski":
                return heartseg.gieraltowski_peaks(self.x, self.fs)
            if detector == "liang":
                return heartseg.liang_peaks(self.heart_band(), self.fs)
            if detector == "breath":
                return heartseg.breath_peaks(self.lung_band(), self.fs)
            if detector in ("springer", "schmidt"):
                seq = self.segmentation(detector)
                return heartseg.PeakList(seq.sound_peak_indices(self.fs), "heart", self.fs)
            raise ValueError(f"unknown detector {detector!r}")
        return self._memo(("peaks", detector), build)


# ---------------------------------------------------------------------------
# feature computations


def _se30(ctx: ExtractionContext, stream: str) -> float:
    return dsp.sample_entropy(ctx.env_at(stream, ENTROPY_FS), m=2, r=0.2)


def clipping_pct(x: np.ndarray) -> float:
    return float(np.mean(np.abs(x) > 0.97))


def heart_contamination_pct(ctx: ExtractionContext) -> tuple[float, float]:
    """Exceedance fractions of the product of normalized wavelet
    approximations (levels 1-3) of the heart-band signal."""
    def build():
        hb = ctx.heart_band()
        coeffs = wavedec(hb, "sym3", 3)  # [a3, d3, d2, d1]
        depth = len(coeffs) - 1
        product = np.ones(len(hb))
        for level in (1, 2, 3):
            kept = [c.copy() for c in coeffs]
            for li in range(1, len(coeffs)):
                if depth - li + 1 <= level:  # zero details up to this level
                    kept[li] = np.zeros_like(coeffs[li])
            approx = waverec(kept, "sym3", len(hb))
            peak = np.max(np.abs(approx))
            product *= approx / peak if peak > 0 else approx
        mag = np.abs(product)
        return float(np.mean(mag > 0.1)), float(np.mean(mag > 0.2))
    return ctx._memo("contamination", build)


def periodicity_degree(ctx: ExtractionContext, lo_bpm: float, hi_bpm: float,
                       truncate_s: float | None = None) -> float:
    ac = ctx.acf(truncate_s)
    lag_lo = int(np.floor(60.0 / hi_bpm * ac.fs))
    lag_hi = min(int(np.ceil(60.0 / lo_bpm * ac.fs)), len(ac.values) - 1)
    if lag_hi <= lag_lo:
        return 1.0 if np.allclose(np.diff(ac.values), 0) else 0.0
    seg = ac.values[lag_lo : lag_hi + 1]
    return float(max(np.max(seg), 0.0))


def _window_starts(total_s: float, win_s: float, hop_s: float) -> np.ndarray:
    n = int(np.floor((total_s - win_s) / hop_s)) + 1
    if n < 1:
        raise dsp.SignalTooShort(f"shorter than one {win_s} s window")
    return hop_s * np.arange(n)


def acceptable_windows_pct(
    ctx: ExtractionContext, detector: str, win_s: float, hop_s: float,
    lo: int, hi: int,
) -> float:
    peaks = ctx.peaks(detector).times()
    total_s = len(ctx.x) / ctx.fs
    starts = _window_starts(total_s, win_s, hop_s)
    ok = 0
    for s in starts:
        count = int(np.count_nonzero((peaks >= s) & (peaks < s + win_s)))
        ok += int(lo <= count <= hi)
    return ok / len(starts)


def envelope_cycle_correlation(ctx: ExtractionContext, stream: str) -> tuple[float, float]:
    def build():
        cycle_s = ctx.cycle_duration(heartseg.MIN_HR_BPM, heartseg.MAX_HR_BPM)
        env = ctx.env_at(stream, STAT_FS)
        clen = int(round(cycle_s * STAT_FS))
        n_cycles = len(env) // clen if clen > 0 else 0
        if n_cycles < 2:
            raise dsp.SignalTooShort("need at least two full cycles")
        chunks = env[: n_cycles * clen].reshape(n_cycles, clen)
        sd = chunks.std(axis=1)
        keep = sd > 0
        if np.count_nonzero(keep) < 2:
            return 0.0, 0.0
        corr = np.corrcoef(chunks[keep])
        iu = np.triu_indices_from(corr, k=1)
        vals = corr[iu]
        return float(vals.mean()), float(vals.std())
    return ctx._memo(("cyclecorr", stream), build)


def _interp_peak(seg: np.ndarray, k: int) -> float:
    """Parabolic refinement of a local maximum index."""
    if 0 < k < len(seg) - 1:
        y0, y1, y2 = seg[k - 1], seg[k], seg[k + 1]
        denom = y0 - 2 * y1 + y2
        if denom < 0:
            return k + 0.5 * (y0 - y2) / denom
    return float(k)


def windowed_hr_track(env: np.ndarray, env_fs: float, win_s: float = 3.0,
                      hop_s: float = 1.0, lo_bpm: float = heartseg.MIN_HR_BPM,
                      hi_bpm: float = heartseg.MAX_HR_BPM) -> np.ndarray:
    """Per-window autocorrelation heart rate of an envelope."""
    if len(env) < win_s * env_fs:
        raise dsp.SignalTooShort("envelope shorter than one window")
    win = int(round(win_s * env_fs))
    hop = int(round(hop_s * env_fs))
    out = []
    for start in range(0, len(env) - win + 1, hop):
        chunk = env[start : start + win]
        ac = dsp.autocorr(chunk, env_fs)
        lag_lo = int(np.floor(60.0 / hi_bpm * env_fs))
        lag_hi = min(int(np.ceil(60.0 / lo_bpm * env_fs)), len(ac.values) - 1)
        seg = ac.values[lag_lo : lag_hi + 1]
        k = int(np.argmax(seg))
        lag = (lag_lo + _interp_peak(seg, k)) / env_fs
        out.append(60.0 / lag)
    return np.array(out)


def envelope_hrv(ctx: ExtractionContext, stream: str) -> tuple[float, float]:
    def build():
        track = windowed_hr_track(ctx.env_at(stream, STAT_FS), STAT_FS)
        return float(track.mean()), float(track.std())
    return ctx._memo(("hrv", stream), build)


def _state_snippets(ctx: ExtractionContext, seq: heartseg.StateSequence,
                    state: int, min_s: float = 0.03) -> list[np.ndarray]:
    hb = ctx.heart_band()
    out = []
    for st, s, e in seq.segments():
        if st == state and e - s >= min_s:
            out.append(hb[int(s * ctx.fs) : int(e * ctx.fs)])
    return out


CEPSTRAL_SENTINEL = 1.0e6  # lower is better, so the failure value sits above any real total


def segmentation_quality_cepstral(ctx: ExtractionContext, which: str) -> float:
    """Total pairwise cepstral distance across same-kind sound segments.

    Each segment becomes a 70-dim vector: a 4-coefficient-plus-energy
    cepstral matrix time-resampled to 14 frames. Self-similar
    segmentations score near zero.
    """
    def build():
        seq = ctx.segmentation(which)
        total = 0.0
        for state in (heartseg.S1, heartseg.S2):
            snippets = _state_snippets(ctx, seq, state)
            vecs = []
            for snip in snippets:
                try:
                    mat = dsp.mfcc(snip, ctx.fs, n_coeffs=4)
                except dsp.SignalTooShort:
                    continue
                resampled = np.empty((14, mat.shape[1]))
                src = np.linspace(0, 1, mat.shape[0])
                dst = np.linspace(0, 1, 14)
                for c in range(mat.shape[1]):
                    resampled[:, c] = np.interp(dst, src, mat[:, c])
                vecs.append(resampled.ravel())
            if len(vecs) < 2:
                return CEPSTRAL_SENTINEL
            vecs = np.asarray(vecs)
            for i in range(len(vecs) - 1):
                total += float(np.linalg.norm(vecs[i + 1 :] - vecs[i], axis=1).sum())
        return total
    return ctx._memo(("cepstral", which), build)


def bad_segmentation_fractions(ctx: ExtractionContext, which: str) -> np.ndarray:
    """Outlier fraction per state plus overall (3-MAD rule on durations)."""
    def build():
        seq = ctx.segmentation(which)
        fracs = np.zeros(5)
        all_flags = []
        for state in range(4):
            durs = seq.state_durations(state)
            if len(durs) == 0:
                fracs[state] = 1.0
                continue
            med = np.median(durs)
            mad = np.median(np.abs(durs - med))
            mad = max(mad, 1.0 / seq.frame_fs / 2.0)
            flags = np.abs(durs - med) > 3.0 * mad
            fracs[state] = float(np.mean(flags))
            all_flags.extend(flags.tolist())
        fracs[4] = float(np.mean(all_flags)) if all_flags else 1.0
        return fracs
    return ctx._memo(("badseg", which), build)


ABNORMAL_THRESHOLDS = {"rmssd": 0.8, "sd1": 0.8, "zcr": 0.6}


def abnormal_segmentation_pct(ctx: ExtractionContext, which: str, stat: str) -> float:
    def build():
        seq = ctx.segmentation(which)
        sys_snips = _state_snippets(ctx, seq, heartseg.SYSTOLE, min_s=0.02)
        dia_snips = _state_snippets(ctx, seq, heartseg.DIASTOLE, min_s=0.02)
        n = min(len(sys_snips), len(dia_snips))
        if n == 0:
            return {"rmssd": 1.0, "sd1": 1.0, "zcr": 1.0}
        fns = {"rmssd": dsp.rmssd, "sd1": dsp.poincare_sd1, "zcr": dsp.zcr}
        out = {}
        for name, fn in fns.items():
            flags = []
            for s_seg, d_seg in zip(sys_snips[:n], dia_snips[:n]):
                try:
                    sv, dv = fn(s_seg), fn(d_seg)
                    cv = fn(np.concatenate([s_seg, d_seg]))
                except dsp.SignalTooShort:
                    continue
                if cv == 0:
                    continue
                flags.append(abs(sv - dv) / abs(cv) > ABNORMAL_THRESHOLDS[name])
            out[name] = float(np.mean(flags)) if flags else 1.0
        return out
    return ctx._memo(("abnormal", which), build)[stat]


def hsmm_envelope_quality(ctx: ExtractionContext, stream: str) -> float:
    """Mean decoded-state posterior of a single-envelope duration-HMM.

    Emissions are self-calibrated Gaussians on the normalized envelope;
    the duration-constrained path disagrees with the emission posterior
    on arrhythmic or noisy input, pulling the score down.
    """
    def build():
        env50 = ctx.env_at(stream, STAT_FS)
        peak = np.max(np.abs(env50))
        norm = env50 / peak if peak > 0 else env50
        hi = np.percentile(norm, 90)
        lo = np.percentile(norm, 40)
        spread = max(float(norm.std()), 0.05)
        means = np.array([hi, lo, hi, lo])
        log_em = -0.5 * ((norm[:, None] - means[None, :]) / spread) ** 2
        dmeans, dsds = heartseg.duration_params(ctx.heart_rate()[0])
        labels = heartseg.hsmm_viterbi(
            log_em, heartseg._duration_logpmf(dmeans, dsds, STAT_FS))
        post = np.exp(log_em - log_em.max(axis=1, keepdims=True))
        post /= post.sum(axis=1, keepdims=True)
        return float(post[np.arange(len(labels)), labels].mean())
    return ctx._memo(("hsmmq", stream), build)


def springer_posterior_quality(ctx: ExtractionContext) -> float:
    seq = ctx.springer()
    return float(seq.posteriors.max(axis=1).mean())


def _env_stat(ctx: ExtractionContext, stream: str, stat: str) -> float:
    env = ctx.env_at(stream, STAT_FS)
    if stat == "kurtosis":
        return dsp.kurtosis(env)
    if stat == "skewness":
        return dsp.skewness(env)
    if stat == "zcr_median":
        return dsp.zcr(env, threshold=float(np.median(env)))
    if stat == "rmssd":
        return dsp.rmssd(env)
    if stat == "sd1":
        return dsp.poincare_sd1(env)
    if stat == "shannon_entropy":
        return dsp.entropy(env, "shannon")
    if stat == "variance":
        return float(np.var(env))
    if stat == "mean":
        return float(np.mean(env))
    if stat == "median":
        return float(np.median(env))
    if stat == "iqr":
        return float(np.percentile(env, 75) - np.percentile(env, 25))
    if stat == "p10":
        return float(np.percentile(env, 10))
    if stat == "p90":
        return float(np.percentile(env, 90))
    if stat == "mad":
        med = np.median(env)
        return float(np.median(np.abs(env - med)))
    raise ValueError(f"unknown stat {stat!r}")


def _gieraltowski_zcr(ctx: ExtractionContext) -> tuple[float, float]:
    """Thresholded crossing rate and kept-peak rate of the wavelet stage."""
    def build():
        work_fs = 1000.0
        sig = dsp.resample_sequence(ctx.x, ctx.fs, work_fs)
        sig = sosfiltfilt(butter(2, 20.0, btype="high", fs=work_fs, output="sos"), sig)
        from .wavelets import dwt
        approx, _ = dwt(sig, "db2")
        mag = np.abs(approx)
        peak = mag.max()
        if peak <= 1e-9:
            return 0.0, 0.0
        mag = mag / peak
        thr = float(np.percentile(mag, 85))
        z = dsp.zcr(mag, threshold=thr)
        pk = ctx.peaks("gieraltowski")
        rate = len(pk.indices) / (len(ctx.x) / ctx.fs)
        return z, rate
    return ctx._memo("gzcr", build)


# ---------------------------------------------------------------------------
# catalog construction


def _build_catalog() -> list[FeatureSpec]:
    specs: list[FeatureSpec] = []

    def add(name, family, target, compute, params=None, sentinel=0.0, slow=False):
        specs.append(FeatureSpec(
            id=len(specs) + 1,
            name=name,
            family=family,
            target=target,
            cost_class="slow" if slow else "fast",
            params=params or {},
            sentinel=sentinel,
            compute=compute,
        ))

    # -- 1: sample entropy of the 30 Hz signal
    add("audio_sample_entropy", "sample_entropy", "both",
        lambda c: dsp.sample_entropy(dsp.resample_sequence(c.x, c.fs, ENTROPY_FS), 2, 0.1),
        {"m": 2, "r": 0.1, "rate": ENTROPY_FS})

    # -- 2: clipping on pre-normalization magnitudes
    add("clipping_pct", "clipping", "both", lambda c: clipping_pct(c.raw),
        {"threshold": 0.97})

    # -- 3-4: mean rate average energy at reduced rates (slow)
    for rate in (1000.0, 2000.0):
        add(f"mean_rate_avg_energy_{int(rate)}", "mean_rate_avg_energy", "both",
            (lambda r: lambda c: dsp.mean_rate_avg_energy(c.x, c.fs, resample_to=r))(rate),
            {"resample_to": rate, "band": [2, 32]}, slow=True)

    # -- 5-6: heart contamination
    add("heart_contamination_pct_0p1", "heart_contamination", "both",
        lambda c: heart_contamination_pct(c)[0], {"threshold": 0.1})
    add("heart_contamination_pct_0p2", "heart_contamination", "both",
        lambda c: heart_contamination_pct(c)[1], {"threshold": 0.2})

    # -- 7: high-frequency variance
    def high_freq_variance(c: ExtractionContext) -> float:
        sos = butter(2, 700.0, btype="high", fs=c.fs, output="sos")
        return float(np.var(sosfiltfilt(sos, c.x)))
    add("high_freq_variance", "high_freq_variance", "both", high_freq_variance,
        {"cutoff": 700.0})

    # -- 8-18: LPC
    def _lpc(c: ExtractionContext) -> np.ndarray:
        return c._memo("lpc", lambda: dsp.lpc(c.x, 10))
    for i in range(11):
        add(f"lpc_{i}", "lpc", "both", (lambda k: lambda c: float(_lpc(c)[k]))(i),
            {"order": 10, "index": i})

    # -- 19-21: entropies of the audio
    for kind in ("shannon", "renyi", "tsallis"):
        add(f"entropy_{kind}", "entropy", "both",
            (lambda k: lambda c: dsp.entropy(c.x, k))(kind), {"q": 2, "bins": 100})

    # -- 22-23: periodicity degree
    add("periodicity_15_220", "periodicity", "heart",
        lambda c: periodicity_degree(c, 15, 220), {"band_bpm": [15, 220]})
    add("periodicity_15_80", "periodicity", "lung",
        lambda c: periodicity_degree(c, 15, 80), {"band_bpm": [15, 80]})

    # -- 24: autocorrelation kurtosis
    add("acf_kurtosis", "acf_stats", "both",
        lambda c: dsp.kurtosis(c.acf().values), {})

    # -- 25-26: autocorrelation sample entropy (slow)
    add("acf_sample_entropy_full", "acf_sample_entropy", "both",
        lambda c: dsp.sample_entropy(c.acf30(), 2, 0.2), {"m": 2, "r": 0.2}, slow=True)
    add("acf_sample_entropy_trunc5s", "acf_sample_entropy", "both",
        lambda c: dsp.sample_entropy(c.acf30(5.0), 2, 0.2),
        {"m": 2, "r": 0.2, "truncate_s": 5}, slow=True)

    # -- 27-28: autocorrelation cycle durations
    add("acf_cycle_duration_heart", "acf_cycle", "heart",
        lambda c: c.cycle_duration(70, 220), {"band_bpm": [70, 220]},
        sentinel=60.0 / 70.0)
    add("acf_cycle_duration_lung", "acf_cycle", "lung",
        lambda c: c.cycle_duration(15, 80), {"band_bpm": [15, 80]},
        sentinel=60.0 / 15.0)

    # -- 29: cry power
    add("cry_power_295_406", "band_power", "both",
        lambda c: dsp.band_power_ratio(*c.welch(), 295, 406), {"band": [295, 406]})

    # -- 30-42: power ratios at 2 kHz
    bands_2k = [(i * 100, (i + 1) * 100) for i in range(10)] + [(24, 144), (144, 200), (200, 1000)]
    for lo, hi in bands_2k:
        add(f"power_2k_{lo}_{hi}", "band_power_2k", "both",
            (lambda a, b: lambda c: dsp.band_power_ratio(*c.welch("2k"), a, b))(lo, hi),
            {"band": [lo, hi], "rate": 2000})

    # -- 43: power centroid at 2 kHz
    add("power_centroid_2k", "centroid", "both",
        lambda c: dsp.spectral_centroid(*c.welch("2k")), {"rate": 2000})

    # -- 44-51: SVD dependency (slow)
    for tag, rate in (("native", None), ("2k", 2000.0)):
        def mk(r):
            def fn(c: ExtractionContext) -> np.ndarray:
                return c._memo(("svd", r), lambda: dsp.psd_svd_dependency(c.x, c.fs, r))
            return fn
        getter = mk(rate)
        for g in range(3):
            add(f"svd_ratio_{tag}_g{g + 1}", "svd_dependency", "both",
                (lambda gg, gt: lambda c: float(gt(c)[gg]))(g, getter),
                {"group": g + 1, "rate": rate or "native"}, slow=True)
        add(f"svd_ratio_{tag}_mean", "svd_dependency", "both",
            (lambda gt: lambda c: float(np.mean(gt(c))))(getter),
            {"group": "mean", "rate": rate or "native"}, slow=True)

    # -- 52-61: wavelet entropies (db4 depth 5)
    def _db4_coeffs(c: ExtractionContext):
        return c._memo("db4d5", lambda: wavedec(c.x, "db4", 5))
    # coeffs layout: [a5, d5, d4, d3, d2, d1]
    for label, idx in (("a5", 0), ("d4", 2), ("d5", 1)):
        for kind in ("shannon", "tsallis", "renyi"):
            add(f"wavelet_{kind}_{label}", "wavelet_entropy", "both",
                (lambda k, i: lambda c: dsp.entropy(_db4_coeffs(c)[i], k))(kind, idx),
                {"wavelet": "db4", "level": label})
    add("wavelet_logvar_d3", "wavelet_entropy", "both",
        lambda c: float(np.log(max(np.var(_db4_coeffs(c)[3]), dsp.LOG_FLOOR))),
        {"wavelet": "db4", "level": "d3"})

    # -- 62-63: db8 depth-2 approximation stats
    def _db8_a2(c: ExtractionContext):
        return c._memo("db8a2", lambda: wavedec(c.x, "db8", 2)[0])
    add("wavelet_rmssd_a2", "wavelet_rmssd_zcr", "both",
        lambda c: dsp.rmssd(_db8_a2(c)), {"wavelet": "db8"})
    add("wavelet_zcr_a2", "wavelet_rmssd_zcr", "both",
        lambda c: dsp.zcr(_db8_a2(c)), {"wavelet": "db8"})

    # -- 64-65: wavelet peak-stage crossing stats
    add("wavelet_zcr_p85", "wavelet_peaks", "heart",
        lambda c: _gieraltowski_zcr(c)[0], {"percentile": 85})
    add("wavelet_peak_rate_p58", "wavelet_peaks", "heart",
        lambda c: _gieraltowski_zcr(c)[1], {"percentile": 58})

    # -- 66-82: MFCC summary (mean per column + averaged min/max/skew)
    for i in range(14):
        add(f"mfcc_mean_{i}", "mfcc", "both",
            (lambda k: lambda c: float(c.mfcc_matrix()[:, k].mean()))(i), {"column": i})
    add("mfcc_avg_min", "mfcc", "both",
        lambda c: float(c.mfcc_matrix().min(axis=0).mean()), {})
    add("mfcc_avg_max", "mfcc", "both",
        lambda c: float(c.mfcc_matrix().max(axis=0).mean()), {})
    add("mfcc_avg_skew", "mfcc", "both",
        lambda c: float(np.mean([dsp.skewness(c.mfcc_matrix()[:, k]) for k in range(14)])), {})

    # -- 83-84: fundamental frequency
    add("f0_pct_below_250", "fundamental", "both",
        lambda c: float(np.mean(c.f0_track() < 250.0)), {"limit": 250})
    add("f0_mode", "fundamental", "both", lambda c: dsp.f0_mode(c.f0_track()), {})

    # -- 85-100: envelope sample entropies (16 streams)
    for stream in ALL_STREAMS:
        add(f"env_sampen_{stream}", "envelope_sample_entropy",
            "heart" if stream in HEART_STREAMS else ("lung" if stream in LUNG_STREAMS else "both"),
            (lambda s: lambda c: _se30(c, s))(stream),
            {"stream": stream, "m": 2, "r": 0.2},
            slow=(stream == "stft"))

    # -- 101-107: heart envelope variances
    for stream in HEART_STREAMS:
        add(f"env_variance_{stream}", "envelope_variance", "heart",
            (lambda s: lambda c: _env_stat(c, s, "variance"))(stream),
            {"stream": stream}, slow=(stream == "stft"))

    # -- 108-121: envelope cycle correlations (mean, std) x 7 heart streams
    for stream in HEART_STREAMS:
        add(f"env_cyclecorr_mean_{stream}", "envelope_cycle", "heart",
            (lambda s: lambda c: envelope_cycle_correlation(c, s)[0])(stream),
            {"stream": stream}, slow=(stream == "stft"))
        add(f"env_cyclecorr_std_{stream}", "envelope_cycle", "heart",
            (lambda s: lambda c: envelope_cycle_correlation(c, s)[1])(stream),
            {"stream": stream}, sentinel=1.0, slow=(stream == "stft"))

    # -- 122-128: envelope heart-rate variability x 7 heart streams
    for stream in HEART_STREAMS:
        add(f"env_hrv_{stream}", "envelope_hrv", "heart",
            (lambda s: lambda c: envelope_hrv(c, s)[1])(stream),
            {"stream": stream, "window_s": 3}, sentinel=75.0, slow=(stream == "stft"))

    # -- 129-138: bad segmentation fractions
    for which in ("springer", "schmidt"):
        for si, sname in enumerate(("s1", "systole", "s2", "diastole", "all")):
            add(f"pct_bad_seg_{which}_{sname}", "bad_segmentation", "heart",
                (lambda w, k: lambda c: float(bad_segmentation_fractions(c, w)[k]))(which, si),
                {"segmenter": which, "state": sname}, sentinel=1.0,
                slow=(which == "schmidt"))

    # -- 139-140: cepstral segmentation quality
    for which in ("springer", "schmidt"):
        add(f"seg_cepstral_quality_{which}", "segmentation_quality", "heart",
            (lambda w: lambda c: segmentation_quality_cepstral(c, w))(which),
            {"segmenter": which}, sentinel=CEPSTRAL_SENTINEL,
            slow=(which == "schmidt"))

    # -- 141-146: abnormal segmentation percentages
    for which in ("springer", "schmidt"):
        for stat in ("rmssd", "sd1", "zcr"):
            add(f"pct_abnormal_{which}_{stat}", "abnormal_segmentation", "heart",
                (lambda w, s: lambda c: abnormal_segmentation_pct(c, w, s))(which, stat),
                {"segmenter": which, "stat": stat,
                 "threshold": ABNORMAL_THRESHOLDS[stat]},
                sentinel=1.0, slow=(which == "schmidt"))

    assert len(specs) == 146, f"table block must end at 146, got {len(specs)}"

    # -- 147-160: acceptable-window percentages
    heart_ranges = {
        "gieraltowski": [(2, 4), (4, 7), (2, 8)],
        "springer": [(4, 8), (9, 14), (5, 16)],
        "schmidt": [(4, 8), (9, 14), (5, 16)],
        "liang": [(4, 8), (9, 14), (5, 16)],
    }
    for det, ranges in heart_ranges.items():
        for lo, hi in ranges:
            add(f"acceptable_win_{det}_{lo}_{hi}", "acceptable_windows", "heart",
                (lambda d, a, b: lambda c: acceptable_windows_pct(
                    c, d, HEART_WIN_S, HEART_HOP_S, a, b))(det, lo, hi),
                {"detector": det, "range": [lo, hi], "win_s": HEART_WIN_S},
                slow=(det == "schmidt"))
    for lo, hi in ((1, 4), (1, 5)):
        add(f"acceptable_win_breath_{lo}_{hi}", "acceptable_windows", "lung",
            (lambda a, b: lambda c: acceptable_windows_pct(
                c, "breath", LUNG_WIN_S, LUNG_HOP_S, a, b))(lo, hi),
            {"detector": "breath", "range": [lo, hi], "win_s": LUNG_WIN_S})

    # -- 161-168: HSMM quality per heart stream + discriminative posterior
    for stream in HEART_STREAMS:
        add(f"hsmm_quality_{stream}", "hsmm_quality", "heart",
            (lambda s: lambda c: hsmm_envelope_quality(c, s))(stream),
            {"stream": stream}, slow=(stream == "stft"))
    add("hsmm_quality_springer_posterior", "hsmm_quality", "heart",
        springer_posterior_quality, {"stream": "springer_4ch"})

    # -- 169-173: truncated-autocorrelation variants
    add("acf_kurtosis_trunc5s", "acf_stats", "both",
        lambda c: dsp.kurtosis(c.acf(5.0).values), {"truncate_s": 5})

    def _trunc_cycle(c: ExtractionContext, lo_bpm: float, hi_bpm: float) -> float:
        ac = c.acf(5.0)
        lag_lo = int(np.floor(60.0 / hi_bpm * ac.fs))
        lag_hi = min(int(np.ceil(60.0 / lo_bpm * ac.fs)), len(ac.values) - 1)
        if lag_hi <= lag_lo:
            raise dsp.SignalTooShort("lag band empty")
        seg = ac.values[lag_lo : lag_hi + 1]
        return (lag_lo + int(np.argmax(seg))) / ac.fs

    add("acf_cycle_duration_heart_trunc5s", "acf_cycle", "heart",
        lambda c: _trunc_cycle(c, 70, 220), {"band_bpm": [70, 220], "truncate_s": 5},
        sentinel=60.0 / 70.0)
    add("acf_cycle_duration_lung_trunc5s", "acf_cycle", "lung",
        lambda c: _trunc_cycle(c, 15, 80), {"band_bpm": [15, 80], "truncate_s": 5},
        sentinel=60.0 / 15.0)
    add("periodicity_15_220_trunc5s", "periodicity", "heart",
        lambda c: periodicity_degree(c, 15, 220, truncate_s=5.0),
        {"band_bpm": [15, 220], "truncate_s": 5})
    add("periodicity_15_80_trunc5s", "periodicity", "lung",
        lambda c: periodicity_degree(c, 15, 80, truncate_s=5.0),
        {"band_bpm": [15, 80], "truncate_s": 5})

    # -- 174-269: envelope statistic grid (16 streams x 6 stats)
    for stream in ALL_STREAMS:
        for stat in ("kurtosis", "skewness", "zcr_median", "rmssd", "sd1", "shannon_entropy"):
            add(f"env_{stat}_{stream}", "envelope_stats",
                "heart" if stream in HEART_STREAMS else ("lung" if stream in LUNG_STREAMS else "both"),
                (lambda s, st: lambda c: _env_stat(c, s, st))(stream, stat),
                {"stream": stream, "stat": stat, "rate": STAT_FS},
                slow=(stream == "stft"))

    # -- 270-278: variances of the non-heart streams
    for stream in LUNG_STREAMS + ("shannon_raw",):
        add(f"env_variance_{stream}", "envelope_variance",
            "lung" if stream in LUNG_STREAMS else "both",
            (lambda s: lambda c: _env_stat(c, s, "variance"))(stream),
            {"stream": stream})

    # -- 279-285: native-rate band power ratios
    for lo, hi, side in ((40, 60, "heart"), (50, 250, "heart"), (200, 1000, "lung"),
                         (0, 500, "lung"), (150, 300, "lung"), (300, 450, "lung"),
                         (150, 450, "lung")):
        add(f"power_native_{lo}_{hi}", "band_power", side,
            (lambda a, b: lambda c: dsp.band_power_ratio(*c.welch(), a, b))(lo, hi),
            {"band": [lo, hi], "rate": "native"})

    # -- 286-299: MFCC per-column spread
    for i in range(14):
        add(f"mfcc_std_{i}", "mfcc_extended", "both",
            (lambda k: lambda c: float(c.mfcc_matrix()[:, k].std()))(i), {"column": i})

    # -- 300-303: spectral shape
    def _shape(c: ExtractionContext) -> dict:
        def build():
            freqs, pxx = c.welch()
            total = pxx.sum()
            if total <= 0:
                return {"flatness": 0.0, "rolloff85": 0.0, "bandwidth": 0.0, "flux": 0.0}
            p = pxx / total
            flat = float(np.exp(np.mean(np.log(np.maximum(pxx, dsp.LOG_FLOOR)))) /
                         max(pxx.mean(), dsp.LOG_FLOOR))
            cum = np.cumsum(p)
            roll = float(freqs[int(np.searchsorted(cum, 0.85))])
            cent = float((freqs * p).sum())
            bw = float(np.sqrt((((freqs - cent) ** 2) * p).sum()))
            _, power, _ = dsp.spectrogram_power(c.x, c.fs)
            norms = power.sum(axis=1, keepdims=True)
            norms[norms == 0] = 1.0
            sn = power / norms
            flux = float(np.abs(np.diff(sn, axis=0)).sum(axis=1).mean()) if len(sn) > 1 else 0.0
            return {"flatness": flat, "rolloff85": roll, "bandwidth": bw, "flux": flux}
        return c._memo("shape", build)
    for key in ("flatness", "rolloff85", "bandwidth", "flux"):
        add(f"spectral_{key}", "spectral_shape", "both",
            (lambda k: lambda c: _shape(c)[k])(key), {})

    # -- 304-399: envelope location grid (16 streams x 6 stats)
    for stream in ALL_STREAMS:
        for stat in ("mean", "median", "iqr", "p10", "p90", "mad"):
            add(f"env_{stat}_{stream}", "envelope_location",
                "heart" if stream in HEART_STREAMS else ("lung" if stream in LUNG_STREAMS else "both"),
                (lambda s, st: lambda c: _env_stat(c, s, st))(stream, stat),
                {"stream": stream, "stat": stat, "rate": STAT_FS},
                slow=(stream == "stft"))

    # -- 400: rhythm confidence
    add("hr_autocorr_strength", "periodicity", "heart",
        lambda c: float(c.heart_rate()[1]), {"band_bpm": [70, 220]})

    assert len(specs) == CATALOG_SIZE, f"catalog must hold {CATALOG_SIZE}, got {len(specs)}"
    assert len({s.id for s in specs}) == CATALOG_SIZE
    assert len({s.name for s in specs}) == CATALOG_SIZE, "feature names must be unique"
    return specs


_CATALOG: list[FeatureSpec] | None = None


def catalog() -> list[FeatureSpec]:
    global _CATALOG
    if _CATALOG is None:
        _CATALOG = _build_catalog()
    return _CATALOG


def catalog_json() -> str:
    doc = {
        "version": CATALOG_VERSION,
        "size": CATALOG_SIZE,
        "features": [s.describe() for s in catalog()],
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def fast_ids() -> list[int]:
    return [s.id for s in catalog() if s.cost_class == "fast"]


def feature_names(ids: list[int] | None = None) -> list[str]:
    specs = catalog()
    if ids is None:
        return [s.name for s in specs]
    by_id = {s.id: s.name for s in specs}
    return [by_id[i] for i in ids]


def extract(rec: AudioRecording, mode: str = "full", zero_phase: bool = True) -> FeatureVector:
    """Compute the catalog (or its fast subset) for one 10 s recording."""
    if mode not in ("full", "fast"):
        raise ValueError(f"mode must be full or fast, got {mode!r}")
    expected = TARGET_FS * 10
    if len(rec.samples) != expected:
        raise ValueError(f"expected a 10 s window of {expected} samples, got {len(rec.samples)}")
    ctx = ExtractionContext(rec, zero_phase=zero_phase)
    values = np.zeros(CATALOG_SIZE)
    flagged: list[int] = []
    family_times: dict[str, float] = {}
    for spec in catalog():
        if mode == "fast" and spec.cost_class == "slow":
            values[spec.id - 1] = np.nan
            continue
        t0 = time.perf_counter()
        try:
            v = float(spec.compute(ctx))
            if not np.isfinite(v):
                raise FloatingPointError("non-finite feature value")
        except Exception:
            v = spec.sentinel
            flagged.append(spec.id)
        family_times[spec.family] = family_times.get(spec.family, 0.0) + (
            time.perf_counter() - t0) * 1000.0
        values[spec.id - 1] = v
    return FeatureVector(
        recording_id=rec.recording_id,
        values=values,
        flagged_ids=flagged,
        family_times_ms=family_times,
        mode=mode,
    )


def write_features_csv(path, vectors: list[FeatureVector]) -> None:
    """Wide CSV: recording_id column then one column per feature name."""
    import csv as _csv

    names = feature_names()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["recording_id", *names])
        for vec in vectors:
            writer.writerow([vec.recording_id, *[repr(float(v)) for v in vec.values]])


def read_features_csv(path) -> tuple[list[str], np.ndarray]:
    """(recording_ids, matrix) from a wide CSV; column order must match."""
    import csv as _csv

    names = feature_names()
    ids: list[str] = []
    rows: list[list[float]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = _csv.reader(fh)
        header = next(reader)
        if header[1:] != names:
            raise ValueError("feature CSV column set does not match this catalog version")
        for row in reader:
            ids.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return ids, np.asarray(rows)


def save_feature_cache(path, ids: list[str], matrix: np.ndarray) -> None:
    """Binary columnar cache (compressed npz)."""
    np.savez_compressed(path, recording_ids=np.asarray(ids), values=matrix,
                        catalog_version=CATALOG_VERSION)


def load_feature_cache(path) -> tuple[list[str], np.ndarray]:
    doc = np.load(path, allow_pickle=False)
    if str(doc["catalog_version"]) != CATALOG_VERSION:
        raise ValueError("feature cache built against a different catalog version")
    return [str(s) for s in doc["recording_ids"]], doc["values"]
