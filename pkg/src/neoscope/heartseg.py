"""Heart-sound state decoding and peak detection.

The decoder is a duration-dependent four-state HMM over the fixed cycle
first-sound -> systole -> second-sound -> diastole, Viterbi-decoded at
50 Hz envelope frames with Gaussian state-duration models seeded from a
heart-rate estimate. Two emission flavors exist: self-calibrating
Gaussians on a single normalized envelope (the autocorrelation-seeded
variant), and a discriminative logistic model over four envelope
channels loaded from a versioned JSON artifact (the duration-HMM variant
used for real-time quality features). Breath peaks come from the
300-450 Hz power envelope.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.signal import butter, find_peaks, sosfiltfilt

from . import _hsmm_kernels, dsp
from .audio import TARGET_FS, band_filter, AudioRecording

S1, SYSTOLE, S2, DIASTOLE = 0, 1, 2, 3
STATE_NAMES = ("S1", "systole", "S2", "diastole")
SEG_FRAME_FS = 50.0

# implementation defaults for the duration models, recorded in artifacts
S1_MEAN_S = 0.122
S2_MEAN_S = 0.092
MIN_HR_BPM = 70.0
MAX_HR_BPM = 220.0

SPRINGER_FEATURE_KINDS = (
    "homomorphic",
    "hilbert",
    "band_power_40_60",
    "wavelet_detail_rbio39_l3",
)

EMISSION_ARTIFACT_VERSION = 1


class SegmentationError(ValueError):
    pass


class MissingModelError(FileNotFoundError):
    """The discriminative emission artifact is absent."""


@dataclass
class StateSequence:
    labels: np.ndarray  # per-frame int in {0..3}
    frame_fs: float
    posteriors: np.ndarray | None = None  # (frames, 4)

    def segments(self) -> list[tuple[int, float, float]]:
        """(state, start_s, end_s) runs in order."""
        out = []
        start = 0
        lab = self.labels
        for i in range(1, len(lab) + 1):
            if i == len(lab) or lab[i] != lab[start]:
                out.append((int(lab[start]), start / self.frame_fs, i / self.frame_fs))
                start = i
        return out

    def state_durations(self, state: int) -> np.ndarray:
        return np.array([e - s for st, s, e in self.segments() if st == state])

    def onsets(self, state: int) -> np.ndarray:
        """Start times (s) of each run of `state`."""
        return np.array([s for st, s, _ in self.segments() if st == state])

    def sound_peak_indices(self, fs: float) -> np.ndarray:
        """Midpoints of S1 and S2 runs as sample indices at rate `fs`."""
        mids = [
            (s + e) / 2.0 for st, s, e in self.segments() if st in (S1, S2)
        ]
        return np.array(sorted(int(round(m * fs)) for m in mids), dtype=int)


@dataclass
class PeakList:
    indices: np.ndarray  # ascending sample indices
    kind: str  # heart | S1 | S2 | inspiration | expiration
    fs: float

    def __post_init__(self) -> None:
        self.indices = np.asarray(self.indices, dtype=int)
        if len(self.indices) > 1 and np.any(np.diff(self.indices) <= 0):
            raise ValueError("peak indices must be strictly increasing")

    def times(self) -> np.ndarray:
        return self.indices / self.fs


def duration_params(hr_bpm: float) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian state-duration means/sds (seconds) for a given heart rate."""
    cycle = 60.0 / hr_bpm
    sys_mean = max(0.32 * cycle - S1_MEAN_S, 0.04)
    dia_mean = max(cycle - S1_MEAN_S - S2_MEAN_S - sys_mean, 0.04)
    means = np.array([S1_MEAN_S, sys_mean, S2_MEAN_S, dia_mean])
    sds = np.maximum(0.2 * means, 0.02)
    return means, sds


def _duration_logpmf(means: np.ndarray, sds: np.ndarray, frame_fs: float) -> list[np.ndarray]:
    """Per-state log-pmf over durations 1..Dmax frames (normalized)."""
    pmfs = []
    for mean, sd in zip(means, sds):
        mu = mean * frame_fs
        sigma = max(sd * frame_fs, 0.8)
        dmax = max(int(np.ceil(mu + 3.5 * sigma)), 3)
        d = np.arange(1, dmax + 1)
        logp = -0.5 * ((d - mu) / sigma) ** 2
        logp -= np.log(np.exp(logp).sum())
        pmfs.append(logp)
    return pmfs


_PRED = np.array([DIASTOLE, S1, SYSTOLE, S2], dtype=np.int64)  # pred[j] precedes j
_NXT = np.array([SYSTOLE, S2, DIASTOLE, S1], dtype=np.int64)


def _duration_table(duration_logpmf: list[np.ndarray]) -> np.ndarray:
    dmax = max(len(p) for p in duration_logpmf)
    logdur = np.full((dmax, len(duration_logpmf)), -np.inf)
    for j, p in enumerate(duration_logpmf):
        logdur[: len(p), j] = p
    return logdur


def hsmm_viterbi(
    log_emission: np.ndarray,
    duration_logpmf: list[np.ndarray],
) -> np.ndarray:
    """Maximum-probability state path under the cyclic four-state chain.

    `log_emission` is (frames, 4). Only cycle-order transitions are legal,
    so each state has exactly one predecessor and the recurrence reduces
    to a sliding max over candidate durations.
    """
    T = log_emission.shape[0]
    n_states = 4
    logdur = _duration_table(duration_logpmf)
    dmax = logdur.shape[0]
    cum = np.vstack([np.zeros(n_states), np.cumsum(log_emission, axis=0)])  # (T+1, 4)

    if _hsmm_kernels.HAVE_NUMBA:
        delta, choice = _hsmm_kernels.viterbi_core(cum, logdur, _PRED)
    else:
        delta = np.full((T + 1, n_states), -np.inf)
        delta[0] = 0.0  # any state may open the window
        # amat[s, j] = delta[s, pred[j]] - cum[s, j]
        amat = np.full((T + 1, n_states), -np.inf)
        amat[0] = -cum[0]
        choice = np.zeros((T + 1, n_states), dtype=int)  # winning duration
        for t in range(1, T + 1):
            lo = max(0, t - dmax)
            window = amat[lo:t][::-1] + logdur[: t - lo]  # d = 1 .. t-lo
            best = np.argmax(window, axis=0)
            delta[t] = cum[t] + window[best, np.arange(n_states)]
            choice[t] = best + 1
            amat[t] = delta[t][_PRED] - cum[t]

    labels = np.empty(T, dtype=int)
    t = T
    j = int(np.argmax(delta[T]))
    while t > 0:
        d = int(choice[t, j])
        labels[t - d : t] = j
        t -= d
        j = int(_PRED[j])
    return labels


def _logsumexp(a: np.ndarray, axis=None) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    out = m + np.log(np.exp(a - m).sum(axis=axis, keepdims=True))
    m_bad = ~np.isfinite(m)
    if np.any(m_bad):
        out = np.where(m_bad, m, out)
    return np.squeeze(out, axis=axis) if axis is not None else float(out)


def hsmm_state_posteriors(
    log_emission: np.ndarray,
    duration_logpmf: list[np.ndarray],
) -> np.ndarray:
    """(frames, 4) per-frame state occupancy under the cyclic duration HMM.

    Sum-product counterpart of `hsmm_viterbi`: rhythmic input concentrates
    mass on one segmentation (sharp posteriors), arhythmic input spreads
    it over many (posteriors collapse toward occupancy fractions).
    """
    T = log_emission.shape[0]
    n_states = 4
    pred, nxt = _PRED, _NXT
    logdur = _duration_table(duration_logpmf)
    dmax = logdur.shape[0]
    cum = np.vstack([np.zeros(n_states), np.cumsum(log_emission, axis=0)])
    cum_p = cum[:, pred]  # column j = cumulative emissions of pred(j)
    logdur_p = logdur[:, pred]

    if _hsmm_kernels.HAVE_NUMBA:
        fwd = _hsmm_kernels.forward_core(cum_p, logdur_p, pred, float(-np.log(n_states)))
        _, bwd_n = _hsmm_kernels.backward_core(cum, logdur, nxt)
    else:
        # fwd[s, j]: log P(obs[0:s], segment boundary at s, next state j);
        # the arriving segment has state pred(j)
        fwd = np.full((T + 1, n_states), -np.inf)
        fwd[0] = -np.log(n_states)
        afwd_p = np.full((T + 1, n_states), -np.inf)  # fwd[s, pred(j)] - cum_p[s, j]
        afwd_p[0] = fwd[0, pred] - cum_p[0]
        for t in range(1, T + 1):
            lo = max(0, t - dmax)
            window = afwd_p[lo:t][::-1] + logdur_p[: t - lo]
            fwd[t] = _logsumexp(window, axis=0) + cum_p[t]
            afwd_p[t] = fwd[t, pred] - cum_p[t]

        # bwd[s, j]: log P(obs[s:T] | segment of state j starts at s)
        bwd = np.full((T + 1, n_states), -np.inf)
        bwd[T] = 0.0
        bwd_n = np.full((T + 1, n_states), -np.inf)  # bwd[s, nxt(j)] + cum[s, j]
        bwd_n[T] = bwd[T, nxt] + cum[T]
        for s in range(T - 1, -1, -1):
            hi = min(dmax, T - s)
            window = logdur[:hi] + bwd_n[s + 1 : s + hi + 1]
            bwd[s] = _logsumexp(window, axis=0) - cum[s]
            bwd_n[s] = bwd[s, nxt] + cum[s]

    log_z = _logsumexp(fwd[T], axis=0)  # boundary at T closes every path
    gamma = np.zeros((T + 1, n_states))
    s_idx = np.arange(T)
    for j in range(n_states):
        dj = len(duration_logpmf[j])
        d_idx = np.arange(1, dj + 1)
        ends = s_idx[:, None] + d_idx[None, :]
        valid = ends <= T
        ends_c = np.minimum(ends, T)
        # bwd_n[e, j] - cum[s, j] folds the segment emissions and the
        # successor term together
        w = (
            fwd[s_idx, j][:, None]
            + duration_logpmf[j][None, :]
            + bwd_n[ends_c, j]
            - cum[s_idx, j][:, None]
            - log_z
        )
        p = np.where(valid, np.exp(w), 0.0)
        gamma[:T, j] += p.sum(axis=1)  # each segment opens at its start...
        gamma[:, j] -= np.bincount(ends_c.ravel(), weights=p.ravel(),
                                   minlength=T + 1)  # ...and closes at its end
    gamma = np.cumsum(gamma[:-1], axis=0)
    total = gamma.sum(axis=1, keepdims=True)
    total[total <= 0] = 1.0
    return np.clip(gamma / total, 0.0, 1.0)


def _env_at_frames(env: dsp.Envelope, frame_fs: float = SEG_FRAME_FS) -> np.ndarray:
    if env.fs == frame_fs:
        return np.asarray(env.values, dtype=float)
    return dsp.resample_sequence(env.values, env.fs, frame_fs)


def estimate_heart_rate(
    x: np.ndarray,
    fs: float,
    lo_bpm: float = MIN_HR_BPM,
    hi_bpm: float = MAX_HR_BPM,
) -> tuple[float, float]:
    """(bpm, peak strength) from the envelope autocorrelation.

    The strength is the normalized autocorrelation value at the chosen
    lag; values under ~0.3 indicate little rhythmic structure.
    """
    env = dsp.analytic_envelope(np.asarray(x, dtype=float))
    ac = dsp.autocorr(env, fs)
    lag_lo = int(np.floor(60.0 / hi_bpm * fs))
    lag_hi = int(np.ceil(60.0 / lo_bpm * fs))
    lag_hi = min(lag_hi, len(ac.values) - 1)
    if lag_hi <= lag_lo:
        raise SegmentationError("signal too short for the heart-rate lag band")
    seg = ac.values[lag_lo : lag_hi + 1]
    k = int(np.argmax(seg))
    return 60.0 * fs / (lag_lo + k), float(seg[k])


def schmidt_segment(env: dsp.Envelope, hr_bpm: float) -> StateSequence:
    """Decode states from one normalized envelope with self-calibrated
    Gaussian emissions and heart-rate-seeded durations."""
    if not MIN_HR_BPM <= hr_bpm <= MAX_HR_BPM:
        raise SegmentationError(f"hr_bpm {hr_bpm} outside [{MIN_HR_BPM}, {MAX_HR_BPM}]")
    vals = _env_at_frames(env)
    if len(vals) < SEG_FRAME_FS * 60.0 / hr_bpm:
        raise SegmentationError("envelope shorter than one expected cycle")
    peak = np.max(np.abs(vals))
    norm = vals / peak if peak > 0 else vals
    hi = np.percentile(norm, 90)
    lo = np.percentile(norm, 40)
    spread = max(float(norm.std()), 0.05)
    means = np.array([hi, lo, hi, lo])
    sds = np.array([spread, spread, spread, spread])
    log_em = -0.5 * ((norm[:, None] - means[None, :]) / sds) ** 2 - np.log(sds)
    dmeans, dsds = duration_params(hr_bpm)
    labels = hsmm_viterbi(log_em, _duration_logpmf(dmeans, dsds, SEG_FRAME_FS))
    return StateSequence(labels=labels, frame_fs=SEG_FRAME_FS)


# ---------------------------------------------------------------------------
# discriminative-emission variant


@dataclass
class EmissionModel:
    weights: np.ndarray  # (4, n_features + 1), bias last
    priors: np.ndarray  # training state occupancy fractions
    feature_kinds: tuple[str, ...]
    frame_fs: float
    version: int = EMISSION_ARTIFACT_VERSION

    def log_posteriors(self, feats: np.ndarray) -> np.ndarray:
        """Log softmax state probabilities for (frames, n_features) input."""
        z = feats @ self.weights[:, :-1].T + self.weights[:, -1]
        z -= z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        return logp

    def log_emissions(self, feats: np.ndarray) -> np.ndarray:
        """Scaled likelihoods: posterior over prior, so uninformative
        frames contribute nothing instead of asserting the majority state."""
        return self.log_posteriors(feats) - np.log(self.priors)[None, :]

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "frame_fs": self.frame_fs,
            "feature_kinds": list(self.feature_kinds),
            "weights": self.weights.tolist(),
            "priors": self.priors.tolist(),
            "duration_defaults": {
                "s1_mean_s": S1_MEAN_S,
                "s2_mean_s": S2_MEAN_S,
            },
        }

    @classmethod
    def from_json(cls, doc: dict) -> "EmissionModel":
        return cls(
            weights=np.asarray(doc["weights"], dtype=float),
            priors=np.asarray(doc["priors"], dtype=float),
            feature_kinds=tuple(doc["feature_kinds"]),
            frame_fs=float(doc["frame_fs"]),
            version=int(doc["version"]),
        )


def save_emission_model(model: EmissionModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_json(), indent=1, sort_keys=True))


def load_emission_model(path: str | Path | None = None) -> EmissionModel:
    """Load from `path`, or the packaged default artifact."""
    if path is None:
        ref = resources.files("neoscope").joinpath("data/emission_model.json")
        if not ref.is_file():
            raise MissingModelError(
                "packaged emission artifact missing; train one with "
                "`neoscope train-emission` or pass an explicit path"
            )
        doc = json.loads(ref.read_text())
    else:
        p = Path(path)
        if not p.exists():
            raise MissingModelError(f"no emission artifact at {p}")
        doc = json.loads(p.read_text())
    return EmissionModel.from_json(doc)


def springer_features(x: np.ndarray, fs: float, env_at=None) -> np.ndarray:
    """(frames, 4) z-scored envelope channels at the segmentation rate.

    `env_at(kind, rate)` may supply precomputed envelopes (the feature
    extractor shares its per-recording cache this way).
    """
    cols = []
    for kind in SPRINGER_FEATURE_KINDS:
        if env_at is not None:
            cols.append(np.asarray(env_at(kind, SEG_FRAME_FS), dtype=float))
        else:
            env = dsp.compute_envelope(x, kind, fs)
            cols.append(_env_at_frames(env))
    n = min(len(c) for c in cols)
    feats = np.column_stack([c[:n] for c in cols])
    mu = feats.mean(axis=0)
    sd = feats.std(axis=0)
    sd[sd == 0] = 1.0
    return (feats - mu) / sd


_DEFAULT_MODEL: EmissionModel | None = None


def _default_model() -> EmissionModel:
    global _DEFAULT_MODEL
    if _DEFAULT_MODEL is None:
        _DEFAULT_MODEL = load_emission_model()
    return _DEFAULT_MODEL


def springer_segment(
    x: np.ndarray,
    fs: float = TARGET_FS,
    model: EmissionModel | None = None,
    hr_bpm: float | None = None,
    env_at=None,
) -> StateSequence:
    """Duration-HMM decode with discriminative logistic emissions.

    The initial heart-rate seed comes from the envelope-autocorrelation
    estimator unless supplied.
    """
    if model is None:
        model = _default_model()
    feats = springer_features(x, fs, env_at=env_at)
    if hr_bpm is None:
        hr_bpm, _ = estimate_heart_rate(x, fs)
        hr_bpm = float(np.clip(hr_bpm, MIN_HR_BPM, MAX_HR_BPM))
    log_em = model.log_emissions(feats)
    pmfs = _duration_logpmf(*duration_params(hr_bpm), model.frame_fs)
    labels = hsmm_viterbi(log_em, pmfs)
    return StateSequence(
        labels=labels,
        frame_fs=model.frame_fs,
        posteriors=hsmm_state_posteriors(log_em, pmfs),
    )


def train_emission_model(
    features: np.ndarray,
    labels: np.ndarray,
    frame_fs: float = SEG_FRAME_FS,
    l2: float = 1e-3,
    max_iter: int = 500,
) -> EmissionModel:
    """Fit the 4-class logistic emission on (frames, 4) features."""
    from scipy.optimize import minimize

    n, k = features.shape
    xb = np.column_stack([features, np.ones(n)])
    y = np.asarray(labels, dtype=int)
    onehot = np.eye(4)[y]

    def objective(w):
        W = w.reshape(4, k + 1)
        z = xb @ W.T
        z -= z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        loss = -(onehot * logp).sum() / n + l2 * (W[:, :-1] ** 2).sum()
        grad = (np.exp(logp) - onehot).T @ xb / n
        grad[:, :-1] += 2 * l2 * W[:, :-1]
        return loss, grad.ravel()

    res = minimize(
        objective,
        np.zeros(4 * (k + 1)),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_iter},
    )
    priors = np.bincount(y, minlength=4).astype(float)
    priors = np.maximum(priors, 1.0) / priors.sum()
    return EmissionModel(
        weights=res.x.reshape(4, k + 1),
        priors=priors,
        feature_kinds=SPRINGER_FEATURE_KINDS,
        frame_fs=frame_fs,
    )


# ---------------------------------------------------------------------------
# peak detectors


@lru_cache(maxsize=4)
def _highpass_sos(cut: float, fs: float) -> np.ndarray:
    return butter(2, cut, btype="high", fs=fs, output="sos")


def gieraltowski_peaks(x: np.ndarray, fs: float = TARGET_FS) -> PeakList:
    """Heart-peak candidates from the level-1 wavelet approximation.

    1 kHz resample -> 20 Hz highpass -> db2 level-1 approximation ->
    normalization -> peaks above the 85th signal percentile, kept if
    above the 58th percentile of peak heights.
    """
    x = np.asarray(x, dtype=float)
    if len(x) / fs < 2.2:
        raise dsp.SignalTooShort("need at least 2200 ms of audio")
    work_fs = 1000.0
    sig = dsp.resample_sequence(x, fs, work_fs)
    sig = sosfiltfilt(_highpass_sos(20.0, work_fs), sig)
    from .wavelets import dwt

    approx, _ = dwt(sig, "db2")
    approx_fs = work_fs / 2.0
    mag = np.abs(approx)
    peak = mag.max()
    if peak <= 1e-9:
        return PeakList(np.array([], dtype=int), "heart", fs)
    mag = mag / peak
    height = np.percentile(mag, 85)
    min_dist = max(1, int(round(60.0 / MAX_HR_BPM * approx_fs)))
    idx, props = find_peaks(mag, height=max(height, 1e-3), distance=min_dist)
    if len(idx) == 0:
        return PeakList(np.array([], dtype=int), "heart", fs)
    # small tolerance so near-equal peak heights are not split by the quantile
    cut = 0.9 * np.percentile(props["peak_heights"], 58)
    idx = idx[props["peak_heights"] >= cut]
    return PeakList(np.unique(np.round(idx * fs / approx_fs).astype(int)), "heart", fs)


def liang_peaks(x: np.ndarray, fs: float = TARGET_FS) -> PeakList:
    """S1/S2 candidates from the smoothed Shannon-energy envelope."""
    x = np.asarray(x, dtype=float)
    if len(x) < int(0.1 * fs):
        raise dsp.SignalTooShort("need at least 100 ms of audio")
    env = dsp.shannon_energy_envelope(x, fs)
    peak = env.max()
    if peak <= 1e-9:
        return PeakList(np.array([], dtype=int), "heart", fs)
    norm = env / peak
    min_gap = int(round(0.08 * fs))  # keeps S1-S2 pairs separable
    idx, _ = find_peaks(norm, height=0.2, distance=min_gap)
    return PeakList(idx, "heart", fs)


def breath_peaks(x: np.ndarray, fs: float = TARGET_FS, win_s: float = 6.0) -> PeakList:
    """Inspiration peaks from the smoothed 300-450 Hz power envelope.

    The smoothing window must stay well under the shortest breath period
    (0.75 s at 80 breaths/min) or adjacent inspirations merge.
    """
    x = np.asarray(x, dtype=float)
    if len(x) / fs < win_s:
        raise dsp.SignalTooShort(f"need at least {win_s} s of audio")
    env = dsp.compute_envelope(x, "psd_300_450", fs)
    smooth = dsp._moving_average(env.values, int(round(0.3 * env.fs)))
    peak = smooth.max()
    if peak <= 1e-12:
        return PeakList(np.array([], dtype=int), "inspiration", fs)
    norm = smooth / peak
    min_dist = max(1, int(round(60.0 / 80.0 * env.fs)))  # max 80 breaths/min
    floor = norm.min()
    idx, _ = find_peaks(
        norm,
        distance=min_dist,
        prominence=0.15 * (1.0 - floor) + 1e-9,
        height=floor + 0.1 * (1.0 - floor),
    )
    frame_offset = dsp.FRAME_WIN_S / 2.0  # frame timestamps at window centers
    samples = np.round((idx / env.fs + frame_offset) * fs).astype(int)
    samples = samples[samples < len(x)]
    return PeakList(np.unique(samples), "inspiration", fs)


def heart_band_of(rec_or_samples, fs: float = TARGET_FS, zero_phase: bool = True) -> np.ndarray:
    """Convenience: 50-250 Hz view of raw samples or an AudioRecording."""
    if isinstance(rec_or_samples, AudioRecording):
        rec = rec_or_samples
    else:
        rec = AudioRecording(np.asarray(rec_or_samples, dtype=float), fs)
    if rec.band == "heart_band":
        return rec.samples
    return band_filter(rec, "heart", zero_phase=zero_phase).samples
