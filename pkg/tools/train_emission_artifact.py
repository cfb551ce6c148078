"""Regenerate the packaged discriminative emission artifact.

Trains the four-state logistic emission on a deterministic synthetic
dyad corpus with construction-time state labels, then writes
src/neoscope/data/emission_model.json. Run from the repository root.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from neoscope import heartseg, synth

ROOT_SEED = 20240401
N_TRAIN = 24


def frame_labels(events: synth.HeartEvents, n_frames: int, frame_fs: float) -> np.ndarray:
    """Construction-truth state per frame from dyad boundaries."""
    labels = np.full(n_frames, heartseg.DIASTOLE, dtype=int)
    times = (np.arange(n_frames) + 0.5) / frame_fs
    for s, e in zip(events.s1_starts, events.s1_ends):
        labels[(times >= s) & (times < e)] = heartseg.S1
    for s, e in zip(events.s2_starts, events.s2_ends):
        labels[(times >= s) & (times < e)] = heartseg.S2
    for s1e, s2s in zip(events.s1_ends, events.s2_starts):
        labels[(times >= s1e) & (times < s2s)] = heartseg.SYSTOLE
    return labels


def main() -> None:
    rng = np.random.default_rng(ROOT_SEED)
    feats, labs = [], []
    for i in range(N_TRAIN):
        hr = float(rng.uniform(75, 210))
        snr = float(rng.uniform(5, 30))
        spec = synth.SynthSpec("heart", hr, snr, seed=int(rng.integers(2**31 - 1)))
        clean, events = synth.heart_clean(spec)
        noise = synth.gen_noise("white", len(clean), spec.fs, spec.seed + 1)
        rec = synth.mix(
            synth.synth_heart(spec), noise, snr
        )
        hb = heartseg.heart_band_of(rec.samples, spec.fs)
        f = heartseg.springer_features(hb, spec.fs)
        y = frame_labels(events, len(f), heartseg.SEG_FRAME_FS)
        feats.append(f)
        labs.append(y)
    X = np.vstack(feats)
    y = np.concatenate(labs)
    print("training on", X.shape, "frames; state counts", np.bincount(y))
    model = heartseg.train_emission_model(X, y)
    out = Path("src/neoscope/data/emission_model.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    heartseg.save_emission_model(model, out)
    print("wrote", out)

    # quick self-check on held-out rates
    for hr in (90.0, 140.0, 180.0):
        spec = synth.SynthSpec("heart", hr, 25.0, seed=999)
        x, _ = synth.heart_clean(spec)
        hb = heartseg.heart_band_of(x, spec.fs)
        seq = heartseg.springer_segment(hb, spec.fs, model=model)
        s1 = seq.onsets(heartseg.S1)
        est = 60.0 / np.mean(np.diff(s1))
        print(f"hr {hr:.0f}: decoded {est:.1f} bpm from {len(s1)} first sounds")


if __name__ == "__main__":
    main()
