import numpy as np
import pytest

from neoscope import features, synth, training

FS = 4000


def make_mixed(target: str, rate: float, snr_db: float, seed: int,
               noise_kind: str = "white", duration_s: float = 10.0):
    """Corpus-consistent probe: the ratio holds in the target's band."""
    spec = synth.SynthSpec(target, rate, snr_db, noise_kind=noise_kind,
                           seed=seed, duration_s=duration_s)
    clean = synth.synth_heart(spec) if target == "heart" else synth.synth_lung(spec)
    noise = synth.gen_noise(noise_kind, len(clean.samples), spec.fs, seed + 1)
    return synth.mix(clean, noise, snr_db, band=synth.TARGET_BANDS[target])


@pytest.fixture(scope="session")
def micro_corpus(tmp_path_factory):
    """60-item corpus with causal fast features, shared across the session."""
    items = synth.plan_corpus(60, 20240601)
    data = {"heart": {"X": [], "y": [], "pid": []},
            "lung": {"X": [], "y": [], "pid": []}}
    for item in items:
        rec = synth.render_item(item)
        fv = features.extract(rec, "fast", zero_phase=False)
        d = data[item.target]
        d["X"].append(np.nan_to_num(fv.values, nan=0.0))
        d["y"].append(item.label)
        d["pid"].append(item.patient_id)
    for d in data.values():
        d["X"] = np.asarray(d["X"])
        d["y"] = np.asarray(d["y"])
        d["pid"] = np.asarray(d["pid"])
    return data


@pytest.fixture(scope="session")
def micro_models(micro_corpus):
    """Fast-mode causal-trained models for engine/service tests."""
    models = {}
    for target in ("heart", "lung"):
        d = micro_corpus[target]
        model, _ = training.train_quality_model(
            d["X"], d["y"], d["pid"], target, mode="fast",
            families=("ridge", "knn"), seed=11,
        )
        model.metadata["filtering"] = "causal"
        models[target] = model
    return models
