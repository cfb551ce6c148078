import numpy as np
import pytest

from neoscope import dsp, heartseg, synth
from neoscope.audio import read_manifest


class TestHeartSynth:
    def test_cycle_duration_self_check(self):
        rec = synth.synth_heart(synth.SynthSpec("heart", 120, 20, seed=1))
        env = dsp.analytic_envelope(rec.samples)
        ac = dsp.autocorr(env, rec.fs)
        lag_lo = int(60 / 220 * rec.fs)
        lag_hi = int(60 / 70 * rec.fs)
        lag = lag_lo + np.argmax(ac.values[lag_lo:lag_hi])
        assert abs(lag / rec.fs - 0.5) <= 0.02

    def test_seed_determinism(self):
        a = synth.synth_heart(synth.SynthSpec("heart", 140, 5, seed=9))
        b = synth.synth_heart(synth.SynthSpec("heart", 140, 5, seed=9))
        assert np.array_equal(a.samples, b.samples)

    def test_spectral_mass_in_heart_band(self):
        rec = synth.synth_heart(synth.SynthSpec("heart", 120, 20, seed=2))
        freqs, pxx = dsp.psd(rec.samples, rec.fs)
        assert dsp.band_power_ratio(freqs, pxx, 50, 250) >= 0.8

    def test_rate_bounds(self):
        with pytest.raises(ValueError):
            synth.SynthSpec("heart", 60, 0)
        with pytest.raises(ValueError):
            synth.SynthSpec("heart", 230, 0)


class TestLungSynth:
    def test_breath_peak_count(self):
        rec = synth.synth_lung(synth.SynthSpec("lung", 40, 20, seed=3))
        peaks = heartseg.breath_peaks(rec.samples, rec.fs)
        assert 6 <= len(peaks.indices) <= 7

    def test_seed_determinism(self):
        a = synth.synth_lung(synth.SynthSpec("lung", 30, 0, seed=4))
        b = synth.synth_lung(synth.SynthSpec("lung", 30, 0, seed=4))
        assert np.array_equal(a.samples, b.samples)

    def test_band_ratio(self):
        rec = synth.synth_lung(synth.SynthSpec("lung", 40, 20, seed=5))
        freqs, pxx = dsp.psd(rec.samples, rec.fs)
        assert dsp.band_power_ratio(freqs, pxx, 200, 1000) >= 0.8


class TestMix:
    def test_zero_db_exact(self):
        clean = synth.synth_heart(synth.SynthSpec("heart", 120, 0, seed=6))
        noise = synth.gen_noise("white", len(clean.samples), clean.fs, 7)
        mixed = synth.mix(clean, noise, 0.0)
        # recover the components through linearity of the mix
        scale = np.sqrt(np.mean(clean.samples**2) / np.mean(noise**2))
        peak = np.max(np.abs(clean.samples + scale * noise))
        ratio = np.mean(clean.samples**2) / np.mean((scale * noise) ** 2)
        assert abs(ratio - 1.0) < 1e-6
        assert np.allclose(mixed.samples, (clean.samples + scale * noise) / peak)

    def test_minus_ten_db(self):
        clean = synth.synth_heart(synth.SynthSpec("heart", 120, 0, seed=8))
        noise = synth.gen_noise("babble", len(clean.samples), clean.fs, 9)
        scale = np.sqrt(
            np.mean(clean.samples**2) / (np.mean(noise**2) * 10 ** (-10 / 10.0))
        )
        assert abs(np.mean(clean.samples**2) / np.mean((scale * noise) ** 2) - 0.1) < 1e-6

    def test_infinite_snr_returns_clean(self):
        clean = synth.synth_heart(synth.SynthSpec("heart", 120, 0, seed=10))
        noise = synth.gen_noise("white", len(clean.samples), clean.fs, 11)
        assert synth.mix(clean, noise, np.inf) is clean

    def test_zero_power_rejected(self):
        clean = synth.synth_heart(synth.SynthSpec("heart", 120, 0, seed=12))
        with pytest.raises(ValueError):
            synth.mix(clean, np.zeros(len(clean.samples)), 0.0)

    def test_peak_normalized(self):
        clean = synth.synth_heart(synth.SynthSpec("heart", 120, 0, seed=13))
        noise = synth.gen_noise("cry", len(clean.samples), clean.fs, 14)
        mixed = synth.mix(clean, noise, -5.0)
        assert abs(np.max(np.abs(mixed.samples)) - 1.0) < 1e-12


class TestLabelMap:
    @pytest.mark.parametrize("snr,label", [(-20, 1), (-10.0, 2), (-5, 2), (-3, 3),
                                           (0, 3), (3, 4), (9.9, 4), (10, 5), (15, 5)])
    def test_staircase(self, snr, label):
        assert synth.label_map(snr) == label

    def test_monotone(self):
        grid = np.linspace(-30, 30, 301)
        labels = [synth.label_map(s) for s in grid]
        assert all(b >= a for a, b in zip(labels, labels[1:]))


class TestNoiseKinds:
    @pytest.mark.parametrize("kind", synth.NOISE_KINDS)
    def test_deterministic_and_finite(self, kind):
        a = synth.gen_noise(kind, 40000, 4000.0, 21)
        b = synth.gen_noise(kind, 40000, 4000.0, 21)
        assert np.array_equal(a, b)
        assert np.all(np.isfinite(a)) and np.any(a != 0)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            synth.gen_noise("kazoo", 100, 4000.0, 0)

    def test_cry_energy_in_cry_band(self):
        x = synth.gen_noise("cry", 40000, 4000.0, 22)
        freqs, pxx = dsp.psd(x, 4000.0)
        assert dsp.band_power_ratio(freqs, pxx, 295, 406) > 0.3


class TestCorpus:
    def test_reproducible_manifest(self, tmp_path):
        m1 = synth.generate_corpus(tmp_path / "a", 10, 77)
        m2 = synth.generate_corpus(tmp_path / "b", 10, 77)
        assert [e.recording_id for e in m1.entries] == [e.recording_id for e in m2.entries]
        assert [e.label for e in m1.entries] == [e.label for e in m2.entries]
        wav1 = (tmp_path / "a" / "syn-heart-0000.wav").read_bytes()
        wav2 = (tmp_path / "b" / "syn-heart-0000.wav").read_bytes()
        assert wav1 == wav2

    def test_patients_group_three_recordings(self, tmp_path):
        m = synth.generate_corpus(tmp_path / "c", 12, 5)
        heart = [e for e in m.entries if e.target == "heart"]
        by_pat = {}
        for e in heart:
            by_pat.setdefault(e.patient_id, []).append(e.recording_id)
        assert all(len(v) <= 3 for v in by_pat.values())

    def test_manifest_readably_round_trips(self, tmp_path):
        synth.generate_corpus(tmp_path / "d", 6, 8)
        m = read_manifest(tmp_path / "d" / "manifest.csv")
        assert len(m.entries) == 6
        assert all(e.label in (1, 2, 3, 4, 5) for e in m.entries)

    def test_labels_match_staircase(self):
        for item in synth.plan_corpus(30, 99):
            assert item.label == synth.label_map(item.snr_db)
