import numpy as np
import pytest

from neoscope import dsp, synth, vitals
from neoscope.audio import AudioRecording
from tests.conftest import make_mixed

FS = 4000


def symmetric_dyad_train(bpm: float, seconds: float = 10.0) -> AudioRecording:
    """Identical sounds at half-cycle spacing (sub-band harmonic probe)."""
    fs = FS
    n = int(seconds * fs)
    x = np.zeros(n)
    half = 30.0 / bpm  # half cycle in seconds
    t = 0.2
    rng = np.random.default_rng(0)
    while t + 0.1 < seconds:
        i0 = int(t * fs)
        burst = np.hanning(400) * np.sin(2 * np.pi * 100 * np.arange(400) / fs)
        if i0 + 400 <= n:
            x[i0 : i0 + 400] += burst
        t += half
    return AudioRecording(x, fs)


class TestHrAutocorr:
    def test_synthetic_140(self):
        rec = make_mixed("heart", 140, 15, seed=140)
        s = vitals.hr_schmidt(rec)
        assert np.mean(np.abs(s.values - 140)) <= 2.0
        assert np.all(s.values >= 70) and np.all(s.values <= 220)

    def test_sub_band_rate_reports_first_harmonic(self):
        rec = symmetric_dyad_train(60.0)
        s = vitals.hr_schmidt(rec)
        assert np.median(s.values) == pytest.approx(120.0, abs=3.0)

    def test_silence_flagged(self):
        rec = AudioRecording(np.zeros(40000), FS)
        s = vitals.hr_schmidt(rec)
        assert np.all(s.flags)
        assert np.all((s.values >= 70) & (s.values <= 220))

    def test_amplitude_invariance(self):
        rec = make_mixed("heart", 120, 15, seed=77)
        half = AudioRecording(rec.samples * 0.5, FS)
        a = vitals.hr_schmidt(rec).values
        b = vitals.hr_schmidt(half).values
        assert np.max(np.abs(a - b)) <= 1.0

    def test_causality(self):
        rec = make_mixed("heart", 120, 15, seed=78)
        base = vitals.hr_schmidt(rec)
        tampered = rec.samples.copy()
        tampered[int(5.0 * FS):] = np.random.default_rng(1).normal(
            size=len(tampered) - int(5.0 * FS))
        after = vitals.hr_schmidt(AudioRecording(tampered, FS))
        sel = base.times <= 5.0
        assert np.array_equal(base.values[sel], after.values[sel])

    def test_pure_periodic_within_lag_quantum(self):
        bpm = 150.0
        rec = make_mixed("heart", bpm, 30, seed=79)
        s = vitals.hr_schmidt(rec)
        period = 60.0 / bpm
        lag_quantum = 1.0 / FS
        worst = 60.0 / period - 60.0 / (period + lag_quantum)
        assert np.median(np.abs(s.values - bpm)) <= max(worst, 1.0) + 1.5

    def test_too_short(self):
        with pytest.raises(dsp.SignalTooShort):
            vitals.hr_schmidt(AudioRecording(np.ones(4000), FS))


class TestHrSegmentation:
    def test_clean_120(self):
        rec = make_mixed("heart", 120, 15, seed=120)
        sp = vitals.hr_springer(rec)
        assert np.mean(np.abs(sp.values - 120)) <= 2.0

    def test_method_agreement_at_high_snr(self):
        rec = make_mixed("heart", 120, 20, seed=121)
        a = vitals.hr_schmidt(rec)
        b = vitals.hr_springer(rec)
        assert np.max(np.abs(a.values - b.values)) <= 5.0

    def test_heavy_noise_flags_present(self):
        rec = AudioRecording(np.random.default_rng(2).normal(size=40000), FS)
        sp = vitals.hr_springer(rec)
        assert sp.flags.any()


class TestBr:
    @pytest.mark.parametrize("rate", [20, 40, 60])
    def test_rates(self, rate):
        rec = make_mixed("lung", rate, 15, seed=rate)
        b = vitals.br_estimate(rec)
        ok = ~b.flags
        assert ok.any()
        assert np.mean(np.abs(b.values[ok] - rate)) <= 3.0

    def test_72_per_minute(self):
        rec = make_mixed("lung", 72, 15, seed=72)
        b = vitals.br_estimate(rec)
        ok = ~b.flags
        assert np.mean(np.abs(b.values[ok] - 72)) <= 3.0

    def test_unmodulated_noise_mostly_flagged(self):
        rec = AudioRecording(np.random.default_rng(3).normal(size=40000), FS)
        b = vitals.br_estimate(rec)
        assert b.flags.mean() > 0.5

    def test_too_short(self):
        with pytest.raises(dsp.SignalTooShort):
            vitals.br_estimate(AudioRecording(np.ones(8000), FS))


class TestVitalError:
    def _series(self, values, times=None):
        times = np.arange(3, 3 + len(values)) if times is None else times
        return vitals.VitalSeries("hr", times, values, np.zeros(len(values), bool),
                                  3.0, "test")

    def test_exact_match(self):
        est = self._series(np.full(5, 120.0))
        rep = vitals.vital_error(
            [(est, est.times, est.values, q) for q in (1, 2, 3, 4, 5)], "hr", "test")
        for q in range(1, 6):
            assert rep.strata[q]["mae"] == 0.0
            assert rep.strata[q]["pct_acceptable"] == 1.0

    def test_constant_offset(self):
        est = self._series(np.full(5, 130.0))
        rep = vitals.vital_error([(est, est.times, np.full(5, 120.0), 3)], "hr", "t")
        assert rep.strata[3]["mae"] == 10.0
        assert rep.strata[3]["pct_acceptable"] == 0.0

    def test_strata_counts_sum(self):
        est = self._series(np.full(4, 120.0))
        rep = vitals.vital_error(
            [(est, est.times, est.values, 2), (est, est.times, est.values, 4)],
            "hr", "t")
        assert sum(s["n"] for s in rep.strata.values()) == 8

    def test_empty_overlap_rejected(self):
        est = self._series(np.full(3, 120.0), times=np.array([3.0, 4.0, 5.0]))
        with pytest.raises(ValueError):
            vitals.align_series(est, np.array([50.0]), np.array([120.0]))


def test_reference_csv_round_trip(tmp_path):
    path = tmp_path / "ref.csv"
    path.write_text("t_seconds,hr_bpm,br_bpm\n1,120,40\n2,121,41\n")
    t, hr, br = vitals.read_reference_csv(path)
    assert np.array_equal(t, [1.0, 2.0])
    assert np.array_equal(hr, [120.0, 121.0])
    assert np.array_equal(br, [40.0, 41.0])
