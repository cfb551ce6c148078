import threading
import time

import numpy as np
import pytest

from neoscope import rtengine, synth
from neoscope.rtengine import RingBuffer, StreamEngine, bench_features, score_window
from tests.conftest import make_mixed


class TestRingBuffer:
    def test_push_counts(self):
        ring = RingBuffer()
        ring.push(np.ones(4000))
        assert ring.filled == 4000

    def test_keeps_last_ten_seconds(self):
        ring = RingBuffer()
        for sec in range(11):
            ring.push(np.full(4000, float(sec)))
        snap = ring.snapshot()
        assert len(snap) == 40000
        assert snap[0] == 1.0 and snap[-1] == 10.0

    def test_snapshot_chronological(self):
        ring = RingBuffer(capacity=10)
        ring.push(np.arange(8.0))
        ring.push(np.arange(8.0, 14.0))
        assert np.array_equal(ring.snapshot(), np.arange(4.0, 14.0))

    def test_oversized_push(self):
        ring = RingBuffer(capacity=10)
        ring.push(np.arange(25.0))
        assert np.array_equal(ring.snapshot(), np.arange(15.0, 25.0))


class TestEngine:
    def test_warmup_then_scores(self, micro_models):
        eng = StreamEngine(micro_models["heart"], micro_models["lung"])
        msg = eng.tick()
        assert msg.warmup and msg.heart_quality is None
        stream = make_mixed("heart", 120, 15, seed=50, duration_s=12)
        for sec in range(12):
            eng.push(stream.samples[sec * 4000 : (sec + 1) * 4000], 4000)
        msg = eng.tick()
        assert not msg.warmup
        assert 1.0 <= msg.heart_quality <= 5.0
        assert 1.0 <= msg.lung_quality <= 5.0
        assert abs(msg.hr - 120) <= 3.0

    def test_push_at_8k_gains_4000(self, micro_models):
        eng = StreamEngine(micro_models["heart"], micro_models["lung"])
        eng.push(np.zeros(8000), 8000)
        assert eng.ring.filled == 4000

    def test_overrun_counted(self, micro_models):
        eng = StreamEngine(micro_models["heart"], micro_models["lung"])
        eng.push(np.zeros(50000), 4000)
        assert eng.overruns == 1
        assert eng.ring.filled == 40000

    def test_monotone_t_without_new_data(self, micro_models):
        eng = StreamEngine(micro_models["heart"], micro_models["lung"])
        eng.push(np.zeros(4000), 4000)
        t1 = eng.tick().t
        t2 = eng.tick().t
        assert t2 > t1

    def test_identical_window_identical_message(self, micro_models):
        window = make_mixed("heart", 120, 10, seed=51).samples
        a = score_window(window, micro_models["heart"], micro_models["lung"])
        b = score_window(window, micro_models["heart"], micro_models["lung"])
        assert a == b

    def test_tick_does_not_block_push(self, micro_models):
        eng = StreamEngine(micro_models["heart"], micro_models["lung"])
        stream = make_mixed("heart", 120, 15, seed=52, duration_s=12)
        for sec in range(11):
            eng.push(stream.samples[sec * 4000 : (sec + 1) * 4000], 4000)

        push_times = []

        def pusher():
            for _ in range(20):
                t0 = time.perf_counter()
                eng.push(np.zeros(400), 4000)
                push_times.append(time.perf_counter() - t0)
                time.sleep(0.002)

        thread = threading.Thread(target=pusher)
        thread.start()
        eng.tick()
        eng.tick()
        thread.join()
        assert max(push_times) < 0.05  # pushes never wait on a full tick

    def test_requires_fast_models(self, micro_models):
        slow = micro_models["heart"]
        import copy

        full_model = copy.deepcopy(slow)
        full_model.mode = "full"
        with pytest.raises(ValueError):
            StreamEngine(full_model, micro_models["lung"])

    def test_markers_recorded(self, micro_models):
        eng = StreamEngine(micro_models["heart"], micro_models["lung"])
        eng.push(np.zeros(8000), 4000)
        m = eng.mark(4)
        assert m["t"] == 2.0 and eng.markers == [m]


class TestBench:
    def test_report_shape(self):
        rec = make_mixed("heart", 120, 10, seed=53)
        report = bench_features(rec, repetitions=2)
        assert report["family_coverage"] is True
        assert report["fast_total_ms_median"] < report["full_total_ms_median"]
        assert report["catalog_size"] == 400
        fams = report["families"]
        assert all("median_ms" in v and "cost_classes" in v for v in fams.values())
