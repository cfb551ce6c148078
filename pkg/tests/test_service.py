import asyncio
import base64
import csv
import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from neoscope import synth
from neoscope.service import create_app, start_ndjson_server
from neoscope.service.schemas import decode_pcm, encode_pcm
from tests.conftest import make_mixed

FS = 4000


@pytest.fixture(scope="module")
def client(micro_models, tmp_path_factory):
    csv_path = tmp_path_factory.mktemp("svc") / "session.csv"
    app = create_app(micro_models["heart"], micro_models["lung"], session_csv=csv_path)
    with TestClient(app) as c:
        c.session_csv = csv_path
        yield c


def audio_msg(samples, fs=FS):
    return {"type": "audio", "fs": fs, "pcm": encode_pcm(samples)}


class TestPcmCodec:
    def test_round_trip_pcm16(self):
        x = np.linspace(-0.9, 0.9, 100)
        back = decode_pcm(encode_pcm(x))
        assert np.max(np.abs(back - x)) < 1e-4

    def test_round_trip_f32(self):
        x = np.linspace(-0.9, 0.9, 100)
        back = decode_pcm(encode_pcm(x, "f32"), "f32")
        assert np.max(np.abs(back - x)) < 1e-6


class TestRest:
    def test_health(self, client):
        doc = client.get("/health").json()
        assert doc["status"] == "ok"
        assert doc["catalog_version"] == "1"

    def test_catalog(self, client):
        doc = client.get("/catalog").json()
        assert doc["size"] == 400 and len(doc["features"]) == 400

    def test_models(self, client):
        docs = client.get("/models").json()
        assert {d["target"] for d in docs} == {"heart", "lung"}
        assert all(d["mode"] == "fast" for d in docs)

    def test_score(self, client):
        rec = make_mixed("heart", 120, 15, seed=60)
        resp = client.post("/score", json=audio_msg(rec.samples))
        assert resp.status_code == 200
        doc = resp.json()
        assert 1.0 <= doc["heart_quality"] <= 5.0
        assert abs(doc["hr"] - 120) <= 3.0

    def test_score_rejects_short(self, client):
        resp = client.post("/score", json=audio_msg(np.zeros(4000)))
        assert resp.status_code == 422

    def test_features_parity_with_local(self, client, micro_models):
        from neoscope import features

        rec = make_mixed("lung", 40, 5, seed=61)
        resp = client.post("/features", json={**audio_msg(rec.samples), "mode": "fast"})
        assert resp.status_code == 200
        doc = resp.json()
        local = features.extract(rec, "fast")
        remote = np.array([np.nan if v is None else v for v in doc["values"]])
        mask = ~np.isnan(local.values)
        # pcm16 transport quantizes the samples, so compare loosely
        finite = remote[mask][np.abs(local.values[mask]) > 1e-6]
        ref = local.values[mask][np.abs(local.values[mask]) > 1e-6]
        assert np.median(np.abs((finite - ref) / ref)) < 0.05
        assert doc["names"] == features.feature_names()

    def test_vitals(self, client):
        rec = make_mixed("heart", 140, 15, seed=62)
        resp = client.post("/vitals", json={**audio_msg(rec.samples), "kind": "hr"})
        assert resp.status_code == 200
        series = resp.json()["series"]
        assert {s["method"] for s in series} == {"envelope_autocorr", "duration_hmm"}
        vals = np.array(series[0]["values"])
        assert np.mean(np.abs(vals - 140)) < 3.0

    def test_synth_deterministic(self, client):
        req = {"target": "heart", "rate_bpm": 120, "snr_db": 5, "seed": 3}
        a = client.post("/synth", json=req).json()
        b = client.post("/synth", json=req).json()
        assert a["pcm"] == b["pcm"]
        assert a["label"] == synth.label_map(5)

    def test_synth_validation(self, client):
        resp = client.post("/synth", json={"target": "heart", "rate_bpm": 10, "snr_db": 0})
        assert resp.status_code == 422


class TestWebSocket:
    def test_stream_session(self, client):
        stream = make_mixed("heart", 120, 15, seed=63, duration_s=13)
        scores = []
        with client.websocket_connect("/ws/stream") as ws:
            for sec in range(13):
                chunk = stream.samples[sec * FS : (sec + 1) * FS]
                ws.send_json(audio_msg(chunk))
                # one score message arrives per stream second
                msg = ws.receive_json()
                assert msg["type"] == "score" and msg["v"] == 1
                scores.append(msg)
            ws.send_json({"type": "marker", "label": 4})
            ack = ws.receive_json()
            assert ack["type"] == "marker_ack" and ack["label"] == 4
        warmups = [m for m in scores if m["warmup"]]
        live = [m for m in scores if not m["warmup"]]
        assert len(warmups) == 9 and len(live) == 4
        assert all(m["window_s"] == 10 for m in scores)
        ts = [m["t"] for m in scores]
        assert ts == sorted(ts) and len(set(ts)) == len(ts)
        assert all(1 <= m["heart_quality"] <= 5 for m in live)

    def test_marker_lands_in_session_csv(self, client):
        with client.websocket_connect("/ws/stream") as ws:
            ws.send_json(audio_msg(np.zeros(FS)))
            ws.receive_json()
            ws.send_json({"type": "marker", "label": 5})
            ws.receive_json()
        rows = list(csv.DictReader(open(client.session_csv)))
        assert any(r["score"] == "5" and r["rater_id"] == "operator" for r in rows)

    def test_malformed_messages_report_errors(self, client):
        with client.websocket_connect("/ws/stream") as ws:
            ws.send_json({"type": "audio", "fs": 4000, "pcm": "!!!notbase64"})
            err = ws.receive_json()
            assert err["type"] == "error"
            ws.send_json({"type": "mystery"})
            err = ws.receive_json()
            assert err["type"] == "error"


class TestNdjsonTcp:
    def test_stream_over_tcp(self, micro_models, tmp_path):
        async def run():
            server = await start_ndjson_server(
                "127.0.0.1", 0, micro_models["heart"], micro_models["lung"],
                tmp_path / "tcp.csv")
            port = server.sockets[0].getsockname()[1]
            reader, writer = await asyncio.open_connection("127.0.0.1", port)
            stream = make_mixed("heart", 110, 12, seed=64, duration_s=11)
            got = []
            for sec in range(11):
                chunk = stream.samples[sec * FS : (sec + 1) * FS]
                writer.write((json.dumps(audio_msg(chunk)) + "\n").encode())
                await writer.drain()
                line = await asyncio.wait_for(reader.readline(), timeout=30)
                got.append(json.loads(line))
            writer.write((json.dumps({"type": "marker", "label": 2}) + "\n").encode())
            await writer.drain()
            ack = json.loads(await asyncio.wait_for(reader.readline(), timeout=10))
            writer.close()
            server.close()
            await server.wait_closed()
            return got, ack

        got, ack = asyncio.run(run())
        assert all(m["type"] == "score" for m in got)
        assert any(not m["warmup"] for m in got)
        assert ack["type"] == "marker_ack" and ack["label"] == 2
        rows = list(csv.DictReader(open(tmp_path / "tcp.csv")))
        assert rows and rows[0]["score"] == "2"


def test_app_without_models_rejects_scoring():
    app = create_app()
    with TestClient(app) as c:
        assert c.get("/health").status_code == 200
        rec = make_mixed("heart", 120, 15, seed=65)
        pcm = encode_pcm(rec.samples)
        assert c.post("/score", json={"fs": FS, "pcm": pcm}).status_code == 503
