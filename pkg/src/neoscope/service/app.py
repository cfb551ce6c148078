"""FastAPI application wrapping the scoring core.

REST endpoints cover one-shot scoring, feature extraction, vitals, and
synthetic recording generation; `/ws/stream` speaks the same score
schema as the newline-delimited TCP front. Models are loaded once at
construction and shared read-only across requests.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect

from .. import __version__, synth, vitals
from ..audio import AudioRecording, TARGET_FS, resample_to_4k
from ..features import CATALOG_VERSION, catalog_json, extract, feature_names
from ..rtengine import score_window
from ..training import QualityModel, load_model
from . import schemas
from .session import StreamSession


def _as_recording(payload: schemas.AudioPayload) -> AudioRecording:
    samples = payload.samples()
    if len(samples) == 0:
        raise HTTPException(422, "empty audio payload")
    rec = AudioRecording(samples, payload.fs, recording_id="request")
    if rec.fs != TARGET_FS:
        if rec.fs < TARGET_FS:
            raise HTTPException(422, f"sample rate below {TARGET_FS} Hz is unsupported")
        rec = resample_to_4k(rec)
    return rec


def create_app(
    heart_model: QualityModel | str | Path | None = None,
    lung_model: QualityModel | str | Path | None = None,
    session_csv: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="neoscope", version=__version__)

    def _load(m):
        if m is None or isinstance(m, QualityModel):
            return m
        return load_model(m)

    app.state.heart_model = _load(heart_model)
    app.state.lung_model = _load(lung_model)
    app.state.session_csv = Path(session_csv) if session_csv else None
    app.state.sessions = 0

    def _require_models() -> tuple[QualityModel, QualityModel]:
        if app.state.heart_model is None or app.state.lung_model is None:
            raise HTTPException(503, "service started without quality models")
        return app.state.heart_model, app.state.lung_model

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(
            status="ok", version=__version__, catalog_version=CATALOG_VERSION
        )

    @app.get("/catalog")
    def get_catalog():
        import json

        return json.loads(catalog_json())

    @app.get("/models", response_model=list[schemas.ModelInfo])
    def models():
        out = []
        for m in (app.state.heart_model, app.state.lung_model):
            if m is not None:
                out.append(
                    schemas.ModelInfo(
                        target=m.target,
                        mode=m.mode,
                        family=m.metadata.get("family", m.regressor.kind),
                        n_features=len(m.selected_ids),
                        cv_mse=m.metadata.get("cv_mse"),
                    )
                )
        return out

    @app.post("/score", response_model=schemas.ScoreResponse)
    def score(req: schemas.ScoreRequest):
        heart, lung = _require_models()
        rec = _as_recording(req)
        if len(rec.samples) < TARGET_FS * 10:
            raise HTTPException(422, "need at least 10 s of audio to score")
        import time as _time

        t0 = _time.perf_counter()
        window = rec.samples[-TARGET_FS * 10:]
        result = score_window(window, heart, lung)
        return schemas.ScoreResponse(
            latency_ms=(_time.perf_counter() - t0) * 1000.0, **result
        )

    @app.post("/features", response_model=schemas.FeaturesResponse)
    def features_endpoint(req: schemas.FeaturesRequest):
        rec = _as_recording(req)
        if len(rec.samples) != TARGET_FS * 10:
            raise HTTPException(422, "feature extraction expects exactly 10 s of audio")
        fv = extract(rec, mode=req.mode)
        values = [None if not np.isfinite(v) else float(v) for v in fv.values]
        return schemas.FeaturesResponse(
            recording_id=fv.recording_id,
            mode=fv.mode,
            names=feature_names(),
            values=values,
            flagged_ids=fv.flagged_ids,
        )

    @app.post("/vitals", response_model=schemas.VitalsResponse)
    def vitals_endpoint(req: schemas.VitalsRequest):
        rec = _as_recording(req)
        series = []
        try:
            if req.kind in ("hr", "both"):
                series.append(vitals.hr_schmidt(rec))
                series.append(vitals.hr_springer(rec))
            if req.kind in ("br", "both"):
                series.append(vitals.br_estimate(rec))
        except Exception as exc:
            raise HTTPException(422, f"vitals failed: {exc}") from exc
        return schemas.VitalsResponse(
            series=[
                schemas.VitalSeriesModel(
                    kind=s.kind,
                    method=s.method,
                    times=s.times.tolist(),
                    values=s.values.tolist(),
                    flags=s.flags.tolist(),
                    window_s=s.window_s,
                )
                for s in series
            ]
        )

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth_endpoint(req: schemas.SynthRequest):
        try:
            spec = synth.SynthSpec(
                target=req.target,
                rate_bpm=req.rate_bpm,
                snr_db=req.snr_db,
                noise_kind=req.noise_kind,
                seed=req.seed,
                duration_s=req.duration_s,
            )
        except ValueError as exc:
            raise HTTPException(422, str(exc)) from exc
        clean = synth.synth_heart(spec) if spec.target == "heart" else synth.synth_lung(spec)
        noise = synth.gen_noise(spec.noise_kind, len(clean.samples), spec.fs, spec.seed + 1)
        rec = synth.mix(clean, noise, spec.snr_db)
        return schemas.SynthResponse(
            recording_id=rec.recording_id,
            label=synth.label_map(spec.snr_db),
            fs=rec.fs,
            pcm=schemas.encode_pcm(rec.samples),
        )

    @app.websocket("/ws/stream")
    async def ws_stream(ws: WebSocket):
        heart, lung = app.state.heart_model, app.state.lung_model
        if heart is None or lung is None:
            await ws.close(code=1011)
            return
        await ws.accept()
        app.state.sessions += 1
        session = StreamSession(
            heart, lung,
            session_csv=app.state.session_csv,
            session_id=f"ws{app.state.sessions}",
        )
        try:
            while True:
                msg = await ws.receive_json()
                for reply in session.handle(msg):
                    await ws.send_json(reply)
        except WebSocketDisconnect:
            pass

    return app
