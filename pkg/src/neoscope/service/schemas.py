"""Pydantic request/response models for the scoring service."""

from __future__ import annotations

import base64

import numpy as np
from pydantic import BaseModel, Field, field_validator


def decode_pcm(pcm_b64: str, encoding: str = "pcm16") -> np.ndarray:
    raw = base64.b64decode(pcm_b64)
    if encoding == "pcm16":
        return np.frombuffer(raw, dtype="<i2").astype(float) / 32768.0
    if encoding == "f32":
        return np.clip(np.frombuffer(raw, dtype="<f4").astype(float), -1.0, 1.0)
    raise ValueError(f"unknown pcm encoding {encoding!r}")


def encode_pcm(samples: np.ndarray, encoding: str = "pcm16") -> str:
    if encoding == "pcm16":
        raw = (np.clip(samples, -1, 1) * 32767.0).astype("<i2").tobytes()
    elif encoding == "f32":
        raw = np.asarray(samples, dtype="<f4").tobytes()
    else:
        raise ValueError(f"unknown pcm encoding {encoding!r}")
    return base64.b64encode(raw).decode("ascii")


class AudioPayload(BaseModel):
    fs: float = Field(gt=0)
    pcm: str
    encoding: str = "pcm16"

    @field_validator("encoding")
    @classmethod
    def _enc(cls, v: str) -> str:
        if v not in ("pcm16", "f32"):
            raise ValueError("encoding must be pcm16 or f32")
        return v

    def samples(self) -> np.ndarray:
        return decode_pcm(self.pcm, self.encoding)


class HealthResponse(BaseModel):
    status: str
    version: str
    catalog_version: str


class ModelInfo(BaseModel):
    target: str
    mode: str
    family: str
    n_features: int
    cv_mse: float | None = None


class ScoreRequest(AudioPayload):
    pass


class ScoreResponse(BaseModel):
    heart_quality: float
    lung_quality: float
    hr: float
    hr_flag: bool
    br: float
    br_flag: bool
    latency_ms: float


class FeaturesRequest(AudioPayload):
    mode: str = "full"

    @field_validator("mode")
    @classmethod
    def _mode(cls, v: str) -> str:
        if v not in ("full", "fast"):
            raise ValueError("mode must be full or fast")
        return v


class FeaturesResponse(BaseModel):
    recording_id: str
    mode: str
    names: list[str]
    values: list[float | None]
    flagged_ids: list[int]


class VitalsRequest(AudioPayload):
    kind: str = "both"  # hr | br | both


class VitalSeriesModel(BaseModel):
    kind: str
    method: str
    times: list[float]
    values: list[float]
    flags: list[bool]
    window_s: float


class VitalsResponse(BaseModel):
    series: list[VitalSeriesModel]


class SynthRequest(BaseModel):
    target: str
    rate_bpm: float
    snr_db: float
    noise_kind: str = "white"
    seed: int = 0
    duration_s: float = 10.0


class SynthResponse(BaseModel):
    recording_id: str
    label: int
    fs: float
    pcm: str
    encoding: str = "pcm16"
