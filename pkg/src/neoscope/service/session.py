"""Stream-session message handling shared by the WebSocket and TCP fronts.

One session owns one engine. Inbound messages are `{"type": "audio",
"fs": ..., "pcm": base64}` and `{"type": "marker", "label": ...}`;
outbound are versioned score messages (emitted once per second of
stream time) and marker acknowledgements. Markers whose label is an
integer quality land in the session annotation CSV.
"""

from __future__ import annotations

import csv
from pathlib import Path

from ..rtengine import StreamEngine
from ..training import QualityModel
from .schemas import decode_pcm


class StreamSession:
    def __init__(
        self,
        heart_model: QualityModel,
        lung_model: QualityModel,
        session_csv: str | Path | None = None,
        session_id: str = "session",
    ):
        self.engine = StreamEngine(heart_model, lung_model)
        self.session_csv = Path(session_csv) if session_csv else None
        self.session_id = session_id
        self.dropped = 0
        self._next_emit = 1.0
        if self.session_csv and not self.session_csv.exists():
            with open(self.session_csv, "w", newline="", encoding="utf-8") as fh:
                csv.writer(fh).writerow(["recording_id", "rater_id", "score"])

    def _log_marker(self, marker: dict) -> None:
        label = marker["label"]
        if self.session_csv is None:
            return
        try:
            score = int(label)
        except (TypeError, ValueError):
            return
        if not 1 <= score <= 5:
            return
        with open(self.session_csv, "a", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerow(
                [f"{self.session_id}-{marker['t']:.3f}", "operator", score]
            )

    def handle(self, msg: dict) -> list[dict]:
        """Process one inbound message, returning messages to send back."""
        kind = msg.get("type")
        if kind == "audio":
            try:
                samples = decode_pcm(msg["pcm"], msg.get("encoding", "pcm16"))
                fs = float(msg["fs"])
            except (KeyError, ValueError, TypeError):
                self.dropped += 1
                return [{"type": "error", "reason": "malformed audio message"}]
            self.engine.push(samples, fs)
            out = []
            while self.engine.stream_seconds() >= self._next_emit:
                out.append(self.engine.tick().to_json())
                self._next_emit += 1.0
            return out
        if kind == "marker":
            if "label" not in msg:
                self.dropped += 1
                return [{"type": "error", "reason": "marker without label"}]
            marker = self.engine.mark(msg["label"], msg.get("t"))
            self._log_marker(marker)
            return [{"type": "marker_ack", "t": marker["t"], "label": marker["label"]}]
        self.dropped += 1
        return [{"type": "error", "reason": f"unknown message type {kind!r}"}]
