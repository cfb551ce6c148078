"""Newline-delimited JSON front end over plain TCP.

Each connection is one stream session speaking exactly the WebSocket
schema, one JSON object per line.
"""

from __future__ import annotations

import asyncio
import json
from pathlib import Path

from ..training import QualityModel
from .session import StreamSession


async def handle_connection(
    reader: asyncio.StreamReader,
    writer: asyncio.StreamWriter,
    heart_model: QualityModel,
    lung_model: QualityModel,
    session_csv: str | Path | None,
    session_id: str,
) -> None:
    session = StreamSession(heart_model, lung_model, session_csv, session_id)
    try:
        while True:
            line = await reader.readline()
            if not line:
                break
            try:
                msg = json.loads(line)
            except json.JSONDecodeError:
                replies = [{"type": "error", "reason": "not valid JSON"}]
            else:
                replies = session.handle(msg)
            for reply in replies:
                writer.write(json.dumps(reply).encode() + b"\n")
            await writer.drain()
    except (ConnectionResetError, asyncio.IncompleteReadError):
        pass
    finally:
        writer.close()


async def start_ndjson_server(
    host: str,
    port: int,
    heart_model: QualityModel,
    lung_model: QualityModel,
    session_csv: str | Path | None = None,
) -> asyncio.base_events.Server:
    counter = {"n": 0}

    async def _handler(reader, writer):
        counter["n"] += 1
        await handle_connection(
            reader, writer, heart_model, lung_model, session_csv,
            session_id=f"tcp{counter['n']}",
        )

    return await asyncio.start_server(_handler, host, port)
