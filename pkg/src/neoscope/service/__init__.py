from .app import create_app
from .ndjson import start_ndjson_server
from .session import StreamSession

__all__ = ["create_app", "start_ndjson_server", "StreamSession"]
