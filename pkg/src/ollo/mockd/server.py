"""Run the mock app on a background thread with a controllable lifetime."""

from __future__ import annotations

import json
import socket
import threading
import time
from typing import Any

import uvicorn

from .app import create_app
from .oracle import MockConfig
from .schemas import CaptureEntry


class MockServer:
    """Handle to a running mock server.

    Usable as a context manager; :meth:`shutdown` stops accepting connections
    and joins the server thread.
    """

    def __init__(self, config: MockConfig | None = None):
        self.config = config or MockConfig()
        self.app = create_app(self.config)
        self._socket: socket.socket | None = None
        self._server: uvicorn.Server | None = None
        self._thread: threading.Thread | None = None

    @property
    def state(self):
        return self.app.state.mock

    @property
    def port(self) -> int:
        if self._socket is None:
            raise RuntimeError("server is not running")
        return self._socket.getsockname()[1]

    @property
    def base_url(self) -> str:
        return f"http://{self.config.host}:{self.port}"

    def start(self, timeout: float = 10.0) -> MockServer:
        # explicit proto so asyncio enables TCP_NODELAY on accepted connections
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM, socket.IPPROTO_TCP)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            sock.bind((self.config.host, self.config.port))
        except OSError:
            sock.close()
            raise
        sock.listen(128)
        self._socket = sock
        uv_config = uvicorn.Config(
            self.app, log_level="warning", lifespan="off",
            timeout_graceful_shutdown=1, access_log=False,
        )
        self._server = uvicorn.Server(uv_config)
        self._thread = threading.Thread(
            target=self._server.run, kwargs={"sockets": [sock]}, name="ollo-mockd", daemon=True,
        )
        self._thread.start()
        deadline = time.monotonic() + timeout
        while not self._server.started:
            if not self._thread.is_alive() or time.monotonic() > deadline:
                self.shutdown()
                raise RuntimeError("mock server failed to start")
            time.sleep(0.01)
        return self

    def shutdown(self) -> None:
        if self._server is not None:
            self._server.should_exit = True
        if self._thread is not None:
            self._thread.join(timeout=10)
        if self._socket is not None:
            self._socket.close()
        self._server = self._thread = None

    def captured(self) -> list[CaptureEntry]:
        return list(self.state.capture)

    def captured_bodies(self, path: str | None = None) -> list[Any]:
        """Decoded JSON request bodies, optionally filtered by path."""
        return [
            json.loads(e.body) for e in self.captured()
            if e.body and (path is None or e.path == path)
        ]

    def __enter__(self) -> MockServer:
        if self._server is None:
            self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()


def serve(config: MockConfig | None = None) -> MockServer:
    return MockServer(config).start()
