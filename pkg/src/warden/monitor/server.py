"""TCP listener: one thread and one isolated session runtime per connection."""

from __future__ import annotations

import logging
import socket
import threading

from warden.a2m.frames import TcpTransport
from warden.a2m.handler import SessionHandler
from warden.a2m.protocol import parse_server_descriptor
from warden.monitor.runtime import MonitorCore, SessionRuntime

logger = logging.getLogger(__name__)


class MonitorServer:
    def __init__(self, core: MonitorCore, listen_addr: str):
        self.core = core
        self.listen_addr = listen_addr
        self.sessions: list[SessionRuntime] = []
        self._sock = None
        self._threads: list[threading.Thread] = []
        self._accept_thread = None
        self._stopping = threading.Event()

    def start(self) -> tuple[str, int]:
        host, port = parse_server_descriptor(self.listen_addr)
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((host, port))
        sock.listen(16)
        self._sock = sock
        self._accept_thread = threading.Thread(target=self._accept_loop,
                                               name="warden-accept", daemon=True)
        self._accept_thread.start()
        bound = sock.getsockname()
        logger.info("listening on %s:%d", bound[0], bound[1])
        return bound[0], bound[1]

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                conn, peer = self._sock.accept()
            except OSError:
                break
            runtime = self.core.new_runtime()
            self.sessions.append(runtime)
            thread = threading.Thread(
                target=self._serve_connection, args=(conn, peer, runtime),
                name=f"warden-session-{len(self.sessions)}", daemon=True,
            )
            self._threads.append(thread)
            thread.start()

    def _serve_connection(self, conn, peer, runtime: SessionRuntime) -> None:
        logger.info("session %s from %s", runtime.nonce, peer)
        handler = SessionHandler(TcpTransport(conn), runtime)
        try:
            handler.run()
        except Exception:  # noqa: BLE001 - a session crash must not kill the service
            logger.exception("session %s crashed", runtime.nonce)
            runtime.on_close(log_only=True)
        logger.info("session %s closed", runtime.nonce)

    def wait(self) -> None:
        while not self._stopping.wait(timeout=0.2):
            pass

    def shutdown(self) -> None:
        self._stopping.set()
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
        for thread in self._threads:
            thread.join(timeout=2.0)
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=2.0)
