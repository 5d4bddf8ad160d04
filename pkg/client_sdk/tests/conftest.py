import json
import os
import socket
import struct
import sys
import threading

import pytest

sys.path.insert(0, os.path.dirname(__file__))


class MiniA2MServer(threading.Thread):
    """Tiny independent server speaking the wire format, for SDK-side tests.

    Written against the protocol documentation, not the monitor's code, so
    the two implementations only meet on the wire.
    """

    def __init__(self, version: int = 1, reject_notify: bool = False,
                 alert_text: str = ""):
        super().__init__(daemon=True)
        self.version = version
        self.reject_notify = reject_notify
        self.alert_text = alert_text
        self.batches: list[list] = []
        self.actions: list[dict] = []
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind(("127.0.0.1", 0))
        self._sock.listen(64)
        self.port = self._sock.getsockname()[1]
        self._stop = threading.Event()

    @property
    def desc(self) -> str:
        return f"127.0.0.1:{self.port}"

    def run(self):
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            try:
                self._session(conn)
            except OSError:
                pass
            finally:
                conn.close()

    def stop(self):
        self._stop.set()
        self._sock.close()

    # -- one session, handled inline -------------------------------------

    def _session(self, conn):
        conn.settimeout(5.0)
        hello = self._read(conn)
        if hello is None:
            return
        self._write(conn, {"magic": "A2M1", "version": self.version,
                           "nonce": "mini-nonce"})
        alert_pending = bool(self.alert_text)
        while True:
            frame = self._read(conn)
            if frame is None:
                return
            rid = frame.get("request_id")
            op = frame.get("operand")
            if op == "send_new_tool_use":
                if self.reject_notify:
                    self._write(conn, {"request_id": rid,
                                       "result": "protocol_error",
                                       "error": "rejected"})
                    return
                self.batches.append(frame.get("data", {}).get("messages", []))
                self.actions.append(frame.get("data", {}).get("action", {}))
                self._write(conn, {"request_id": rid, "result": "ok"})
            elif op == "get_enforcement_info":
                if alert_pending:
                    alert_pending = False
                    self._write(conn, {"request_id": rid, "result": "alert_pending",
                                       "payload": {"verdict": "terminate",
                                                   "explanation": "x",
                                                   "alert_text": self.alert_text}})
                else:
                    self._write(conn, {"request_id": rid, "result": "ok"})
            else:
                self._write(conn, {"request_id": rid, "result": "ok"})

    @staticmethod
    def _read(conn):
        header = b""
        while len(header) < 4:
            chunk = conn.recv(4 - len(header))
            if not chunk:
                return None
            header += chunk
        (length,) = struct.unpack(">I", header)
        payload = b""
        while len(payload) < length:
            chunk = conn.recv(length - len(payload))
            if not chunk:
                return None
            payload += chunk
        return json.loads(payload)

    @staticmethod
    def _write(conn, obj):
        payload = json.dumps(obj).encode()
        conn.sendall(struct.pack(">I", len(payload)) + payload)


@pytest.fixture
def mini_server():
    server = MiniA2MServer()
    server.start()
    yield server
    server.stop()
