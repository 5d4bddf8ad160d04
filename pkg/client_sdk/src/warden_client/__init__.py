"""Agent-side instrumentation for the warden monitoring server.

Designed to be minimally intrusive to a host agent loop: create the client
before collecting task input, buffer chat messages as they appear, flush
them with :meth:`SentinelClient.notify_new_tool_use` right before each tool
runs, and pass failing tool results through
:meth:`SentinelClient.try_append_security_alert`.  That last call is the
only place this client ever modifies task-context content.

Speaks the wire format directly (length-prefixed JSON frames over TCP);
depends only on the standard library.
"""

from __future__ import annotations

import json
import logging
import socket
import struct
from dataclasses import dataclass, replace

__all__ = ["Msg", "SentinelClient", "SentinelError", "HandshakeError",
           "ProtocolError"]

logger = logging.getLogger(__name__)

MAGIC = "A2M1"
PROTOCOL_VERSION = 1
CONNECT_TIMEOUT = 5.0
RESPONSE_TIMEOUT = 30.0


class SentinelError(Exception):
    """Base error; the host agent decides whether to proceed unprotected."""


class HandshakeError(SentinelError):
    pass


class ProtocolError(SentinelError):
    pass


@dataclass(frozen=True)
class Msg:
    role: str
    content: str
    seq: int
    is_tool_error: bool = False

    def to_json(self) -> dict:
        return {"role": self.role, "content": self.content, "seq": self.seq,
                "is_tool_error": self.is_tool_error}


class SentinelClient:
    """One client per agent loop; not safe for concurrent use."""

    def __init__(self, server_desc: str, agent_process_id: int,
                 dependent_files=(), agent_name: str = ""):
        host, _, port = server_desc.rpartition(":")
        if not host:
            raise SentinelError(f"bad server descriptor {server_desc!r}")
        try:
            self._sock = socket.create_connection((host, int(port)),
                                                  timeout=CONNECT_TIMEOUT)
        except OSError as exc:
            raise SentinelError(f"cannot reach monitor at {server_desc}: {exc}") from exc
        self._sock.settimeout(RESPONSE_TIMEOUT)
        self._request_id = 0
        self._seq = 0
        self.buffered: list[Msg] = []
        self.session_nonce = self._say_hello()
        self._request("connect", {
            "agent_process_id": agent_process_id,
            "dependent_files": list(dependent_files),
            "agent_name": agent_name,
        })
        # Tracing must be on before any task input exists; fail fast otherwise.
        self._request("start_passive_tracing", {})

    # -- message buffering (no network I/O) ---------------------------------

    def add_user_message(self, text: str) -> Msg:
        return self._buffer("user", text)

    def add_agent_message(self, text: str) -> Msg:
        return self._buffer("agent", text)

    def add_tool_result(self, text: str, is_error: bool = False) -> Msg:
        return self._buffer("tool_result", text, is_tool_error=is_error)

    def _buffer(self, role: str, content: str, is_tool_error: bool = False) -> Msg:
        self._seq += 1
        msg = Msg(role=role, content=content, seq=self._seq,
                  is_tool_error=is_tool_error)
        self.buffered.append(msg)
        return msg

    # -- protocol operations --------------------------------------------------

    def notify_new_tool_use(self, tool_name: str, tool_input=None) -> None:
        """Flush the buffer with the imminent action; returns without awaiting audit."""
        batch = [m.to_json() for m in self.buffered]
        self._request("send_new_tool_use", {
            "messages": batch,
            "action": {"kind": "tool_use", "tool_name": tool_name,
                       "tool_input": tool_input},
        })
        # The buffer survives failed sends (the call above raises first).
        self.buffered.clear()

    def try_append_security_alert(self, tool_result: Msg) -> Msg:
        """Attach a pending security alert to a failing tool result, if any.

        Degrades quietly on transport trouble: the result comes back
        unchanged and protection continues server-side.
        """
        try:
            response = self._request("get_enforcement_info", {})
        except SentinelError as exc:
            logger.warning("could not fetch enforcement info: %s", exc)
            return tool_result
        if response.get("result") != "alert_pending":
            return tool_result
        alert = response.get("payload", {}).get("alert_text", "")
        updated = replace(tool_result,
                          content=f"{tool_result.content}\n{alert}" if tool_result.content
                          else alert)
        # Keep only the final, alert-bearing version in the buffer.
        for i, buffered in enumerate(self.buffered):
            if buffered.seq == tool_result.seq:
                self.buffered[i] = updated
                break
        return updated

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass

    # -- wire plumbing ----------------------------------------------------------

    def _say_hello(self) -> str:
        self._send({"magic": MAGIC, "version": PROTOCOL_VERSION})
        hello = self._recv()
        if hello.get("magic") != MAGIC or hello.get("version") != PROTOCOL_VERSION \
                or "nonce" not in hello:
            self.close()
            raise HandshakeError(f"monitor refused handshake: {hello}")
        return hello["nonce"]

    def _request(self, operand: str, data: dict) -> dict:
        self._request_id += 1
        self._send({"request_id": self._request_id, "operand": operand, "data": data})
        response = self._recv()
        if response.get("request_id") != self._request_id \
                or response.get("result") == "protocol_error":
            raise ProtocolError(f"{operand} rejected: {response}")
        return response

    def _send(self, obj: dict) -> None:
        payload = json.dumps(obj, separators=(",", ":")).encode("utf-8")
        try:
            self._sock.sendall(struct.pack(">I", len(payload)) + payload)
        except OSError as exc:
            raise SentinelError(f"send failed: {exc}") from exc

    def _recv(self) -> dict:
        header = self._recv_exact(4)
        (length,) = struct.unpack(">I", header)
        try:
            return json.loads(self._recv_exact(length).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProtocolError(f"garbled frame from monitor: {exc}") from exc

    def _recv_exact(self, n: int) -> bytes:
        chunks = b""
        while len(chunks) < n:
            try:
                chunk = self._sock.recv(n - len(chunks))
            except OSError as exc:
                raise SentinelError(f"recv failed: {exc}") from exc
            if not chunk:
                raise SentinelError("monitor closed the connection")
            chunks += chunk
        return chunks
