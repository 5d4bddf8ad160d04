"""Server-side session handler: handshake plus the request/response loop.

Strict failure model: any malformed frame, rejected operand, or bad payload
gets a ``protocol_error`` response and the connection is closed.  Closing
never disables auditing of what was already captured; the session's tracer
is kept alive in log-only mode so traced state and audit logs survive.
"""

from __future__ import annotations

import logging

from warden.a2m import frames
from warden.a2m.protocol import (
    HELLO_TIMEOUT,
    MAGIC,
    PROTOCOL_VERSION,
    Operand,
    RequestResult,
    ServerStatus,
    server_hello,
    step_status,
)
from warden.model import Action, AgentBasicInfo, Message

logger = logging.getLogger(__name__)


class ProtocolViolation(Exception):
    """Request is malformed or not permitted in the current status."""


class SessionHandler:
    def __init__(self, transport, runtime, hello_timeout: float = HELLO_TIMEOUT):
        self.transport = transport
        self.runtime = runtime
        self.hello_timeout = hello_timeout
        self._last_request_id = None

    # -- handshake ---------------------------------------------------------

    def handshake(self) -> bool:
        try:
            hello = self.transport.recv_frame(timeout=self.hello_timeout)
        except frames.TransportTimeout:
            logger.warning("no HELLO within %.1fs, closing", self.hello_timeout)
            self._close(log_only=False)
            return False
        except (frames.TransportError, frames.FrameError):
            self._close(log_only=False)
            return False
        if not isinstance(hello, dict) or hello.get("magic") != MAGIC \
                or hello.get("version") != PROTOCOL_VERSION:
            self._send_quietly({"magic": MAGIC, "version": PROTOCOL_VERSION,
                                "error": "protocol_error"})
            self._close(log_only=False)
            return False
        self._send_quietly(server_hello(self.runtime.nonce))
        return True

    # -- request loop ------------------------------------------------------

    def run(self) -> None:
        if not self.handshake():
            return
        while self.step():
            pass

    def step(self) -> bool:
        """Process one client request; returns False once the connection is done."""
        try:
            frame = self.transport.recv_frame(timeout=None)
        except (frames.TransportError, frames.FrameError):
            self._close(log_only=True)
            return False

        try:
            request_id, op, data = self._parse_request(frame)
        except ProtocolViolation as exc:
            rid = frame.get("request_id") if isinstance(frame, dict) else None
            if not isinstance(rid, int) or isinstance(rid, bool):
                rid = None
            self._respond_error(rid, str(exc))
            self._close(log_only=True)
            return False

        new_status, accept = step_status(self.runtime.status, op)
        if not accept:
            self._respond_error(
                request_id,
                f"operand {op.value} not permitted in status {int(self.runtime.status)}",
            )
            self._close(log_only=True)
            return False

        try:
            response, after_reply = self._dispatch(op, data)
        except ProtocolViolation as exc:
            self._respond_error(request_id, str(exc))
            self._close(log_only=True)
            return False
        except Exception:  # noqa: BLE001 - strict failure model: panic response, close
            logger.exception("request %s crashed the session", op.value)
            self._respond_error(request_id, "internal error")
            self._close(log_only=True)
            return False

        self.runtime.status = new_status
        response["request_id"] = request_id
        self._send_quietly(response)
        if after_reply is not None:
            after_reply()
        return True

    def _parse_request(self, frame: dict):
        request_id = frame.get("request_id")
        if not isinstance(request_id, int) or isinstance(request_id, bool):
            raise ProtocolViolation("missing or non-integer request_id")
        if self._last_request_id is not None and request_id <= self._last_request_id:
            raise ProtocolViolation(
                f"request_id {request_id} not increasing (last {self._last_request_id})"
            )
        self._last_request_id = request_id
        try:
            op = Operand(frame.get("operand"))
        except ValueError:
            raise ProtocolViolation(f"unknown operand {frame.get('operand')!r}")
        data = frame.get("data")
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ProtocolViolation("request data must be an object")
        return request_id, op, data

    def _dispatch(self, op: Operand, data: dict):
        if op is Operand.CONNECT:
            try:
                info = AgentBasicInfo.from_json(data)
            except ValueError as exc:
                raise ProtocolViolation(f"bad agent info: {exc}")
            self.runtime.on_connect(info)
            return {"result": RequestResult.OK.value}, None

        if op is Operand.START_PASSIVE_TRACING:
            self.runtime.on_start_tracing()
            # Pre-task (epoch 0) events play after the reply goes out.
            return {"result": RequestResult.OK.value}, self.runtime.play_current_epoch

        if op is Operand.SEND_NEW_TOOL_USE:
            messages, action = self._parse_tool_use(data)
            try:
                self.runtime.on_new_tool_use(messages, action)
            except ValueError as exc:
                raise ProtocolViolation(f"malformed tool-use batch: {exc}")
            # Notification is non-blocking: reply first, audit afterwards.
            return {"result": RequestResult.OK.value}, self.runtime.play_current_epoch

        if op is Operand.GET_ENFORCEMENT_INFO:
            outcome = self.runtime.take_enforcement_outcome()
            if outcome is None:
                return {"result": RequestResult.OK.value}, None
            return {"result": RequestResult.ALERT_PENDING.value,
                    "payload": outcome.to_json()}, None

        raise ProtocolViolation(f"unhandled operand {op.value}")  # pragma: no cover

    def _parse_tool_use(self, data: dict):
        raw_messages = data.get("messages", [])
        if not isinstance(raw_messages, list):
            raise ProtocolViolation("messages must be a list")
        try:
            messages = [Message.from_json(m) for m in raw_messages]
            action = Action.from_json(data.get("action", {}))
        except ValueError as exc:
            raise ProtocolViolation(f"malformed tool-use batch: {exc}")
        if action.kind.value != "tool_use":
            raise ProtocolViolation("send_new_tool_use requires a tool_use action")
        return messages, action

    # -- plumbing ----------------------------------------------------------

    def _respond_error(self, request_id, message: str) -> None:
        self._send_quietly({"request_id": request_id,
                            "result": RequestResult.PROTOCOL_ERROR.value,
                            "error": message})

    def _send_quietly(self, obj: dict) -> None:
        try:
            self.transport.send_frame(obj)
        except (frames.TransportError, frames.FrameError):
            pass

    def _close(self, log_only: bool) -> None:
        try:
            self.transport.close()
        finally:
            self.runtime.on_close(log_only=log_only)
