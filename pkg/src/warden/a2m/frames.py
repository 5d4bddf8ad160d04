"""Length-prefixed JSON framing and the transports that carry it.

Wire format, bit-exact: ``[len: u32 big-endian][payload: UTF-8 JSON object]``.
"""

from __future__ import annotations

import json
import socket
import struct
from collections import deque
from typing import Optional

MAX_FRAME_LEN = 4 * 1024 * 1024  # defensive bound; a hostile length prefix must not allocate


class FrameError(Exception):
    """Payload is not a well-formed frame."""


class TransportError(Exception):
    pass


class TransportClosed(TransportError):
    pass


class TransportTimeout(TransportError):
    pass


def encode_frame(obj: dict) -> bytes:
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    if len(payload) > MAX_FRAME_LEN:
        raise FrameError(f"frame too large: {len(payload)} bytes")
    return struct.pack(">I", len(payload)) + payload


def decode_frame_payload(payload: bytes) -> dict:
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FrameError(f"bad frame payload: {exc}") from exc
    if not isinstance(obj, dict):
        raise FrameError("frame payload must be a JSON object")
    return obj


class FrameDecoder:
    """Incremental decoder; feed arbitrary byte chunks, get whole frames out."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[dict]:
        self._buf.extend(data)
        frames = []
        while True:
            if len(self._buf) < 4:
                break
            (length,) = struct.unpack(">I", self._buf[:4])
            if length > MAX_FRAME_LEN:
                raise FrameError(f"declared frame length {length} exceeds limit")
            if len(self._buf) < 4 + length:
                break
            payload = bytes(self._buf[4:4 + length])
            del self._buf[:4 + length]
            frames.append(decode_frame_payload(payload))
        return frames


class TcpTransport:
    """Blocking socket transport speaking the frame format."""

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self.closed = False

    def send_frame(self, obj: dict) -> None:
        if self.closed:
            raise TransportClosed("transport closed")
        try:
            self._sock.sendall(encode_frame(obj))
        except OSError as exc:
            raise TransportClosed(str(exc)) from exc

    def _recv_exact(self, n: int) -> bytes:
        chunks = []
        got = 0
        while got < n:
            try:
                chunk = self._sock.recv(n - got)
            except socket.timeout as exc:
                raise TransportTimeout("recv timed out") from exc
            except OSError as exc:
                raise TransportClosed(str(exc)) from exc
            if not chunk:
                raise TransportClosed("peer closed connection")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def recv_frame(self, timeout: Optional[float] = None) -> dict:
        if self.closed:
            raise TransportClosed("transport closed")
        self._sock.settimeout(timeout)
        header = self._recv_exact(4)
        (length,) = struct.unpack(">I", header)
        if length > MAX_FRAME_LEN:
            raise FrameError(f"declared frame length {length} exceeds limit")
        return decode_frame_payload(self._recv_exact(length))

    def close(self) -> None:
        self.closed = True
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


class MemoryTransport:
    """In-memory server-side transport driven directly by a test or replay peer.

    The peer enqueues incoming frames with :meth:`push` (optionally with a
    simulated arrival delay, applied against the injected clock) and reads
    the server's responses from :attr:`outbox`.
    """

    def __init__(self, clock=None):
        self._inbox: deque = deque()
        self.outbox: list[dict] = []
        self.closed = False
        self._clock = clock

    def push(self, frame, delay: float = 0.0) -> None:
        """Enqueue an incoming frame; ``frame`` may be a dict or raw bytes."""
        self._inbox.append((delay, frame))

    def send_frame(self, obj: dict) -> None:
        if self.closed:
            raise TransportClosed("transport closed")
        encode_frame(obj)  # raises on unencodable payloads, mirroring the socket path
        self.outbox.append(obj)

    def recv_frame(self, timeout: Optional[float] = None) -> dict:
        if self.closed:
            raise TransportClosed("transport closed")
        if not self._inbox:
            if timeout is None:
                raise TransportClosed("no more frames")
            if self._clock is not None:
                self._clock.advance(timeout)
            raise TransportTimeout("no frame within timeout")
        delay, frame = self._inbox[0]
        if timeout is not None and delay > timeout:
            if self._clock is not None:
                self._clock.advance(timeout)
            raise TransportTimeout("frame arrived after timeout")
        self._inbox.popleft()
        if self._clock is not None and delay:
            self._clock.advance(delay)
        if isinstance(frame, (bytes, bytearray)):
            if len(frame) > MAX_FRAME_LEN:
                raise FrameError("declared frame length exceeds limit")
            return decode_frame_payload(bytes(frame))
        return frame

    def close(self) -> None:
        self.closed = True
