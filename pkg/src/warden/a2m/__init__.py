"""Agent-to-Monitor protocol: framing, handshake, and the server-side status machine."""

from warden.a2m.frames import (
    FrameError,
    MemoryTransport,
    TcpTransport,
    TransportClosed,
    TransportTimeout,
    decode_frame_payload,
    encode_frame,
)
from warden.a2m.protocol import (
    MAGIC,
    PROTOCOL_VERSION,
    Operand,
    RequestResult,
    ServerStatus,
    step_status,
)

__all__ = [
    "FrameError",
    "MemoryTransport",
    "TcpTransport",
    "TransportClosed",
    "TransportTimeout",
    "decode_frame_payload",
    "encode_frame",
    "MAGIC",
    "PROTOCOL_VERSION",
    "Operand",
    "RequestResult",
    "ServerStatus",
    "step_status",
]
