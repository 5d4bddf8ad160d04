"""Protocol constants and the monotone server-side status machine.

The server accepts exactly two transitions: ``fresh → connected`` on a
connect request and ``connected → tracing`` on a start-passive-tracing
request.  No operand ever lowers the status; in particular there is no
input that leaves the tracing state while the connection lives, so a
client (or an attacker driving one) cannot switch tracing back off.
"""

from __future__ import annotations

from enum import Enum, IntEnum

MAGIC = "A2M1"
PROTOCOL_VERSION = 1
HELLO_TIMEOUT = 5.0


class Operand(str, Enum):
    CONNECT = "connect"
    START_PASSIVE_TRACING = "start_passive_tracing"
    SEND_NEW_TOOL_USE = "send_new_tool_use"
    GET_ENFORCEMENT_INFO = "get_enforcement_info"


class ServerStatus(IntEnum):
    FRESH = 0
    CONNECTED = 1
    TRACING = 2


class RequestResult(str, Enum):
    OK = "ok"
    ALERT_PENDING = "alert_pending"
    PROTOCOL_ERROR = "protocol_error"


def step_status(status: ServerStatus, op: Operand) -> tuple[ServerStatus, bool]:
    """Advance the status machine by one operand.

    Returns the new status and whether the operand is accepted in the
    given status.  Rejected operands never change the status.
    """
    if status is ServerStatus.FRESH and op is Operand.CONNECT:
        return ServerStatus.CONNECTED, True
    if status is ServerStatus.CONNECTED and op is Operand.START_PASSIVE_TRACING:
        return ServerStatus.TRACING, True
    if status is ServerStatus.TRACING and op in (
        Operand.SEND_NEW_TOOL_USE,
        Operand.GET_ENFORCEMENT_INFO,
    ):
        return ServerStatus.TRACING, True
    return status, False


def server_hello(nonce: str) -> dict:
    return {"magic": MAGIC, "version": PROTOCOL_VERSION, "nonce": nonce}


def client_hello() -> dict:
    return {"magic": MAGIC, "version": PROTOCOL_VERSION}


def parse_server_descriptor(desc: str) -> tuple[str, int]:
    """Parse a ``host:port`` server descriptor."""
    host, sep, port = desc.rpartition(":")
    if not sep or not host:
        raise ValueError(f"bad server descriptor {desc!r}, expected host:port")
    try:
        return host, int(port)
    except ValueError:
        raise ValueError(f"bad port in server descriptor {desc!r}")
