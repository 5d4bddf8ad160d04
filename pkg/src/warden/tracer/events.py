"""Trace event kinds and the JSONL replay schema.

A replay trace file carries one JSON object per line:

    {"ts": 1.5, "pid": 201, "kind": "file_open",
     "detail": {"path": "/tmp/x", "mode": "read"}, "epoch": 1}

``seq`` and ``enforcement`` are assigned at ingest, never read from the
file.  ``epoch`` is optional (default 0 = pre-task) and binds the line to
the tool-use epoch it plays under.  Kind-specific ``detail`` fields:

    fork         child_pid
    exec         path, argv
    kill         target_pid, signal
    exit         status
    file_open    path, mode (read | write | read_write)
    file_remove  path
    file_rename  src, dst
    net_connect  address, port, family (ipv4 | ipv6)
    net_listen   address, port, family
    net_accept   address, port, family      (peer address)
    dns_resolve  domain, addresses
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any


class EventKind(str, Enum):
    FORK = "fork"
    EXEC = "exec"
    KILL = "kill"
    EXIT = "exit"
    FILE_OPEN = "file_open"
    FILE_REMOVE = "file_remove"
    FILE_RENAME = "file_rename"
    NET_CONNECT = "net_connect"
    NET_LISTEN = "net_listen"
    NET_ACCEPT = "net_accept"
    DNS_RESOLVE = "dns_resolve"


FILE_KINDS = frozenset({EventKind.FILE_OPEN, EventKind.FILE_REMOVE, EventKind.FILE_RENAME})
NET_KINDS = frozenset({EventKind.NET_CONNECT, EventKind.NET_LISTEN, EventKind.NET_ACCEPT})

FILE_MODES = ("read", "write", "read_write")

_DETAIL_FIELDS: dict[EventKind, tuple[tuple[str, type], ...]] = {
    EventKind.FORK: (("child_pid", int),),
    EventKind.EXEC: (("path", str), ("argv", list)),
    EventKind.KILL: (("target_pid", int), ("signal", int)),
    EventKind.EXIT: (("status", int),),
    EventKind.FILE_OPEN: (("path", str), ("mode", str)),
    EventKind.FILE_REMOVE: (("path", str),),
    EventKind.FILE_RENAME: (("src", str), ("dst", str)),
    EventKind.NET_CONNECT: (("address", str), ("port", int)),
    EventKind.NET_LISTEN: (("address", str), ("port", int)),
    EventKind.NET_ACCEPT: (("address", str), ("port", int)),
    EventKind.DNS_RESOLVE: (("domain", str), ("addresses", list)),
}


class TraceParseError(ValueError):
    pass


@dataclass(frozen=True)
class RawEvent:
    """One line of a replay trace before ingest."""

    ts: float
    pid: int
    kind: EventKind
    detail: dict
    epoch: int = 0


@dataclass
class TraceEvent:
    """An ingested event with session-scoped attribution."""

    seq: int
    ts: float
    pid: int
    kind: EventKind
    detail: dict
    epoch: int = 0
    enforcement: bool = False

    def render(self) -> dict:
        """Structured form used in security queries and audit logs."""
        return {
            "seq": self.seq,
            "epoch": self.epoch,
            "pid": self.pid,
            "kind": self.kind.value,
            "detail": dict(self.detail),
        }


def parse_raw_event(obj: Any, line_no: int = 0) -> RawEvent:
    where = f"trace line {line_no}" if line_no else "trace event"
    if not isinstance(obj, dict):
        raise TraceParseError(f"{where}: expected an object")
    try:
        kind = EventKind(obj.get("kind"))
    except ValueError:
        raise TraceParseError(f"{where}: unknown kind {obj.get('kind')!r}")
    pid = obj.get("pid")
    if not isinstance(pid, int) or isinstance(pid, bool) or pid <= 0:
        raise TraceParseError(f"{where}: bad pid {pid!r}")
    detail = obj.get("detail", {})
    if not isinstance(detail, dict):
        raise TraceParseError(f"{where}: detail must be an object")
    for name, typ in _DETAIL_FIELDS[kind]:
        value = detail.get(name)
        if not isinstance(value, typ) or isinstance(value, bool):
            raise TraceParseError(f"{where}: {kind.value} detail needs {name} ({typ.__name__})")
    if kind is EventKind.FILE_OPEN and detail["mode"] not in FILE_MODES:
        raise TraceParseError(f"{where}: bad file_open mode {detail['mode']!r}")
    epoch = obj.get("epoch", 0)
    if not isinstance(epoch, int) or isinstance(epoch, bool) or epoch < 0:
        raise TraceParseError(f"{where}: bad epoch {epoch!r}")
    ts = obj.get("ts", 0.0)
    if not isinstance(ts, (int, float)) or isinstance(ts, bool):
        raise TraceParseError(f"{where}: bad ts {ts!r}")
    return RawEvent(ts=float(ts), pid=pid, kind=kind, detail=dict(detail), epoch=epoch)


def load_trace_file(path) -> list[RawEvent]:
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceParseError(f"trace line {line_no}: {exc}")
            events.append(parse_raw_event(obj, line_no))
    return events
