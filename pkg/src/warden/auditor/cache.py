"""Scoped cache of auditor-verified operations.

Scopes act as TTLs: ``once`` entries are consumed by a single hit, ``task``
entries live until the task changes, ``universal`` entries live for the
monitor process.  Lookup order is once, then task, then universal.  File
entries are keyed by (canonical path, permission); a hit must cover every
permission the requested mode needs.  Network entries are keyed by
(domain-or-address, port, direction); domain when DNS annotation gave the
event one.  Verified file operations with execute permission land in a
dedicated safe-binary partition that fast-paths exec events.
"""

from __future__ import annotations

import posixpath
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional

from warden.tracer.events import EventKind, TraceEvent

SCOPES = ("once", "task", "universal")
Scope = str

FILE_PERMISSIONS = ("read", "write", "execute")
_MODE_NEEDS = {
    "read": frozenset({"read"}),
    "write": frozenset({"write"}),
    "read_write": frozenset({"read", "write"}),
}


@dataclass(frozen=True)
class VerifiedOperation:
    kind: str                 # file | network | binary
    key: tuple
    scope: Scope

    def __post_init__(self):
        if self.scope not in SCOPES:
            raise ValueError(f"bad scope {self.scope!r}")
        if self.kind not in ("file", "network", "binary"):
            raise ValueError(f"bad verified-op kind {self.kind!r}")

    @classmethod
    def file(cls, path: str, permission: str, scope: Scope) -> "VerifiedOperation":
        if permission not in FILE_PERMISSIONS:
            raise ValueError(f"bad file permission {permission!r}")
        return cls(kind="file", key=(canonical_path(path), permission), scope=scope)

    @classmethod
    def network(cls, host: str, port: int, direction: str, scope: Scope) -> "VerifiedOperation":
        if direction not in ("outbound", "inbound"):
            raise ValueError(f"bad direction {direction!r}")
        return cls(kind="network", key=(host, int(port), direction), scope=scope)

    @classmethod
    def binary(cls, path: str, scope: Scope) -> "VerifiedOperation":
        return cls(kind="binary", key=(canonical_path(path),), scope=scope)

    @classmethod
    def from_json(cls, data: dict) -> "VerifiedOperation":
        if not isinstance(data, dict):
            raise ValueError("verified op must be an object")
        kind = data.get("kind")
        scope = data.get("scope")
        if kind == "file":
            return cls.file(_require_str(data, "path"), _require_str(data, "permission"), scope)
        if kind == "network":
            port = data.get("port")
            if not isinstance(port, int) or isinstance(port, bool):
                raise ValueError("network op needs an integer port")
            return cls.network(_require_str(data, "host"), port,
                               _require_str(data, "direction"), scope)
        if kind == "binary":
            return cls.binary(_require_str(data, "path"), scope)
        raise ValueError(f"bad verified-op kind {kind!r}")

    def to_json(self) -> dict:
        if self.kind == "file":
            return {"kind": "file", "path": self.key[0], "permission": self.key[1],
                    "scope": self.scope}
        if self.kind == "network":
            return {"kind": "network", "host": self.key[0], "port": self.key[1],
                    "direction": self.key[2], "scope": self.scope}
        return {"kind": "binary", "path": self.key[0], "scope": self.scope}

    def storage_key(self) -> tuple:
        """Key in the cache store; execute-permission file ops live as binaries."""
        if self.kind == "file" and self.key[1] == "execute":
            return ("binary", self.key[0])
        return (self.kind,) + self.key


def canonical_path(path: str) -> str:
    if not path or not posixpath.isabs(path):
        raise ValueError(f"verified path must be absolute: {path!r}")
    return posixpath.normpath(path)


def _require_str(data: dict, name: str) -> str:
    value = data.get(name)
    if not isinstance(value, str) or not value:
        raise ValueError(f"verified op needs {name}")
    return value


@dataclass
class CacheHit:
    scopes: list          # scope of each entry that contributed
    used_keys: list       # storage keys that contributed
    consumed: list        # once-level storage keys removed by this hit

    def describe(self) -> str:
        return "verified by cache (" + ", ".join(sorted(set(self.scopes))) + ")"


class SecurityQueryCache:
    def __init__(self):
        self._store = {scope: Counter() for scope in SCOPES}
        self.inserts = 0
        self.consumed_once = 0

    # -- writes --------------------------------------------------------------

    def add(self, op: VerifiedOperation) -> None:
        self._store[op.scope][op.storage_key()] += 1
        self.inserts += 1

    def add_all(self, ops: Iterable[VerifiedOperation]) -> None:
        for op in ops:
            self.add(op)

    def flush_task_and_once(self) -> None:
        """Task changed: once and task partitions empty, universal untouched."""
        self._store["once"].clear()
        self._store["task"].clear()

    # -- event lookup (consuming for once-level entries) -----------------------

    def lookup_event(self, event: TraceEvent) -> Optional[CacheHit]:
        plan = self._plan_for_event(event)
        if plan is None:
            return None
        consumed = []
        for scope, key in plan:
            if scope == "once":
                self._store["once"][key] -= 1
                if self._store["once"][key] <= 0:
                    del self._store["once"][key]
                self.consumed_once += 1
                consumed.append(key)
        return CacheHit(scopes=[s for s, _ in plan],
                        used_keys=[k for _, k in plan],
                        consumed=consumed)

    def _plan_for_event(self, event: TraceEvent):
        kind = event.kind
        if kind is EventKind.FILE_OPEN:
            return self._plan_file(event.detail["path"], _MODE_NEEDS[event.detail["mode"]])
        if kind is EventKind.FILE_REMOVE:
            return self._plan_file(event.detail["path"], frozenset({"write"}))
        if kind is EventKind.FILE_RENAME:
            src = self._plan_file(event.detail["src"], frozenset({"write"}))
            if src is None:
                return None
            dst = self._plan_file(event.detail["dst"], frozenset({"write"}))
            if dst is None:
                return None
            return src + dst
        if kind is EventKind.EXEC:
            return self._plan_binary(event.detail["path"])
        if kind is EventKind.NET_CONNECT:
            return self._plan_net(_net_hosts(event), event.detail["port"], "outbound")
        if kind in (EventKind.NET_LISTEN, EventKind.NET_ACCEPT):
            return self._plan_net(_net_hosts(event), event.detail["port"], "inbound")
        return None  # process-control and dns events are not cacheable

    def _plan_file(self, path: str, needed: frozenset):
        path = posixpath.normpath(path)
        remaining = set(needed)
        plan = []
        for scope in SCOPES:
            partition = self._store[scope]
            for perm in sorted(remaining):
                if partition.get(("file", path, perm), 0) > 0:
                    plan.append((scope, ("file", path, perm)))
                    remaining.discard(perm)
            if not remaining:
                return plan
        return None

    def _plan_binary(self, path: str):
        path = posixpath.normpath(path)
        for scope in SCOPES:
            if self._store[scope].get(("binary", path), 0) > 0:
                return [(scope, ("binary", path))]
        return None

    def _plan_net(self, hosts, port: int, direction: str):
        for scope in SCOPES:
            partition = self._store[scope]
            for host in hosts:
                key = ("network", host, port, direction)
                if partition.get(key, 0) > 0:
                    return [(scope, key)]
        return None

    # -- non-consuming coverage probes (used when pruning event traces) --------

    def covers_file_op(self, path: str, mode: str) -> bool:
        return self._plan_file(path, _MODE_NEEDS[mode]) is not None

    def covers_net_op(self, host: str, port: int, direction: str) -> bool:
        return self._plan_net([host], port, direction) is not None

    def covers_exec(self, path: str) -> bool:
        return self._plan_binary(path) is not None

    # -- introspection ---------------------------------------------------------

    def snapshot(self) -> dict:
        return {scope: dict(counter) for scope, counter in self._store.items()}

    def live_entries(self, scope: Scope) -> set:
        return {key for key, count in self._store[scope].items() if count > 0}


def _net_hosts(event: TraceEvent) -> list[str]:
    hosts = []
    if "domain" in event.detail:
        hosts.append(event.detail["domain"])
    hosts.append(event.detail["address"])
    return hosts
