"""Ingestion pipeline: process provenance, classification, enforcement hooks.

Only the agent's main process and its fork-descendants are *interesting*;
everything else is ignored.  An interesting process is *enforced* while its
tree level is within the configured maximum, it is alive, and it has audit
budget left.  Sensitive events from enforced processes suspend the process
and are handed to the auditor; the same events from other interesting
processes are logged as observed.
"""

from __future__ import annotations

import logging
import posixpath
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from warden.tracer.dns import DnsMappingTable
from warden.tracer.events import EventKind, RawEvent, TraceEvent
from warden.tracer.policy import EnforcementPolicy
from warden.tracer.replay import ProcState

logger = logging.getLogger(__name__)

SHELL_NAMES = frozenset({"sh", "bash", "dash", "zsh"})


class FencingError(Exception):
    """An event from a suspended pid reached ingest before its decision."""


class Classification(str, Enum):
    IGNORED = "ignored"
    OBSERVED = "observed"
    ENFORCEMENT = "enforcement"


def enrich_network(event: TraceEvent, dns: DnsMappingTable) -> TraceEvent:
    """Annotate an outbound connect with the domain its address resolved from."""
    if event.kind is not EventKind.NET_CONNECT:
        raise ValueError("enrich_network applies to net_connect events only")
    domain = dns.lookup(event.detail["address"])
    if domain is not None:
        event.detail["domain"] = domain
    return event


@dataclass
class ProcessRecord:
    pid: int
    parent_pid: Optional[int]
    level: int
    executable: str = ""
    argv: list = field(default_factory=list)
    is_shell: bool = False
    file_ops: list = field(default_factory=list)  # (epoch, path, mode)
    net_ops: list = field(default_factory=list)   # (epoch, host, port, direction)
    alive: bool = True
    audit_time_spent: float = 0.0
    budget_exhausted: bool = False


class TraceEngine:
    def __init__(self, agent_pid: int, policy: EnforcementPolicy, backend):
        if agent_pid <= 0:
            raise ValueError("agent pid must be positive")
        self.policy = policy
        self.backend = backend
        self.agent_pid = agent_pid
        self.records: dict[int, ProcessRecord] = {
            agent_pid: ProcessRecord(pid=agent_pid, parent_pid=None, level=1)
        }
        self.dns = DnsMappingTable()
        self.collector: list[TraceEvent] = []
        self.warnings: list[str] = []
        self.counts = {c: 0 for c in Classification}
        self.current_epoch = 0
        self._epoch_counter = 0
        self._seq = 0
        self._lock = threading.RLock()

    # -- epochs --------------------------------------------------------------

    def open_tool_epoch(self) -> int:
        with self._lock:
            self._epoch_counter += 1
            self.current_epoch = self._epoch_counter
            return self.current_epoch

    def epoch_events(self, epoch: int) -> list[TraceEvent]:
        return [e for e in self.collector if e.epoch == epoch]

    # -- process sets ----------------------------------------------------------

    def interesting(self, pid: int) -> bool:
        return pid in self.records

    def enforced(self, pid: int) -> bool:
        record = self.records.get(pid)
        return (
            record is not None
            and record.alive
            and not record.budget_exhausted
            and record.level <= self.policy.max_enforced_process_level
        )

    # -- ingestion -------------------------------------------------------------

    def ingest(self, raw: RawEvent) -> tuple[TraceEvent, Classification]:
        with self._lock:
            self._seq += 1
            event = TraceEvent(seq=self._seq, ts=raw.ts, pid=raw.pid, kind=raw.kind,
                               detail=dict(raw.detail), epoch=self.current_epoch)
            classification = self._classify(event)
            self.counts[classification] += 1
            if classification is not Classification.IGNORED:
                self.collector.append(event)
            return event, classification

    def _classify(self, event: TraceEvent) -> Classification:
        record = self.records.get(event.pid)
        if record is None:
            if event.kind is not EventKind.FORK:
                self._warn(f"event from unknown pid {event.pid} ({event.kind.value})")
            return Classification.IGNORED

        state = self.backend.state(event.pid)
        if state is ProcState.SUSPENDED:
            raise FencingError(
                f"pid {event.pid} emitted {event.kind.value} while suspended"
            )
        if state is ProcState.TERMINATED:
            if event.kind is EventKind.EXIT:
                self._apply_exit(event, record)
                return Classification.OBSERVED
            return Classification.IGNORED  # gated: the process was killed

        if not record.alive:
            self._warn(f"event from exited pid {event.pid} ({event.kind.value})")
            return Classification.IGNORED

        self._apply_side_effects(event, record)

        if self.policy.probe_enforces(event.kind, event.detail) and self.enforced(event.pid):
            event.enforcement = True
            self.backend.suspend(event.pid)
            return Classification.ENFORCEMENT
        return Classification.OBSERVED

    def _apply_side_effects(self, event: TraceEvent, record: ProcessRecord) -> None:
        kind = event.kind
        if kind is EventKind.FORK:
            self._register_child(record, event.detail["child_pid"])
        elif kind is EventKind.EXEC:
            record.executable = event.detail["path"]
            record.argv = list(event.detail["argv"])
            record.is_shell = posixpath.basename(record.executable) in SHELL_NAMES
        elif kind is EventKind.EXIT:
            self._apply_exit(event, record)
        elif kind is EventKind.DNS_RESOLVE:
            self.dns.record(event.detail["domain"], event.detail["addresses"], event.ts)
        elif kind is EventKind.FILE_OPEN:
            record.file_ops.append((event.epoch, event.detail["path"], event.detail["mode"]))
        elif kind is EventKind.NET_CONNECT:
            enrich_network(event, self.dns)
            host = event.detail.get("domain", event.detail["address"])
            record.net_ops.append((event.epoch, host, event.detail["port"], "outbound"))
        elif kind in (EventKind.NET_LISTEN, EventKind.NET_ACCEPT):
            record.net_ops.append(
                (event.epoch, event.detail["address"], event.detail["port"], "inbound")
            )

    def _register_child(self, parent: ProcessRecord, child_pid: int) -> None:
        if child_pid in self.records:
            self._warn(f"pid {child_pid} re-forked; replacing its record")
        self.records[child_pid] = ProcessRecord(
            pid=child_pid, parent_pid=parent.pid, level=parent.level + 1
        )

    def _apply_exit(self, event: TraceEvent, record: ProcessRecord) -> None:
        record.alive = False
        self.backend.mark_exited(event.pid)

    # -- enforcement -----------------------------------------------------------

    def enforce(self, pid: int, decision: str) -> None:
        """Apply a suspend/resume/terminate transition through the backend."""
        with self._lock:
            if decision == "suspend":
                self.backend.suspend(pid)
            elif decision == "resume":
                self.backend.resume(pid)
            elif decision == "terminate":
                self.backend.terminate(pid)
            else:
                raise ValueError(f"unknown enforcement decision {decision!r}")

    def accumulate_audit_time(self, pid: int, elapsed: float) -> float:
        """Charge audit latency to a process; over budget, it leaves the enforced set."""
        with self._lock:
            record = self.records.get(pid)
            if record is None:
                return self.policy.audit_time_budget
            record.audit_time_spent += elapsed
            remaining = self.policy.audit_time_budget - record.audit_time_spent
            if record.audit_time_spent > self.policy.audit_time_budget \
                    and not record.budget_exhausted:
                record.budget_exhausted = True
                self._warn(
                    f"pid {pid} exceeded audit budget "
                    f"({record.audit_time_spent:g}s > {self.policy.audit_time_budget:g}s); "
                    "de-enforced, events remain logged"
                )
            return max(remaining, 0.0)

    def _warn(self, message: str) -> None:
        self.warnings.append(message)
        logger.warning("%s", message)
