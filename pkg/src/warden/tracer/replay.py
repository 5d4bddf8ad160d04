"""Trace-source backends.

The replay backend is the deterministic workhorse: it serves events from a
recorded file and emulates enforcement by gating; a suspended pid yields
no events until resumed, a terminated pid yields only its exit event.  The
OS backend is an adapter slot carrying the same contract; wiring it to a
live kernel tracer is deliberately out of scope here.
"""

from __future__ import annotations

from enum import Enum
from typing import Iterable, Iterator

from warden.tracer.events import RawEvent, load_trace_file


class EnforceStateError(Exception):
    """suspend/resume/terminate called against the wrong process state."""


class ProcState(Enum):
    RUNNING = "running"
    SUSPENDED = "suspended"
    TERMINATED = "terminated"
    EXITED = "exited"


class ReplayBackend:
    def __init__(self, events: Iterable[RawEvent]):
        self._events = list(events)
        self._states: dict[int, ProcState] = {}
        self.transitions: list[tuple[int, str]] = []

    @classmethod
    def from_file(cls, path) -> "ReplayBackend":
        return cls(load_trace_file(path))

    # -- event feed --------------------------------------------------------

    def events_for_epoch(self, epoch: int) -> Iterator[RawEvent]:
        for event in self._events:
            if event.epoch == epoch:
                yield event

    def total_events(self) -> int:
        return len(self._events)

    # -- enforcement contract ------------------------------------------------

    def state(self, pid: int) -> ProcState:
        return self._states.get(pid, ProcState.RUNNING)

    def suspend(self, pid: int) -> None:
        if self.state(pid) is not ProcState.RUNNING:
            raise EnforceStateError(f"cannot suspend pid {pid} in state {self.state(pid).value}")
        self._states[pid] = ProcState.SUSPENDED
        self.transitions.append((pid, "suspend"))

    def resume(self, pid: int) -> None:
        if self.state(pid) is not ProcState.SUSPENDED:
            raise EnforceStateError(f"cannot resume pid {pid} in state {self.state(pid).value}")
        self._states[pid] = ProcState.RUNNING
        self.transitions.append((pid, "resume"))

    def terminate(self, pid: int) -> None:
        state = self.state(pid)
        if state is ProcState.EXITED:
            self.transitions.append((pid, "terminate_noop"))
            return
        if state is not ProcState.SUSPENDED:
            raise EnforceStateError(f"cannot terminate pid {pid} in state {state.value}")
        self._states[pid] = ProcState.TERMINATED
        self.transitions.append((pid, "terminate"))

    def mark_exited(self, pid: int) -> None:
        self._states[pid] = ProcState.EXITED

    def suspended_pids(self) -> list[int]:
        return sorted(p for p, s in self._states.items() if s is ProcState.SUSPENDED)


class OsBackend:
    """Contract slot for a live kernel trace source (stop/continue/kill)."""

    def __init__(self, *args, **kwargs):
        raise NotImplementedError(
            "OS trace backend is an adapter slot; this build ships the replay backend only"
        )
