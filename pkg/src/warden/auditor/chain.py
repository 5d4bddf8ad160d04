"""Event dependency analysis: the process chain behind an enforcement event.

The chain runs from the originating process (leaf) up toward the agent's
main process (root), carries each node's metadata and its epoch-local file
and network operations, and is bounded two ways: its length is capped at
the maximum enforced process level, and operations already verified in the
cache are pruned from the nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from warden.auditor.cache import SecurityQueryCache
from warden.tracer.events import EventKind, TraceEvent


@dataclass
class ChainNode:
    pid: int
    executable: str
    argv: list
    is_shell: bool
    file_ops: list = field(default_factory=list)  # (path, mode)
    net_ops: list = field(default_factory=list)   # (host, port, direction)

    def to_json(self) -> dict:
        return {
            "pid": self.pid,
            "executable": self.executable,
            "argv": list(self.argv),
            "is_shell": self.is_shell,
            "file_ops": [list(op) for op in self.file_ops],
            "net_ops": [list(op) for op in self.net_ops],
        }


@dataclass
class ProcessChain:
    nodes: list          # leaf first, agent main last (when reachable)
    truncated: bool = False
    orphaned: bool = False

    def __len__(self) -> int:
        return len(self.nodes)

    def to_json(self) -> dict:
        return {"nodes": [n.to_json() for n in self.nodes],
                "truncated": self.truncated, "orphaned": self.orphaned}


@dataclass
class SecurityQuery:
    task_summary: str
    event: dict
    chain: ProcessChain

    def to_json(self) -> dict:
        return {"task_summary": self.task_summary, "event": self.event,
                "chain": self.chain.to_json()}


def extract_dependent_trace(
    event: TraceEvent,
    epoch_events: list,
    records: dict,
    agent_pid: int,
    max_len: int,
    cache: Optional[SecurityQueryCache] = None,
) -> tuple[ProcessChain, list]:
    """Build the pruned leaf-to-root chain for an enforcement event.

    Returns the chain and the list of pruned operations, each as
    ``(pid, op_kind, op_tuple)``.  Operations still in the returned nodes
    were absent from the cache at build time.
    """
    if event.pid not in records:
        raise KeyError(f"pid {event.pid} unknown to the process table")

    ancestry = []
    orphaned = False
    pid: Optional[int] = event.pid
    seen = set()
    while True:
        record = records.get(pid)
        if record is None or pid in seen:
            orphaned = True  # dangling parent pointer (or a cycle); no path to root
            break
        seen.add(pid)
        ancestry.append(record)
        if pid == agent_pid:
            break
        if record.parent_pid is None:
            orphaned = True
            break
        pid = record.parent_pid

    truncated = len(ancestry) > max_len
    ancestry = ancestry[:max_len]  # keep the nodes nearest the leaf

    pruned = []
    nodes = []
    for record in ancestry:
        node = ChainNode(pid=record.pid, executable=record.executable,
                         argv=list(record.argv), is_shell=record.is_shell)
        for op in _epoch_file_ops(record.pid, event, epoch_events):
            if cache is not None and cache.covers_file_op(op[0], op[1]):
                pruned.append((record.pid, "file", op))
            else:
                node.file_ops.append(op)
        for op in _epoch_net_ops(record.pid, event, epoch_events):
            if cache is not None and cache.covers_net_op(op[0], op[1], op[2]):
                pruned.append((record.pid, "network", op))
            else:
                node.net_ops.append(op)
        nodes.append(node)

    chain = ProcessChain(nodes=nodes, truncated=truncated, orphaned=orphaned)
    return chain, pruned


def _epoch_file_ops(pid: int, event: TraceEvent, epoch_events: list) -> list:
    ops = []
    for e in epoch_events:
        if e.pid != pid or e.seq >= event.seq or e.epoch != event.epoch:
            continue
        if e.kind is EventKind.FILE_OPEN:
            ops.append((e.detail["path"], e.detail["mode"]))
    return ops


def _epoch_net_ops(pid: int, event: TraceEvent, epoch_events: list) -> list:
    ops = []
    for e in epoch_events:
        if e.pid != pid or e.seq >= event.seq or e.epoch != event.epoch:
            continue
        if e.kind is EventKind.NET_CONNECT:
            host = e.detail.get("domain", e.detail["address"])
            ops.append((host, e.detail["port"], "outbound"))
        elif e.kind in (EventKind.NET_LISTEN, EventKind.NET_ACCEPT):
            ops.append((e.detail["address"], e.detail["port"], "inbound"))
    return ops
