"""System trace layer: event kinds, enforcement policy, process bookkeeping."""

from warden.tracer.dns import DnsMappingTable
from warden.tracer.engine import (
    Classification,
    FencingError,
    ProcessRecord,
    TraceEngine,
    enrich_network,
)
from warden.tracer.events import (
    FILE_KINDS,
    NET_KINDS,
    EventKind,
    RawEvent,
    TraceEvent,
    load_trace_file,
    parse_raw_event,
)
from warden.tracer.policy import EnforcementPolicy, PolicyError, load_policy
from warden.tracer.replay import EnforceStateError, OsBackend, ProcState, ReplayBackend

__all__ = [
    "Classification",
    "DnsMappingTable",
    "EnforceStateError",
    "EnforcementPolicy",
    "EventKind",
    "FencingError",
    "FILE_KINDS",
    "NET_KINDS",
    "OsBackend",
    "PolicyError",
    "ProcState",
    "ProcessRecord",
    "RawEvent",
    "ReplayBackend",
    "TraceEngine",
    "TraceEvent",
    "enrich_network",
    "load_policy",
    "load_trace_file",
    "parse_raw_event",
]
