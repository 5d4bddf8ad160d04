"""Deterministic scenario replay: drive a full in-process monitor from files.

A scenario bundle is a directory:

    trace.jsonl     -- replay trace events (epoch-tagged; see tracer.events)
    client.jsonl    -- ordered protocol actions the agent client performs
    stub.jsonl      -- allowance script for the scripted model auditor
    expected.jsonl  -- expected decision sequence (and optional counters)
    policy.ini      -- optional enforcement-policy override
    rules.ini       -- optional rule file
    config.ini      -- optional [auditor] kind = stub | disabled

Client actions, one JSON object per line:

    {"op": "connect", "agent": {...}}
    {"op": "start_passive_tracing"}
    {"op": "send_new_tool_use", "messages": [...], "action": {...}}
    {"op": "get_enforcement_info", "expect": "alert", "contains": "..."}

Expected lines are ``{"seq": N, "pid": P, "verdict": "resume"|"terminate"}``
in decision order; a final ``{"counters": {...}}`` line pins counter values.
Replays run the protocol layer over an in-memory channel by default; with
``over_tcp`` the same script crosses a real loopback socket.  A fake clock
makes reports byte-identical run to run.
"""

from __future__ import annotations

import configparser
import json
import os
import socket
import time
from dataclasses import dataclass
from typing import Optional

from warden.a2m.frames import MemoryTransport, TcpTransport, TransportError
from warden.a2m.handler import SessionHandler
from warden.a2m.protocol import client_hello
from warden.auditor.backends import DisabledAuditor, ScriptedAuditor, StubScriptError, load_stub_script
from warden.auditor.rules import RuleError, load_rules
from warden.clock import FakeClock
from warden.model import is_safe_action
from warden.monitor.runtime import MonitorCore, SessionRuntime
from warden.monitor.server import MonitorServer
from warden.tracer.engine import Classification
from warden.tracer.events import TraceParseError, load_trace_file
from warden.tracer.policy import EnforcementPolicy, PolicyError, load_policy
from warden.tracer.replay import ReplayBackend

CLIENT_OPS = ("connect", "start_passive_tracing", "send_new_tool_use",
              "get_enforcement_info")


class BundleError(ValueError):
    pass


class ReplayMismatch(Exception):
    pass


@dataclass
class ScenarioBundle:
    root: str
    name: str
    trace_path: str
    client_path: str
    stub_path: str
    expected_path: str
    policy_path: Optional[str] = None
    rules_path: Optional[str] = None
    config_path: Optional[str] = None

    @classmethod
    def load(cls, root) -> "ScenarioBundle":
        root = os.path.abspath(root)
        if not os.path.isdir(root):
            raise BundleError(f"scenario bundle is not a directory: {root}")
        paths = {}
        for stem in ("trace", "client", "stub", "expected"):
            path = os.path.join(root, f"{stem}.jsonl")
            if not os.path.exists(path):
                raise BundleError(f"bundle missing {stem}.jsonl: {path}")
            paths[stem] = path
        optional = {
            stem: path
            for stem in ("policy", "rules", "config")
            if os.path.exists(path := os.path.join(root, f"{stem}.ini"))
        }
        return cls(root=root, name=os.path.basename(root),
                   trace_path=paths["trace"], client_path=paths["client"],
                   stub_path=paths["stub"], expected_path=paths["expected"],
                   policy_path=optional.get("policy"),
                   rules_path=optional.get("rules"),
                   config_path=optional.get("config"))


@dataclass
class ReplayResult:
    report: dict
    runtime: SessionRuntime

    @property
    def passed(self) -> bool:
        return self.report["pass"]


def _load_jsonl(path, what: str) -> list:
    items = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                items.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise BundleError(f"{what} line {line_no}: {exc}")
    return items


def _load_client_script(path) -> list[dict]:
    actions = _load_jsonl(path, "client script")
    for i, action in enumerate(actions, start=1):
        if not isinstance(action, dict) or action.get("op") not in CLIENT_OPS:
            raise BundleError(f"client script entry {i}: unknown op "
                              f"{action.get('op') if isinstance(action, dict) else action!r}")
    return actions


def _load_expected(path, total_events: int) -> tuple[list, Optional[dict]]:
    decisions = []
    counters = None
    for i, entry in enumerate(_load_jsonl(path, "expected file"), start=1):
        if not isinstance(entry, dict):
            raise BundleError(f"expected entry {i}: not an object")
        if "counters" in entry:
            counters = entry["counters"]
            if not isinstance(counters, dict):
                raise BundleError(f"expected entry {i}: counters must be an object")
            continue
        missing = {"seq", "pid", "verdict"} - set(entry)
        if missing:
            raise BundleError(f"expected entry {i}: missing {sorted(missing)}")
        if not (1 <= entry["seq"] <= total_events):
            raise BundleError(
                f"expected entry {i}: seq {entry['seq']} not in trace "
                f"(1..{total_events})"
            )
        decisions.append({"seq": entry["seq"], "pid": entry["pid"],
                          "verdict": entry["verdict"]})
    return decisions, counters


def _auditor_kind(bundle: ScenarioBundle) -> str:
    if bundle.config_path is None:
        return "stub"
    parser = configparser.ConfigParser()
    try:
        with open(bundle.config_path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise BundleError(f"bad bundle config: {exc}")
    kind = parser.get("auditor", "kind", fallback="stub")
    if kind not in ("stub", "disabled"):
        raise BundleError(f"bundle auditor kind must be stub or disabled, got {kind!r}")
    return kind


def build_core(bundle: ScenarioBundle) -> tuple[MonitorCore, list, list, Optional[dict]]:
    """Assemble the monitor pieces for a bundle; raises BundleError on parse issues."""
    try:
        events = load_trace_file(bundle.trace_path)
        actions = _load_client_script(bundle.client_path)
        stub_entries = load_stub_script(bundle.stub_path)
        expected, expected_counters = _load_expected(bundle.expected_path, len(events))
        policy = load_policy(bundle.policy_path) if bundle.policy_path \
            else EnforcementPolicy()
        file_rules = load_rules(bundle.rules_path) if bundle.rules_path else []
    except (TraceParseError, StubScriptError, PolicyError, RuleError) as exc:
        raise BundleError(str(exc))

    kind = _auditor_kind(bundle)
    clock = FakeClock()
    nonces = iter(f"replay{n:010d}" for n in range(1, 1000))

    def model_factory(session_clock):
        if kind == "disabled":
            return DisabledAuditor()
        return ScriptedAuditor(stub_entries, clock=session_clock)

    core = MonitorCore(
        policy=policy,
        file_rules=file_rules,
        backend_factory=lambda: ReplayBackend(events),
        model_factory=model_factory,
        clock_factory=lambda: clock,
        nonce_factory=lambda: next(nonces),
    )
    return core, actions, expected, expected_counters


def run_bundle(bundle: ScenarioBundle, over_tcp: bool = False) -> ReplayResult:
    core, actions, expected, expected_counters = build_core(bundle)
    if over_tcp:
        runtime, failures = _drive_tcp(core, actions)
    else:
        runtime, failures = _drive_memory(core, actions)
    report = build_report(bundle.name, runtime, failures, expected, expected_counters)
    return ReplayResult(report=report, runtime=runtime)


# -- drivers -----------------------------------------------------------------


def _action_frame(action: dict, request_id: int) -> dict:
    op = action["op"]
    data = {}
    if op == "connect":
        data = action.get("agent", {})
    elif op == "send_new_tool_use":
        data = {"messages": action.get("messages", []),
                "action": action.get("action", {})}
    return {"request_id": request_id, "operand": op, "data": data}


def _check_response(action: dict, response: dict, failures: list) -> None:
    op = action["op"]
    result = response.get("result")
    if op == "get_enforcement_info":
        expect = action.get("expect")
        if expect == "alert":
            if result != "alert_pending":
                failures.append(f"expected an alert, got result {result!r}")
            else:
                needle = action.get("contains")
                alert = response.get("payload", {}).get("alert_text", "")
                if needle and needle not in alert:
                    failures.append(f"alert text {alert!r} does not contain {needle!r}")
        elif expect == "none" and result != "ok":
            failures.append(f"expected no alert, got result {result!r}")
        return
    if result != "ok":
        failures.append(f"{op} failed: {response.get('error', result)}")


def _drive_memory(core: MonitorCore, actions: list) -> tuple[SessionRuntime, list]:
    runtime = core.new_runtime()
    transport = MemoryTransport(clock=runtime.clock)
    handler = SessionHandler(transport, runtime)
    failures: list[str] = []

    transport.push(client_hello())
    if not handler.handshake():
        return runtime, ["handshake failed"]
    read_from = len(transport.outbox)

    alive = True
    for request_id, action in enumerate(actions, start=1):
        if not alive:
            failures.append(f"connection closed before action {request_id}")
            break
        transport.push(_action_frame(action, request_id))
        alive = handler.step()
        responses = transport.outbox[read_from:]
        read_from = len(transport.outbox)
        if not responses:
            failures.append(f"no response to action {request_id} ({action['op']})")
            continue
        _check_response(action, responses[-1], failures)
    if alive:
        handler.step()  # EOF: drains the empty inbox and closes the session
    return runtime, failures


def _drive_tcp(core: MonitorCore, actions: list) -> tuple[SessionRuntime, list]:
    server = MonitorServer(core, "127.0.0.1:0")
    host, port = server.start()
    failures: list[str] = []
    try:
        sock = socket.create_connection((host, port), timeout=10.0)
        transport = TcpTransport(sock)
        try:
            transport.send_frame(client_hello())
            hello = transport.recv_frame(timeout=10.0)
            if hello.get("error"):
                return _only_session(server), [f"handshake failed: {hello}"]
            for request_id, action in enumerate(actions, start=1):
                transport.send_frame(_action_frame(action, request_id))
                try:
                    response = transport.recv_frame(timeout=10.0)
                except TransportError:
                    failures.append(f"no response to action {request_id} ({action['op']})")
                    break
                _check_response(action, response, failures)
        finally:
            transport.close()
        runtime = _only_session(server)
        deadline = time.monotonic() + 5.0
        while not runtime.closed and time.monotonic() < deadline:
            time.sleep(0.01)
        return runtime, failures
    finally:
        server.shutdown()


def _only_session(server: MonitorServer) -> SessionRuntime:
    deadline = time.monotonic() + 5.0
    while not server.sessions and time.monotonic() < deadline:
        time.sleep(0.01)
    if not server.sessions:
        raise ReplayMismatch("server never saw the replay session")
    return server.sessions[0]


# -- reporting ---------------------------------------------------------------


def build_report(name: str, runtime: SessionRuntime, failures: list,
                 expected: list, expected_counters: Optional[dict]) -> dict:
    engine = runtime.engine
    pipeline = runtime.pipeline
    counts = engine.counts if engine else {}
    counters = {
        "events_total": sum(counts.values()) if counts else 0,
        "events_ignored": counts.get(Classification.IGNORED, 0),
        "events_observed": counts.get(Classification.OBSERVED, 0),
        "events_enforcement": counts.get(Classification.ENFORCEMENT, 0),
        "decisions": len(runtime.decisions),
        "resumes": sum(1 for d in runtime.decisions if d["verdict"] == "resume"),
        "terminations": sum(1 for d in runtime.decisions if d["verdict"] == "terminate"),
        "rule_hits": pipeline.rule_hits if pipeline else 0,
        "cache_hits": pipeline.cache_hits if pipeline else 0,
        "model_queries": pipeline.model_queries if pipeline else 0,
        "pruned_ops": pipeline.pruned_op_total if pipeline else 0,
    }

    decisions = [{"seq": d["seq"], "pid": d["pid"], "verdict": d["verdict"]}
                 for d in runtime.decisions]

    epochs = range(1, (engine.current_epoch if engine else 0) + 1)
    epoch_safety = {
        str(epoch): is_safe_action(
            d["verdict"] == "resume" for d in runtime.decisions if d["epoch"] == epoch
        )
        for epoch in epochs
    }

    first_divergence = None
    for i in range(max(len(decisions), len(expected))):
        actual = decisions[i] if i < len(decisions) else None
        want = expected[i] if i < len(expected) else None
        if actual != want:
            first_divergence = {"index": i, "expected": want, "actual": actual}
            break

    counters_ok = True
    counter_divergence = None
    if expected_counters is not None:
        for key, want in sorted(expected_counters.items()):
            if counters.get(key) != want:
                counters_ok = False
                counter_divergence = {"counter": key, "expected": want,
                                      "actual": counters.get(key)}
                break

    quiescent = engine is not None and not runtime.suspended_pids()

    return {
        "bundle": name,
        "decisions": decisions,
        "counters": counters,
        "epoch_action_safe": epoch_safety,
        "script_failures": list(failures),
        "expected_ok": first_divergence is None,
        "first_divergence": first_divergence,
        "counters_ok": counters_ok,
        "counter_divergence": counter_divergence,
        "quiescent": quiescent,
        "pass": (first_divergence is None and counters_ok and not failures
                 and quiescent),
    }


def report_text(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"
