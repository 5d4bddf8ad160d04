"""SDK acceptance: non-interference round trip (S1) and buffer conservation (S2)."""

import functools
import json
import random

from warden_client import SentinelClient

from conftest import MiniA2MServer
from harness import SayStep, ToolStep, run_agent


def criterion(label):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"{label} FAIL")
                raise
            print(f"{label} PASS")
        return wrapper
    return deco


# -- S1: toy agent against the real in-process monitor -------------------------


def start_monitor(events):
    from warden.auditor.backends import ScriptedAuditor
    from warden.auditor.rules import Rule
    from warden.clock import FakeClock
    from warden.monitor.runtime import MonitorCore
    from warden.monitor.server import MonitorServer
    from warden.tracer.events import EventKind, parse_raw_event
    from warden.tracer.policy import EnforcementPolicy
    from warden.tracer.replay import ReplayBackend

    raws = [parse_raw_event(e) for e in events]
    core = MonitorCore(
        policy=EnforcementPolicy(),
        file_rules=[Rule(id="allow-exec", priority=50, kind=EventKind.EXEC,
                         verdict="safe", path_glob="/**")],
        backend_factory=lambda: ReplayBackend(raws),
        model_factory=lambda clock: ScriptedAuditor([], clock=clock),
        clock_factory=FakeClock,
    )
    server = MonitorServer(core, "127.0.0.1:0")
    host, port = server.start()
    return server, f"{host}:{port}"


def ev(kind, pid, epoch, **detail):
    return {"ts": 0.0, "pid": pid, "kind": kind, "detail": detail, "epoch": epoch}


def tool_epoch(pid, epoch, binary, blocked=False):
    events = [
        ev("fork", 100, epoch, child_pid=pid),
        ev("exec", pid, epoch, path=binary, argv=[binary]),
    ]
    if blocked:
        events.append(ev("kill", pid, epoch, target_pid=100, signal=9))
        events.append(ev("exit", pid, epoch, status=137))
    else:
        events.append(ev("file_open", pid, epoch, path=f"/data/in{epoch}",
                         mode="read"))
        events.append(ev("exit", pid, epoch, status=0))
    return events


BENIGN_TRACE = (tool_epoch(201, 1, "/usr/bin/tool1")
                + tool_epoch(202, 2, "/usr/bin/tool2")
                + tool_epoch(203, 3, "/usr/bin/tool3"))

BLOCKED_TRACE = (tool_epoch(201, 1, "/usr/bin/tool1")
                 + tool_epoch(202, 2, "/usr/bin/tool2", blocked=True)
                 + tool_epoch(203, 3, "/usr/bin/tool3"))

TASK = "process the three input files"


def rounds(tool2_result="out2", tool2_error=False):
    return [
        [SayStep("working on it"),
         ToolStep("bash", {"command": "tool1 /data/in1"}, "out1")],
        [ToolStep("bash", {"command": "tool2 /data/in2"}, tool2_result,
                  is_error=tool2_error)],
        [ToolStep("bash", {"command": "tool3 /data/in3"}, "out3")],
    ]


@criterion("S1 SDK round trip: non-interference + single alert")
def test_s1_sdk_round_trip():
    # Benign: the instrumented transcript is byte-identical to the bare run.
    bare = run_agent(TASK, rounds(), client=None)
    server, desc = start_monitor(BENIGN_TRACE)
    try:
        client = SentinelClient(desc, agent_process_id=100,
                                dependent_files=["/srv/agent/config.yaml"])
        instrumented = run_agent(TASK, rounds(), client=client)
        client.close()
    finally:
        server.shutdown()
    assert json.dumps(instrumented) == json.dumps(bare)
    runtime = server.sessions[0]
    assert runtime.engine.counts  # the monitor actually traced the run
    assert all(d["verdict"] == "resume" for d in runtime.decisions)

    # Blocked: the failing tool result carries exactly one security alert.
    server, desc = start_monitor(BLOCKED_TRACE)
    try:
        client = SentinelClient(desc, agent_process_id=100,
                                dependent_files=["/srv/agent/config.yaml"])
        blocked = run_agent(TASK, rounds(tool2_result="bash: tool2: killed",
                                         tool2_error=True), client=client)
        client.close()
    finally:
        server.shutdown()
    alerts = [content for kind, content in blocked
              if kind == "tool_result" and "SECURITY ALERT:" in content]
    assert len(alerts) == 1
    assert "bash: tool2: killed" in alerts[0]
    # Everything else matches the benign transcript except that one result.
    differing = [i for i, (a, b) in enumerate(zip(blocked, bare)) if a != b]
    assert len(differing) == 1


@criterion("S2 buffer conservation over 1000 random interleavings")
def test_s2_buffer_conservation():
    server = MiniA2MServer()
    server.start()
    rng = random.Random(1729)
    try:
        for case in range(1000):
            server.batches.clear()
            client = SentinelClient(server.desc, agent_process_id=100)
            expected = []
            counter = 0
            for _ in range(rng.randint(0, 12)):
                roll = rng.random()
                if roll < 0.35:
                    counter += 1
                    expected.append(("user", f"u{counter}"))
                    client.add_user_message(f"u{counter}")
                elif roll < 0.7:
                    counter += 1
                    expected.append(("agent", f"a{counter}"))
                    client.add_agent_message(f"a{counter}")
                elif roll < 0.8:
                    counter += 1
                    expected.append(("tool_result", f"t{counter}"))
                    client.add_tool_result(f"t{counter}")
                else:
                    client.notify_new_tool_use("bash", {"case": case})
            client.notify_new_tool_use("bash", {"case": case, "final": True})
            client.close()

            delivered = [(m["role"], m["content"])
                         for batch in server.batches for m in batch]
            assert delivered == expected, f"case {case} lost or reordered messages"
            seqs = [m["seq"] for batch in server.batches for m in batch]
            assert seqs == sorted(seqs) == list(range(1, len(seqs) + 1))
    finally:
        server.stop()
