"""Builders shared across the test suite: events, runtimes, protocol drivers."""

from __future__ import annotations

import itertools

from warden.a2m.frames import MemoryTransport
from warden.a2m.handler import SessionHandler
from warden.a2m.protocol import client_hello
from warden.auditor.backends import ScriptedAuditor, _parse_entry
from warden.clock import FakeClock
from warden.model import AgentBasicInfo
from warden.monitor.runtime import SessionRuntime
from warden.tracer.events import parse_raw_event
from warden.tracer.policy import EnforcementPolicy
from warden.tracer.replay import ReplayBackend

AGENT_PID = 100
DEPENDENT_FILES = ("/srv/agent/config.yaml", "/srv/agent/agent.db")


def agent_info(pid: int = AGENT_PID) -> AgentBasicInfo:
    return AgentBasicInfo(agent_process_id=pid, dependent_files=DEPENDENT_FILES,
                          agent_name="toybot")


def agent_info_json(pid: int = AGENT_PID) -> dict:
    return {"agent_process_id": pid, "dependent_files": list(DEPENDENT_FILES),
            "agent_name": "toybot"}


# -- event builders (JSON dicts in the replay-file schema) ---------------------

_ts = itertools.count(1)


def ev(kind: str, pid: int, epoch: int = 0, **detail) -> dict:
    return {"ts": float(next(_ts)), "pid": pid, "kind": kind,
            "detail": detail, "epoch": epoch}


def fork(pid, child_pid, epoch=0):
    return ev("fork", pid, epoch, child_pid=child_pid)


def exec_(pid, path, argv=None, epoch=0):
    return ev("exec", pid, epoch, path=path, argv=argv or [path])


def kill(pid, target_pid, sig=9, epoch=0):
    return ev("kill", pid, epoch, target_pid=target_pid, signal=sig)


def exit_(pid, status=0, epoch=0):
    return ev("exit", pid, epoch, status=status)


def file_open(pid, path, mode="read", epoch=0):
    return ev("file_open", pid, epoch, path=path, mode=mode)


def file_remove(pid, path, epoch=0):
    return ev("file_remove", pid, epoch, path=path)


def file_rename(pid, src, dst, epoch=0):
    return ev("file_rename", pid, epoch, src=src, dst=dst)


def net_connect(pid, address, port, epoch=0, family="ipv4"):
    return ev("net_connect", pid, epoch, address=address, port=port, family=family)


def net_listen(pid, address, port, epoch=0, family="ipv4"):
    return ev("net_listen", pid, epoch, address=address, port=port, family=family)


def dns_resolve(pid, domain, addresses, epoch=0):
    return ev("dns_resolve", pid, epoch, domain=domain, addresses=addresses)


def raw(event_dict):
    return parse_raw_event(event_dict)


def raws(event_dicts):
    return [parse_raw_event(e) for e in event_dicts]


# -- stub auditor ---------------------------------------------------------------

def stub_entry(obj: dict):
    return _parse_entry(obj, 0)


def allow(kind: str, verified_ops=(), explanation="allowed by stub", **match) -> dict:
    return {"match": {"kind": kind, **match}, "verdict": "resume",
            "verified_ops": list(verified_ops), "explanation": explanation}


def deny(kind: str, explanation="denied by stub", **match) -> dict:
    return {"match": {"kind": kind, **match}, "verdict": "terminate",
            "verified_ops": [], "explanation": explanation}


def vop_file(path, permission, scope):
    return {"kind": "file", "path": path, "permission": permission, "scope": scope}


def vop_net(host, port, direction, scope):
    return {"kind": "network", "host": host, "port": port, "direction": direction,
            "scope": scope}


def vop_binary(path, scope):
    return {"kind": "binary", "path": path, "scope": scope}


# -- runtime / protocol drivers --------------------------------------------------

def make_runtime(events=(), stub=(), policy=None, rules=(), clock=None,
                 model=None, nonce="test-nonce") -> SessionRuntime:
    clock = clock or FakeClock()
    if model is None:
        entries = [stub_entry(e) if isinstance(e, dict) else e for e in stub]
        model = ScriptedAuditor(entries, clock=clock)
    return SessionRuntime(
        policy=policy or EnforcementPolicy(),
        file_rules=list(rules),
        backend=ReplayBackend(raws(events)),
        model=model,
        clock=clock,
        nonce=nonce,
    )


class SessionDriver:
    """Client-side driver for a handler bound to an in-memory transport."""

    def __init__(self, runtime: SessionRuntime):
        self.runtime = runtime
        self.transport = MemoryTransport(clock=runtime.clock)
        self.handler = SessionHandler(self.transport, runtime)
        self._rid = 0
        self._read = 0

    def handshake(self) -> dict:
        self.transport.push(client_hello())
        assert self.handler.handshake()
        return self._next_response()

    def request(self, operand: str, data=None, rid=None):
        """Send one request; returns (response, connection_still_alive)."""
        if rid is None:
            self._rid += 1
            rid = self._rid
        else:
            self._rid = max(self._rid, rid if isinstance(rid, int) else self._rid)
        frame = {"request_id": rid, "operand": operand}
        if data is not None:
            frame["data"] = data
        self.transport.push(frame)
        alive = self.handler.step()
        return self._next_response(), alive

    def push_raw(self, frame):
        """Push an arbitrary (possibly malformed) frame and step once."""
        self.transport.push(frame)
        alive = self.handler.step()
        return self._maybe_response(), alive

    def connect_and_trace(self, info_json=None):
        resp, alive = self.request("connect", info_json or agent_info_json())
        assert resp["result"] == "ok" and alive
        resp, alive = self.request("start_passive_tracing")
        assert resp["result"] == "ok" and alive
        return resp

    def notify(self, messages=(), action=None):
        action = action or {"kind": "tool_use", "tool_name": "bash",
                            "tool_input": {"command": "true"}}
        return self.request("send_new_tool_use",
                            {"messages": list(messages), "action": action})

    def get_info(self):
        return self.request("get_enforcement_info")

    def _next_response(self) -> dict:
        assert self._read < len(self.transport.outbox), "no response frame"
        frame = self.transport.outbox[self._read]
        self._read += 1
        return frame

    def _maybe_response(self):
        if self._read < len(self.transport.outbox):
            return self._next_response()
        return None


def traced_driver(events=(), stub=(), policy=None, rules=(), clock=None,
                  model=None) -> SessionDriver:
    driver = SessionDriver(make_runtime(events=events, stub=stub, policy=policy,
                                        rules=rules, clock=clock, model=model))
    driver.handshake()
    driver.connect_and_trace()
    return driver
