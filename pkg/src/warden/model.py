"""Shared domain types and the framework's safety contract.

The contract the rest of the package is checked against:

* an action is safe iff every sensitive operation it produced is safe;
* the framework never rewrites an outgoing action; the only task-context
  mutation it performs is appending a security alert after a violation;
* effects committed before a termination are never rolled back.
"""

from __future__ import annotations

import posixpath
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Optional

ALERT_PREFIX = "SECURITY ALERT:"


class Role(str, Enum):
    USER = "user"
    AGENT = "agent"
    TOOL_RESULT = "tool_result"


class Verdict(str, Enum):
    RESUME = "resume"
    TERMINATE = "terminate"


@dataclass(frozen=True)
class AgentBasicInfo:
    """Identifying information the agent reports on connect."""

    agent_process_id: int
    dependent_files: tuple[str, ...] = ()
    agent_name: str = ""
    session_nonce: str = ""

    def __post_init__(self):
        if self.agent_process_id <= 0:
            raise ValueError("agent_process_id must be positive")
        for path in self.dependent_files:
            if not posixpath.isabs(path):
                raise ValueError(f"dependent file path not absolute: {path!r}")

    @classmethod
    def from_json(cls, data: dict) -> "AgentBasicInfo":
        if not isinstance(data, dict):
            raise ValueError("agent info must be an object")
        pid = data.get("agent_process_id")
        if not isinstance(pid, int) or isinstance(pid, bool):
            raise ValueError("agent_process_id must be an integer")
        files = data.get("dependent_files", [])
        if not isinstance(files, list) or not all(isinstance(p, str) for p in files):
            raise ValueError("dependent_files must be a list of paths")
        return cls(
            agent_process_id=pid,
            dependent_files=tuple(files),
            agent_name=str(data.get("agent_name", "")),
            session_nonce=str(data.get("session_nonce", "")),
        )


@dataclass(frozen=True)
class Message:
    role: Role
    content: str
    seq: int
    is_tool_error: bool = False

    @classmethod
    def from_json(cls, data: dict) -> "Message":
        if not isinstance(data, dict):
            raise ValueError("message must be an object")
        try:
            role = Role(data["role"])
        except (KeyError, ValueError):
            raise ValueError(f"bad message role: {data.get('role')!r}")
        seq = data.get("seq")
        if not isinstance(seq, int) or isinstance(seq, bool):
            raise ValueError("message seq must be an integer")
        content = data.get("content", "")
        if not isinstance(content, str):
            raise ValueError("message content must be a string")
        return cls(role=role, content=content, seq=seq,
                   is_tool_error=bool(data.get("is_tool_error", False)))

    def to_json(self) -> dict:
        return {
            "role": self.role.value,
            "content": self.content,
            "seq": self.seq,
            "is_tool_error": self.is_tool_error,
        }


@dataclass
class TaskContext:
    """Chat history plus the incrementally maintained task summary."""

    messages: list[Message] = field(default_factory=list)
    summary: str = ""
    task_epoch: int = 0
    changed: bool = False

    def append(self, message: Message) -> None:
        if self.messages and message.seq <= self.messages[-1].seq:
            raise ValueError(
                f"message seq {message.seq} not increasing "
                f"(last was {self.messages[-1].seq})"
            )
        self.messages.append(message)

    def extend(self, messages: Iterable[Message]) -> None:
        for m in messages:
            self.append(m)

    def next_seq(self) -> int:
        return self.messages[-1].seq + 1 if self.messages else 1


class ActionKind(str, Enum):
    TOOL_USE = "tool_use"
    PLAIN_MESSAGE = "plain_message"


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    tool_name: str = ""
    tool_input: Any = None

    def __post_init__(self):
        if self.kind is ActionKind.TOOL_USE and not self.tool_name:
            raise ValueError("tool_use action requires a tool_name")

    @classmethod
    def from_json(cls, data: dict) -> "Action":
        if not isinstance(data, dict):
            raise ValueError("action must be an object")
        try:
            kind = ActionKind(data["kind"])
        except (KeyError, ValueError):
            raise ValueError(f"bad action kind: {data.get('kind')!r}")
        return cls(kind=kind, tool_name=str(data.get("tool_name", "")),
                   tool_input=data.get("tool_input"))

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "tool_name": self.tool_name,
                "tool_input": self.tool_input}


@dataclass(frozen=True)
class EnforcementOutcome:
    """Verdict routed back to the agent client for one audited operation."""

    verdict: Verdict
    explanation: str
    alert_text: Optional[str] = None

    def __post_init__(self):
        if (self.verdict is Verdict.TERMINATE) != (self.alert_text is not None):
            raise ValueError("alert_text present iff verdict is terminate")

    @classmethod
    def terminated(cls, explanation: str) -> "EnforcementOutcome":
        return cls(verdict=Verdict.TERMINATE, explanation=explanation,
                   alert_text=f"{ALERT_PREFIX} {explanation}")

    def to_json(self) -> dict:
        payload = {"verdict": self.verdict.value, "explanation": self.explanation}
        if self.alert_text is not None:
            payload["alert_text"] = self.alert_text
        return payload


def is_safe_action(ops: Iterable[bool]) -> bool:
    """An action is safe iff every per-operation verdict is safe.

    The empty list is vacuously safe: an action that produced no sensitive
    operations is benign by definition.
    """
    return all(ops)


def apply_sec_ctx(action_verdict: bool, ctx: TaskContext, alert: str) -> TaskContext:
    """Append a security alert to the context when the action was unsafe.

    Safe actions leave the context untouched (the same object is returned);
    unsafe ones get the alert appended as an error-flagged tool result.
    One delivered verdict yields at most one appended alert.
    """
    if action_verdict:
        return ctx
    if not alert:
        raise ValueError("alert text required for an unsafe action")
    updated = TaskContext(
        messages=list(ctx.messages),
        summary=ctx.summary,
        task_epoch=ctx.task_epoch,
        changed=ctx.changed,
    )
    updated.append(Message(role=Role.TOOL_RESULT, content=alert,
                           seq=updated.next_seq(), is_tool_error=True))
    return updated
