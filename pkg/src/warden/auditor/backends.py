"""Model-auditor backends behind one interface.

``ScriptedAuditor`` is the deterministic default: it evaluates a JSONL
allowance script, one object per line:

    {"match": {"kind": "file_open", "path": "/var/log/**", "mode": "read"},
     "verdict": "resume",
     "verified_ops": [{"kind": "file", "path": "/var/log/app.log",
                       "permission": "read", "scope": "task"}],
     "explanation": "log inspection fits the task"}

Match keys: ``kind`` (required), plus optional ``path`` (glob over file,
executable, or rename paths), ``host`` (glob over address or domain),
``port``, ``mode``, ``direction``.  First matching entry wins; with no
match the stub denies (terminate, "no allowance").  An optional
``elapsed_ms`` advances an injected fake clock, making audit-latency
scenarios replayable.

``RemoteAuditor`` renders a versioned prompt template and POSTs it as JSON
to a configured endpoint; credentials come from an environment variable,
never a config file.  Timeouts and unparseable responses raise
``ModelAuditorError``, which the pipeline converts into a fail-closed
termination.
"""

from __future__ import annotations

import json
import os
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from importlib import resources

from warden.auditor.cache import VerifiedOperation
from warden.auditor.chain import SecurityQuery
from warden.globs import GlobError, glob_to_regex

DEFAULT_REMOTE_TIMEOUT = 30.0


class ModelAuditorError(Exception):
    """Backend failed or returned garbage; callers must fail closed."""


class StubScriptError(ValueError):
    pass


@dataclass
class AuditDecision:
    verdict: str                                  # resume | terminate
    verified_ops: list = field(default_factory=list)
    explanation: str = ""

    def __post_init__(self):
        if self.verdict not in ("resume", "terminate"):
            raise ValueError(f"bad verdict {self.verdict!r}")
        if not self.explanation:
            raise ValueError("decision explanation must be non-empty")


_MATCH_KEYS = {"kind", "path", "host", "port", "mode", "direction"}


@dataclass
class StubEntry:
    match: dict
    verdict: str
    verified_ops: list
    explanation: str
    elapsed_ms: float = 0.0

    def matches(self, event: dict) -> bool:
        if event["kind"] != self.match["kind"]:
            return False
        detail = event["detail"]
        pattern = self.match.get("path")
        if pattern is not None:
            paths = _event_path_candidates(event["kind"], detail)
            regex = glob_to_regex(pattern)
            if not any(regex.match(p) for p in paths):
                return False
        host = self.match.get("host")
        if host is not None:
            candidates = [detail.get("address", "")]
            if "domain" in detail:
                candidates.append(detail["domain"])
            regex = glob_to_regex(host)
            if not any(regex.match(c) for c in candidates if c):
                return False
        port = self.match.get("port")
        if port is not None and detail.get("port") != port:
            return False
        mode = self.match.get("mode")
        if mode is not None and detail.get("mode") != mode:
            return False
        direction = self.match.get("direction")
        if direction is not None:
            actual = "outbound" if event["kind"] == "net_connect" else "inbound"
            if actual != direction:
                return False
        return True


def _event_path_candidates(kind: str, detail: dict) -> list:
    if kind == "file_rename":
        return [detail.get("src", ""), detail.get("dst", "")]
    return [detail.get("path", "")]


def load_stub_script(path) -> list[StubEntry]:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise StubScriptError(f"stub script line {line_no}: {exc}")
            entries.append(_parse_entry(obj, line_no))
    return entries


def _parse_entry(obj, line_no: int) -> StubEntry:
    where = f"stub script line {line_no}"
    if not isinstance(obj, dict):
        raise StubScriptError(f"{where}: expected an object")
    match = obj.get("match")
    if not isinstance(match, dict) or "kind" not in match:
        raise StubScriptError(f"{where}: match must be an object with a kind")
    unknown = set(match) - _MATCH_KEYS
    if unknown:
        raise StubScriptError(f"{where}: unknown match keys {sorted(unknown)}")
    for key in ("path", "host"):
        if key in match:
            try:
                glob_to_regex(match[key])
            except GlobError as exc:
                raise StubScriptError(f"{where}: {exc}")
    verdict = obj.get("verdict")
    if verdict not in ("resume", "terminate"):
        raise StubScriptError(f"{where}: bad verdict {verdict!r}")
    try:
        ops = [VerifiedOperation.from_json(op) for op in obj.get("verified_ops", [])]
    except ValueError as exc:
        raise StubScriptError(f"{where}: {exc}")
    elapsed_ms = obj.get("elapsed_ms", 0.0)
    if not isinstance(elapsed_ms, (int, float)) or isinstance(elapsed_ms, bool) or elapsed_ms < 0:
        raise StubScriptError(f"{where}: bad elapsed_ms {elapsed_ms!r}")
    explanation = obj.get("explanation") or f"stub allowance for {match['kind']}"
    return StubEntry(match=match, verdict=verdict, verified_ops=ops,
                     explanation=explanation, elapsed_ms=float(elapsed_ms))


class ScriptedAuditor:
    """Deterministic stand-in for a model auditor, driven by an allowance script."""

    def __init__(self, entries, clock=None):
        self.entries = list(entries)
        self._clock = clock
        self.query_log: list[dict] = []

    @classmethod
    def from_file(cls, path, clock=None) -> "ScriptedAuditor":
        return cls(load_stub_script(path), clock=clock)

    def evaluate(self, query: SecurityQuery) -> AuditDecision:
        self.query_log.append(query.event)
        for entry in self.entries:
            if entry.matches(query.event):
                if entry.elapsed_ms and self._clock is not None \
                        and hasattr(self._clock, "advance"):
                    self._clock.advance(entry.elapsed_ms / 1000.0)
                return AuditDecision(verdict=entry.verdict,
                                     verified_ops=list(entry.verified_ops),
                                     explanation=entry.explanation)
        return AuditDecision(verdict="terminate", verified_ops=[],
                             explanation="no allowance")


class DisabledAuditor:
    """Configured-off backend; every query errors so the pipeline fails closed."""

    def evaluate(self, query: SecurityQuery) -> AuditDecision:
        raise ModelAuditorError("model auditor disabled")


def load_prompt_template() -> str:
    return resources.files("warden.auditor").joinpath("prompt_v1.txt").read_text("utf-8")


class RemoteAuditor:
    def __init__(self, endpoint: str, api_key_env: str = "WARDEN_AUDITOR_KEY",
                 timeout: float = DEFAULT_REMOTE_TIMEOUT):
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.template = load_prompt_template()

    def build_prompt(self, query: SecurityQuery) -> str:
        return self.template.format(
            task_summary=query.task_summary or "(no summary yet)",
            event=json.dumps(query.event, sort_keys=True, indent=2),
            trace=json.dumps(query.chain.to_json(), sort_keys=True, indent=2),
        )

    def evaluate(self, query: SecurityQuery) -> AuditDecision:
        body = json.dumps({"prompt": self.build_prompt(query)}).encode("utf-8")
        try:
            raw = self._post(body)
        except (urllib.error.URLError, OSError) as exc:
            raise ModelAuditorError(f"remote auditor unreachable: {exc}") from exc
        return self.parse_response(raw)

    def _post(self, body: bytes) -> bytes:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        request = urllib.request.Request(self.endpoint, data=body, headers=headers)
        with urllib.request.urlopen(request, timeout=self.timeout) as response:
            return response.read()

    @staticmethod
    def parse_response(raw: bytes) -> AuditDecision:
        try:
            obj = json.loads(raw.decode("utf-8"))
            if not isinstance(obj, dict):
                raise ValueError("response must be a JSON object")
            ops = [VerifiedOperation.from_json(op) for op in obj.get("verified_ops", [])]
            return AuditDecision(verdict=obj["verdict"], verified_ops=ops,
                                 explanation=obj["explanation"])
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError,
                ValueError) as exc:
            raise ModelAuditorError(f"unparseable auditor response: {exc}") from exc
