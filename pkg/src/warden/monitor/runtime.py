"""Per-session wiring of protocol state, tracer, and audit pipeline.

Each connection gets an isolated session: its own process table, caches,
task context, and audit log.  Requests within a session are handled in
arrival order; the auditor's decisions come back through
``route_decision``, which applies the enforcement action and, on a
termination, parks the outcome for the client to pull via
get-enforcement-info (delivered at most once, last write wins).
"""

from __future__ import annotations

import json
import logging
import os
import secrets
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from warden.a2m.protocol import ServerStatus
from warden.auditor.backends import (
    AuditDecision,
    DisabledAuditor,
    RemoteAuditor,
    ScriptedAuditor,
)
from warden.auditor.cache import SecurityQueryCache
from warden.auditor.pipeline import AuditPipeline
from warden.auditor.rules import RuleSet, builtin_rules, load_rules
from warden.auditor.summarize import BlockHashSummarizer
from warden.clock import FakeClock, SystemClock
from warden.model import Action, AgentBasicInfo, EnforcementOutcome, Message, TaskContext, Verdict
from warden.monitor.config import MonitorConfig
from warden.tracer.engine import Classification, TraceEngine
from warden.tracer.policy import EnforcementPolicy, load_policy
from warden.tracer.replay import EnforceStateError, OsBackend, ReplayBackend

logger = logging.getLogger(__name__)


@dataclass
class Session:
    nonce: str
    agent_info: Optional[AgentBasicInfo] = None
    status: ServerStatus = ServerStatus.FRESH
    task_ctx: TaskContext = field(default_factory=TaskContext)
    current_epoch: int = 0
    last_enforcement: Optional[tuple[EnforcementOutcome, int]] = None
    policy: Optional[EnforcementPolicy] = None


class SessionRuntime:
    def __init__(self, policy: EnforcementPolicy, file_rules: list, backend,
                 model, clock, nonce: str, log_path: Optional[str] = None):
        self.policy = policy
        self.file_rules = list(file_rules)
        self.backend = backend
        self.model = model
        self.clock = clock
        self.session = Session(nonce=nonce, policy=policy)
        self.engine: Optional[TraceEngine] = None
        self.pipeline: Optional[AuditPipeline] = None
        self.cache = SecurityQueryCache()
        self.summarizer = BlockHashSummarizer()
        self.decisions: list[dict] = []
        self.actions: list[tuple[int, Action]] = []
        self.closed = False
        self.log_only = False
        self._pending_msgs: list[Message] = []
        self._pending_new_tool_use = False
        self._lock = threading.Lock()
        self._log_path = log_path
        self._log_fh = None

    # -- protocol-facing surface (called by the session handler) -------------

    @property
    def nonce(self) -> str:
        return self.session.nonce

    @property
    def status(self) -> ServerStatus:
        return self.session.status

    @status.setter
    def status(self, value: ServerStatus) -> None:
        self.session.status = value

    def on_connect(self, info: AgentBasicInfo) -> None:
        self.session.agent_info = AgentBasicInfo(
            agent_process_id=info.agent_process_id,
            dependent_files=info.dependent_files,
            agent_name=info.agent_name,
            session_nonce=self.session.nonce,
        )

    def on_start_tracing(self) -> None:
        info = self.session.agent_info
        self.engine = TraceEngine(info.agent_process_id, self.policy, self.backend)
        rules = RuleSet(builtin_rules(info) + self.file_rules)
        if self._log_path:
            os.makedirs(os.path.dirname(self._log_path), exist_ok=True)
            self._log_fh = open(self._log_path, "a", encoding="utf-8")
        self.pipeline = AuditPipeline(
            rules=rules,
            cache=self.cache,
            summarizer=self.summarizer,
            model=self.model,
            clock=self.clock,
            engine=self.engine,
            task_ctx=self.session.task_ctx,
            log_sink=self._write_log_record if self._log_fh else None,
        )

    def on_new_tool_use(self, messages: list, action: Action) -> None:
        self.session.task_ctx.extend(messages)
        self._pending_msgs.extend(messages)
        self._pending_new_tool_use = True
        epoch = self.engine.open_tool_epoch()
        self.session.current_epoch = epoch
        self.actions.append((epoch, action))

    def play_current_epoch(self) -> None:
        """Feed the current epoch's trace events through ingest and audit."""
        engine = self.engine
        for raw in self.backend.events_for_epoch(engine.current_epoch):
            event, classification = engine.ingest(raw)
            if classification is Classification.ENFORCEMENT:
                decision = self.pipeline.audit(
                    event, engine.epoch_events(event.epoch),
                    list(self._pending_msgs), self._pending_new_tool_use,
                )
                # Messages stay pending until a summarize stage actually
                # folded them in; a rule short-circuit must not lose them.
                if "summarize" in self.pipeline.records[-1].stage_trace:
                    self._pending_msgs.clear()
                    self._pending_new_tool_use = False
                self.route_decision(event.pid, decision, event_seq=event.seq,
                                    epoch=event.epoch)

    def take_enforcement_outcome(self) -> Optional[EnforcementOutcome]:
        with self._lock:
            slot = self.session.last_enforcement
            if slot is None:
                return None
            outcome, epoch = slot
            self.session.last_enforcement = None
            if epoch != self.session.current_epoch:
                return None  # stale: recorded under an earlier tool epoch, dropped
            return outcome

    def on_close(self, log_only: bool) -> None:
        self.closed = True
        self.log_only = log_only
        if self._log_fh is not None:
            self._log_fh.close()
            self._log_fh = None

    # -- decision routing ------------------------------------------------------

    def route_decision(self, pid: int, decision: AuditDecision, *,
                       event_seq: int, epoch: int) -> None:
        self.decisions.append({"seq": event_seq, "pid": pid,
                               "verdict": decision.verdict, "epoch": epoch})
        try:
            self.engine.enforce(pid, decision.verdict)
        except EnforceStateError as exc:
            logger.warning("dropping decision for pid %d: %s", pid, exc)
            return
        if decision.verdict == Verdict.TERMINATE.value:
            outcome = EnforcementOutcome.terminated(decision.explanation)
            with self._lock:
                self.session.last_enforcement = (outcome, epoch)

    # -- helpers ---------------------------------------------------------------

    def _write_log_record(self, record: dict) -> None:
        self._log_fh.write(json.dumps(record, sort_keys=True) + "\n")
        self._log_fh.flush()

    def suspended_pids(self) -> list:
        return self.backend.suspended_pids()


class MonitorCore:
    """Shared configuration that stamps out one isolated runtime per session."""

    def __init__(self, policy: EnforcementPolicy, file_rules: list,
                 backend_factory: Callable, model_factory: Callable,
                 clock_factory: Callable = SystemClock,
                 log_dir: Optional[str] = None,
                 nonce_factory: Optional[Callable[[], str]] = None):
        self.policy = policy
        self.file_rules = file_rules
        self.backend_factory = backend_factory
        self.model_factory = model_factory
        self.clock_factory = clock_factory
        self.log_dir = log_dir
        self.nonce_factory = nonce_factory or (lambda: secrets.token_hex(8))

    @classmethod
    def from_config(cls, config: MonitorConfig, deterministic: bool = False) -> "MonitorCore":
        policy = load_policy(config.policy_file) if config.policy_file \
            else EnforcementPolicy()
        rule_file = config.rule_file or policy.rule_file
        file_rules = load_rules(rule_file) if rule_file else []

        if config.trace_source_kind == "os":
            backend_factory = OsBackend
        else:
            trace_path = config.trace_source_path
            backend_factory = lambda: ReplayBackend.from_file(trace_path)  # noqa: E731

        clock_factory = FakeClock if deterministic else SystemClock

        def model_factory(clock):
            if config.auditor_kind == "disabled":
                return DisabledAuditor()
            if config.auditor_kind == "remote":
                return RemoteAuditor(config.auditor_endpoint,
                                     api_key_env=config.auditor_api_key_env,
                                     timeout=config.auditor_timeout)
            return ScriptedAuditor.from_file(config.auditor_script, clock=clock)

        return cls(policy=policy, file_rules=file_rules,
                   backend_factory=backend_factory, model_factory=model_factory,
                   clock_factory=clock_factory, log_dir=config.log_dir)

    def new_runtime(self) -> SessionRuntime:
        nonce = self.nonce_factory()
        clock = self.clock_factory()
        log_path = None
        if self.log_dir:
            stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime())
            log_path = os.path.join(self.log_dir, f"{nonce}-{stamp}.jsonl")
        return SessionRuntime(
            policy=self.policy,
            file_rules=self.file_rules,
            backend=self.backend_factory(),
            model=self.model_factory(clock),
            clock=clock,
            nonce=nonce,
            log_path=log_path,
        )
