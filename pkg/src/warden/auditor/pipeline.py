"""The staged audit of one suspended enforcement event.

Stage order is fixed: rule screen; task summarization (only when a new
tool use arrived); once+task cache flush (only when the task changed);
cache lookup; dependency-trace extraction; model query; insertion of the
returned verified operations; recording of the outcome for delivery; and
audit-time accounting against the originating process.  Early exits (rule
or cache hits) skip everything downstream of them, so every observed stage
trace is a prefix-respecting subsequence of that order.

Backend failure is fail-closed: a monitor that cannot audit terminates the
suspended operation rather than waving it through.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

from warden.auditor.backends import AuditDecision, ModelAuditorError
from warden.auditor.cache import SecurityQueryCache
from warden.auditor.chain import ProcessChain, SecurityQuery, extract_dependent_trace
from warden.auditor.rules import VERDICT_SAFE, VERDICT_UNKNOWN, RuleContext, RuleSet
from warden.auditor.summarize import run_summarizer
from warden.model import TaskContext
from warden.tracer.engine import TraceEngine
from warden.tracer.events import TraceEvent

logger = logging.getLogger(__name__)

STAGES = ("rule", "summarize", "flush", "cache", "extract", "model",
          "cache_insert", "record", "accumulate")

FAIL_CLOSED_EXPLANATION = "audit backend unavailable"


@dataclass
class AuditRecord:
    seq: int
    epoch: int
    pid: int
    event: dict
    stage_trace: list
    decision: AuditDecision
    elapsed: float
    cache_hit: bool
    rule_id: Optional[str] = None
    model_queried: bool = False
    task_changed: bool = False
    pruned_ops: list = field(default_factory=list)      # (pid, kind, op tuple)
    chain: Optional[ProcessChain] = None
    consumed_once: list = field(default_factory=list)

    def to_log_json(self) -> dict:
        return {
            "seq": self.seq,
            "epoch": self.epoch,
            "pid": self.pid,
            "event": self.event,
            "stage_trace": list(self.stage_trace),
            "decision": {"verdict": self.decision.verdict,
                         "explanation": self.decision.explanation},
            "elapsed_ms": round(self.elapsed * 1000.0, 3),
            "cache_hit": self.cache_hit,
            "pruned_op_count": len(self.pruned_ops),
        }


class AuditPipeline:
    def __init__(
        self,
        rules: RuleSet,
        cache: SecurityQueryCache,
        summarizer,
        model,
        clock,
        engine: TraceEngine,
        task_ctx: TaskContext,
        log_sink: Optional[Callable[[dict], None]] = None,
    ):
        self.rules = rules
        self.cache = cache
        self.summarizer = summarizer
        self.model = model
        self.clock = clock
        self.engine = engine
        self.task_ctx = task_ctx
        self.log_sink = log_sink
        self.records: list[AuditRecord] = []
        self.last_recorded: Optional[AuditDecision] = None
        self.rule_hits = 0
        self.cache_hits = 0
        self.model_queries = 0
        self.pruned_op_total = 0

    def audit(self, event: TraceEvent, epoch_events: list, msgs: list,
              has_new_tool_use: bool) -> AuditDecision:
        if not event.enforcement:
            raise ValueError("audit() takes enforcement events only")
        start = self.clock.now()
        stages = ["rule"]

        rule_ctx = RuleContext(self.engine.agent_pid, self.engine.records)
        verdict, rule_id = self.rules.screen(event, rule_ctx)
        if verdict != VERDICT_UNKNOWN:
            self.rule_hits += 1
            decision = AuditDecision(
                verdict="resume" if verdict == VERDICT_SAFE else "terminate",
                verified_ops=[],
                explanation=f"rule {rule_id} marked this operation {verdict}",
            )
            return self._finish(event, stages, decision, start,
                                cache_hit=False, rule_id=rule_id)

        task_changed = False
        if has_new_tool_use:
            stages.append("summarize")
            summary, task_changed = run_summarizer(self.summarizer, self.task_ctx, msgs)
            self.task_ctx.summary = summary
            self.task_ctx.changed = task_changed
            if task_changed:
                self.task_ctx.task_epoch += 1

        if task_changed:
            stages.append("flush")
            self.cache.flush_task_and_once()

        stages.append("cache")
        hit = self.cache.lookup_event(event)
        if hit is not None:
            self.cache_hits += 1
            decision = AuditDecision(verdict="resume", verified_ops=[],
                                     explanation=hit.describe())
            return self._finish(event, stages, decision, start, cache_hit=True,
                                task_changed=task_changed,
                                consumed_once=hit.consumed)

        stages.append("extract")
        chain, pruned = extract_dependent_trace(
            event, epoch_events, self.engine.records, self.engine.agent_pid,
            self.engine.policy.max_enforced_process_level, self.cache,
        )
        self.pruned_op_total += len(pruned)
        query = SecurityQuery(task_summary=self.task_ctx.summary,
                              event=event.render(), chain=chain)

        stages.append("model")
        self.model_queries += 1
        try:
            decision = self.model.evaluate(query)
        except ModelAuditorError as exc:
            logger.warning("model auditor failed for event %d: %s", event.seq, exc)
            decision = AuditDecision(verdict="terminate", verified_ops=[],
                                     explanation=FAIL_CLOSED_EXPLANATION)
        else:
            stages.append("cache_insert")
            self.cache.add_all(decision.verified_ops)

        stages.append("record")
        self.last_recorded = decision

        elapsed = self.clock.now() - start
        stages.append("accumulate")
        self.engine.accumulate_audit_time(event.pid, elapsed)

        return self._finish(event, stages, decision, start, cache_hit=False,
                            model_queried=True, task_changed=task_changed,
                            pruned_ops=pruned, chain=chain, elapsed=elapsed)

    def _finish(self, event, stages, decision, start, *, cache_hit,
                rule_id=None, model_queried=False, task_changed=False,
                pruned_ops=None, chain=None, consumed_once=None, elapsed=None):
        record = AuditRecord(
            seq=event.seq,
            epoch=event.epoch,
            pid=event.pid,
            event=event.render(),
            stage_trace=list(stages),
            decision=decision,
            elapsed=elapsed if elapsed is not None else self.clock.now() - start,
            cache_hit=cache_hit,
            rule_id=rule_id,
            model_queried=model_queried,
            task_changed=task_changed,
            pruned_ops=list(pruned_ops or []),
            chain=chain,
            consumed_once=list(consumed_once or []),
        )
        self.records.append(record)
        if self.log_sink is not None:
            self.log_sink(record.to_log_json())
        return decision
