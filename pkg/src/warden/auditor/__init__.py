"""Audit pipeline: rule pre-screen, scoped verification cache, model-based audit."""

from warden.auditor.backends import (
    DisabledAuditor,
    ModelAuditorError,
    RemoteAuditor,
    ScriptedAuditor,
    load_stub_script,
)
from warden.auditor.cache import Scope, SecurityQueryCache, VerifiedOperation
from warden.auditor.chain import ProcessChain, SecurityQuery, extract_dependent_trace
from warden.auditor.pipeline import STAGES, AuditDecision, AuditPipeline, AuditRecord
from warden.auditor.rules import Rule, RuleError, RuleSet, builtin_rules, load_rules
from warden.auditor.summarize import BlockHashSummarizer

__all__ = [
    "AuditDecision",
    "AuditPipeline",
    "AuditRecord",
    "BlockHashSummarizer",
    "DisabledAuditor",
    "ModelAuditorError",
    "ProcessChain",
    "RemoteAuditor",
    "Rule",
    "RuleError",
    "RuleSet",
    "STAGES",
    "Scope",
    "ScriptedAuditor",
    "SecurityQuery",
    "SecurityQueryCache",
    "VerifiedOperation",
    "builtin_rules",
    "extract_dependent_trace",
    "load_rules",
    "load_stub_script",
]
