"""Runtime security monitor for tool-executing agents.

An instrumented agent reports its task context over the A2M protocol; the
monitor traces OS-level side effects of tool use, suspends sensitive
operations at enforcement points, audits them against the task context,
and resumes or terminates the offending process.
"""

__version__ = "0.1.0"

from warden.model import (
    Action,
    AgentBasicInfo,
    EnforcementOutcome,
    Message,
    TaskContext,
    apply_sec_ctx,
    is_safe_action,
)

__all__ = [
    "Action",
    "AgentBasicInfo",
    "EnforcementOutcome",
    "Message",
    "TaskContext",
    "apply_sec_ctx",
    "is_safe_action",
    "__version__",
]
