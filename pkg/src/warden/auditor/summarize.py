"""Task-context summarization hook with a deterministic default.

The default summarizer folds newly arrived user messages into the running
summary (truncated to 2000 characters) and reports a task change whenever
the first message of the latest contiguous user block differs from the one
seen at the previous summarization; new tool results alone never flip it.
A real model-backed summarizer can be dropped in behind the same call.
"""

from __future__ import annotations

import hashlib
import logging
from typing import Iterable, Optional

from warden.model import Message, Role, TaskContext

logger = logging.getLogger(__name__)

SUMMARY_MAX_LEN = 2000


class BlockHashSummarizer:
    def __init__(self):
        self._last_task_hash: Optional[str] = None

    def summarize(self, ctx: TaskContext, msgs: Iterable[Message]) -> tuple[str, bool]:
        new_user_text = "\n".join(m.content for m in msgs if m.role is Role.USER)
        if new_user_text:
            summary = ctx.summary + ("\n" if ctx.summary else "") + new_user_text
        else:
            summary = ctx.summary
        summary = summary[:SUMMARY_MAX_LEN]

        block_hash = self._latest_user_block_hash(ctx.messages)
        task_changed = block_hash is not None and block_hash != self._last_task_hash
        if block_hash is not None:
            self._last_task_hash = block_hash
        return summary, task_changed

    @staticmethod
    def _latest_user_block_hash(messages) -> Optional[str]:
        block_first = None
        in_block = False
        for message in messages:
            if message.role is Role.USER:
                if not in_block:
                    block_first = message
                in_block = True
            else:
                in_block = False
        if block_first is None:
            return None
        return hashlib.sha256(block_first.content.encode("utf-8")).hexdigest()


def run_summarizer(summarizer, ctx: TaskContext, msgs) -> tuple[str, bool]:
    """Invoke a summarizer defensively: on failure keep the prior summary."""
    try:
        return summarizer.summarize(ctx, msgs)
    except Exception as exc:  # noqa: BLE001 - pluggable backend, degrade instead of failing
        logger.warning("summarizer failed (%s); keeping prior summary", exc)
        return ctx.summary, False
