"""Path globs for rules and stub-auditor allowances.

Semantics (full-string match):
  *   any run of characters within one path segment (never crosses ``/``)
  **  any run of characters, including ``/``
  ?   one character within a segment
All other characters match literally.
"""

from __future__ import annotations

import re


class GlobError(ValueError):
    pass


def glob_to_regex(pattern: str) -> re.Pattern:
    if not pattern:
        raise GlobError("empty glob pattern")
    if "***" in pattern:
        raise GlobError(f"ambiguous wildcard run in {pattern!r}")
    out = []
    i = 0
    while i < len(pattern):
        ch = pattern[i]
        if ch == "*":
            if pattern[i:i + 2] == "**":
                out.append(".*")
                i += 2
            else:
                out.append("[^/]*")
                i += 1
        elif ch == "?":
            out.append("[^/]")
            i += 1
        else:
            out.append(re.escape(ch))
            i += 1
    return re.compile("".join(out) + r"\Z")


def glob_match(pattern: str, value: str) -> bool:
    return glob_to_regex(pattern).match(value) is not None
