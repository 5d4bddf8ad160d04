"""Enforcement policy: which probes suspend-and-audit, and for whom.

Policy files are INI, one boolean per probe kind plus the level and budget
thresholds:

    [policy]
    max_enforced_process_level = 4
    audit_time_budget_seconds = 110
    file_open_enforce_modes = write, read_write

    [enforce]
    exec = true
    kill = true
    ...

The ``file_open`` probe only escalates opens whose mode is listed in
``file_open_enforce_modes``; other opens are observed.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from typing import Optional

from warden.tracer.events import FILE_MODES, EventKind

DEFAULT_ENFORCED = frozenset({
    EventKind.EXEC,
    EventKind.KILL,
    EventKind.FILE_OPEN,
    EventKind.FILE_REMOVE,
    EventKind.FILE_RENAME,
    EventKind.NET_CONNECT,
    EventKind.NET_LISTEN,
})

DEFAULT_FILE_OPEN_MODES = frozenset({"write", "read_write"})

DEFAULT_MAX_ENFORCED_LEVEL = 4
DEFAULT_AUDIT_TIME_BUDGET = 110.0


class PolicyError(ValueError):
    pass


@dataclass(frozen=True)
class EnforcementPolicy:
    enforce: frozenset = DEFAULT_ENFORCED
    file_open_modes: frozenset = DEFAULT_FILE_OPEN_MODES
    max_enforced_process_level: int = DEFAULT_MAX_ENFORCED_LEVEL
    audit_time_budget: float = DEFAULT_AUDIT_TIME_BUDGET
    rule_file: Optional[str] = None

    def __post_init__(self):
        if self.max_enforced_process_level < 1:
            raise PolicyError("max_enforced_process_level must be >= 1")
        if self.audit_time_budget <= 0:
            raise PolicyError("audit_time_budget must be positive")

    def probe_enforces(self, kind: EventKind, detail: dict) -> bool:
        """Whether this probe demands suspension for an event of this shape."""
        if kind not in self.enforce:
            return False
        if kind is EventKind.FILE_OPEN:
            return detail.get("mode") in self.file_open_modes
        return True


def load_policy(path) -> EnforcementPolicy:
    parser = configparser.ConfigParser()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise PolicyError(f"cannot read policy file {path}: {exc}")
    except configparser.Error as exc:
        raise PolicyError(f"bad policy file {path}: {exc}")

    for section in parser.sections():
        if section not in ("policy", "enforce"):
            raise PolicyError(f"unknown policy section [{section}]")

    enforced = set(DEFAULT_ENFORCED)
    if parser.has_section("enforce"):
        for key, _ in parser.items("enforce"):
            try:
                kind = EventKind(key)
            except ValueError:
                raise PolicyError(f"unknown probe {key!r} in [enforce]")
            try:
                enabled = parser.getboolean("enforce", key)
            except ValueError:
                raise PolicyError(f"probe {key!r} needs a boolean value")
            if enabled:
                enforced.add(kind)
            else:
                enforced.discard(kind)

    level = DEFAULT_MAX_ENFORCED_LEVEL
    budget = DEFAULT_AUDIT_TIME_BUDGET
    modes = DEFAULT_FILE_OPEN_MODES
    rule_file = None
    if parser.has_section("policy"):
        known = {"max_enforced_process_level", "audit_time_budget_seconds",
                 "file_open_enforce_modes", "rule_file"}
        for key, _ in parser.items("policy"):
            if key not in known:
                raise PolicyError(f"unknown policy key {key!r}")
        try:
            level = parser.getint("policy", "max_enforced_process_level", fallback=level)
            budget = parser.getfloat("policy", "audit_time_budget_seconds", fallback=budget)
        except ValueError as exc:
            raise PolicyError(f"bad numeric policy value: {exc}")
        raw_modes = parser.get("policy", "file_open_enforce_modes", fallback=None)
        if raw_modes is not None:
            modes = frozenset(m.strip() for m in raw_modes.split(",") if m.strip())
            bad = modes - frozenset(FILE_MODES)
            if bad:
                raise PolicyError(f"unknown file_open modes: {sorted(bad)}")
        rule_file = parser.get("policy", "rule_file", fallback=None)

    try:
        return EnforcementPolicy(
            enforce=frozenset(enforced),
            file_open_modes=modes,
            max_enforced_process_level=level,
            audit_time_budget=budget,
            rule_file=rule_file,
        )
    except PolicyError as exc:
        raise PolicyError(f"{path}: {exc}")


def canonical_policy_text(policy: EnforcementPolicy) -> str:
    """Stable one-line-per-setting rendering used for startup logging and `check`."""
    lines = [
        f"max_enforced_process_level = {policy.max_enforced_process_level}",
        f"audit_time_budget_seconds = {policy.audit_time_budget:g}",
        "file_open_enforce_modes = " + ", ".join(sorted(policy.file_open_modes)),
    ]
    if policy.rule_file:
        lines.append(f"rule_file = {policy.rule_file}")
    for kind in EventKind:
        lines.append(f"enforce.{kind.value} = {str(kind in policy.enforce).lower()}")
    return "\n".join(lines) + "\n"
