"""Rule-based pre-screen: fast pattern matching ahead of any model query.

Rule files are INI with one section per rule:

    [rule:allow-tmp-reads]
    priority = 10
    kind = file_open
    path_glob = /tmp/**
    verdict = safe

Fields: ``priority`` (int; lower fires first), ``kind`` (an event kind),
``verdict`` (safe | unsafe), and optional matchers ``path_glob``,
``argv_glob`` (matched against the originating process's argv, joined by
spaces) and ``target`` (kill events only: any | is_agent_main |
is_ancestor).  The first matching rule in (priority, id) order decides;
no match means the event continues down the pipeline.

Two built-in rules ship at priority 0 for every session: kills aimed at
the agent's main process are unsafe, and so is any write, remove, or
rename touching the agent's dependent files.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from typing import Optional

from warden.globs import GlobError, glob_to_regex
from warden.model import AgentBasicInfo
from warden.tracer.events import EventKind, TraceEvent

VERDICT_SAFE = "safe"
VERDICT_UNSAFE = "unsafe"
VERDICT_UNKNOWN = "unknown"

TARGET_RELATIONS = ("any", "is_agent_main", "is_ancestor")


class RuleError(ValueError):
    pass


@dataclass(frozen=True)
class Rule:
    id: str
    priority: int
    kind: EventKind
    verdict: str
    path_glob: Optional[str] = None
    argv_glob: Optional[str] = None
    target: str = "any"
    # Built-in matchers not expressible in the file schema:
    exact_paths: frozenset = frozenset()
    modes: frozenset = frozenset()

    def __post_init__(self):
        if self.verdict not in (VERDICT_SAFE, VERDICT_UNSAFE):
            raise RuleError(f"rule {self.id}: bad verdict {self.verdict!r}")
        if self.target not in TARGET_RELATIONS:
            raise RuleError(f"rule {self.id}: bad target {self.target!r}")
        if self.target != "any" and self.kind is not EventKind.KILL:
            raise RuleError(f"rule {self.id}: target relation requires kind = kill")

    def matches(self, event: TraceEvent, ctx: "RuleContext") -> bool:
        if event.kind is not self.kind:
            return False
        if self.modes and event.detail.get("mode") not in self.modes:
            return False
        paths = event_paths(event)
        if self.exact_paths and not (self.exact_paths & set(paths)):
            return False
        if self.path_glob is not None:
            regex = glob_to_regex(self.path_glob)
            if not any(regex.match(p) for p in paths):
                return False
        if self.argv_glob is not None:
            argv = ctx.argv_of(event.pid)
            if not glob_to_regex(self.argv_glob).match(" ".join(argv)):
                return False
        if self.kind is EventKind.KILL and self.target != "any":
            target_pid = event.detail.get("target_pid")
            if self.target == "is_agent_main" and target_pid != ctx.agent_main_pid:
                return False
            if self.target == "is_ancestor" and not ctx.is_ancestor(target_pid, event.pid):
                return False
        return True


def event_paths(event: TraceEvent) -> list[str]:
    kind = event.kind
    if kind in (EventKind.FILE_OPEN, EventKind.FILE_REMOVE):
        return [event.detail["path"]]
    if kind is EventKind.FILE_RENAME:
        return [event.detail["src"], event.detail["dst"]]
    if kind is EventKind.EXEC:
        return [event.detail["path"]]
    if kind in (EventKind.NET_CONNECT, EventKind.NET_LISTEN, EventKind.NET_ACCEPT):
        paths = [event.detail["address"]]
        if "domain" in event.detail:
            paths.append(event.detail["domain"])
        return paths
    if kind is EventKind.DNS_RESOLVE:
        return [event.detail["domain"]]
    return []


class RuleContext:
    """Process-table view the matchers consult for argv and pid relations."""

    def __init__(self, agent_main_pid: int, records: dict):
        self.agent_main_pid = agent_main_pid
        self._records = records

    def argv_of(self, pid: int) -> list:
        record = self._records.get(pid)
        return list(record.argv) if record else []

    def is_ancestor(self, candidate: int, pid: int) -> bool:
        seen = set()
        current = self._records.get(pid)
        while current is not None and current.parent_pid is not None \
                and current.pid not in seen:
            seen.add(current.pid)
            if current.parent_pid == candidate:
                return True
            current = self._records.get(current.parent_pid)
        return False


class RuleSet:
    def __init__(self, rules):
        rules = list(rules)
        ids = [r.id for r in rules]
        dupes = {i for i in ids if ids.count(i) > 1}
        if dupes:
            raise RuleError(f"duplicate rule ids: {sorted(dupes)}")
        self.rules = sorted(rules, key=lambda r: (r.priority, r.id))

    def screen(self, event: TraceEvent, ctx: RuleContext) -> tuple[str, Optional[str]]:
        """Returns (verdict, matched rule id); verdict is unknown when nothing matched."""
        for rule in self.rules:
            if rule.matches(event, ctx):
                return rule.verdict, rule.id
        return VERDICT_UNKNOWN, None


def builtin_rules(agent_info: AgentBasicInfo) -> list[Rule]:
    rules = [
        Rule(id="builtin/protect-agent-main", priority=0, kind=EventKind.KILL,
             verdict=VERDICT_UNSAFE, target="is_agent_main"),
    ]
    protected = frozenset(agent_info.dependent_files)
    if protected:
        rules.extend([
            Rule(id="builtin/protect-dependent-files-write", priority=0,
                 kind=EventKind.FILE_OPEN, verdict=VERDICT_UNSAFE,
                 exact_paths=protected, modes=frozenset({"write", "read_write"})),
            Rule(id="builtin/protect-dependent-files-remove", priority=0,
                 kind=EventKind.FILE_REMOVE, verdict=VERDICT_UNSAFE,
                 exact_paths=protected),
            Rule(id="builtin/protect-dependent-files-rename", priority=0,
                 kind=EventKind.FILE_RENAME, verdict=VERDICT_UNSAFE,
                 exact_paths=protected),
        ])
    return rules


_RULE_KEYS = {"priority", "kind", "verdict", "path_glob", "argv_glob", "target"}


def load_rules(path) -> list[Rule]:
    parser = configparser.ConfigParser()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise RuleError(f"cannot read rule file {path}: {exc}")
    except configparser.DuplicateSectionError as exc:
        raise RuleError(f"duplicate rule id at line {exc.lineno}: {exc.section}")
    except configparser.Error as exc:
        raise RuleError(f"bad rule file {path}: {exc}")

    rules = []
    for section in parser.sections():
        if not section.startswith("rule:"):
            raise RuleError(f"unexpected section [{section}]; rule sections are [rule:<id>]")
        rule_id = section[len("rule:"):]
        if not rule_id:
            raise RuleError("empty rule id")
        seen = set(dict(parser.items(section)))
        unknown = seen - _RULE_KEYS
        if unknown:
            raise RuleError(f"rule {rule_id}: unknown keys {sorted(unknown)}")
        try:
            kind = EventKind(parser.get(section, "kind", fallback=""))
        except ValueError:
            raise RuleError(f"rule {rule_id}: bad kind "
                            f"{parser.get(section, 'kind', fallback=None)!r}")
        try:
            priority = parser.getint(section, "priority", fallback=100)
        except ValueError:
            raise RuleError(f"rule {rule_id}: priority must be an integer")
        path_glob = parser.get(section, "path_glob", fallback=None)
        argv_glob = parser.get(section, "argv_glob", fallback=None)
        for glob_text in (path_glob, argv_glob):
            if glob_text is not None:
                try:
                    glob_to_regex(glob_text)
                except GlobError as exc:
                    line_no = _find_line(path, glob_text)
                    raise RuleError(f"rule {rule_id}: line {line_no}: {exc}")
        rules.append(Rule(
            id=rule_id,
            priority=priority,
            kind=kind,
            verdict=parser.get(section, "verdict", fallback=""),
            path_glob=path_glob,
            argv_glob=argv_glob,
            target=parser.get(section, "target", fallback="any"),
        ))
    return rules


def _find_line(path, needle: str) -> int:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for i, line in enumerate(fh, start=1):
                if needle in line:
                    return i
    except OSError:
        pass
    return 0


def canonical_rules_text(rules) -> str:
    lines = []
    for rule in sorted(rules, key=lambda r: (r.priority, r.id)):
        parts = [f"priority={rule.priority}", f"kind={rule.kind.value}",
                 f"verdict={rule.verdict}"]
        if rule.path_glob is not None:
            parts.append(f"path_glob={rule.path_glob}")
        if rule.argv_glob is not None:
            parts.append(f"argv_glob={rule.argv_glob}")
        if rule.target != "any":
            parts.append(f"target={rule.target}")
        lines.append(f"{rule.id}: " + " ".join(parts))
    return "\n".join(lines) + "\n"
