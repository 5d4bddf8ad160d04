import pytest

from warden.globs import GlobError, glob_match
from warden.auditor.rules import (
    Rule,
    RuleContext,
    RuleError,
    RuleSet,
    builtin_rules,
    load_rules,
)
from warden.tracer.engine import TraceEngine
from warden.tracer.events import EventKind
from warden.tracer.policy import EnforcementPolicy
from warden.tracer.replay import ReplayBackend

from helpers import (
    AGENT_PID,
    agent_info,
    exec_,
    file_open,
    file_remove,
    file_rename,
    fork,
    kill,
    raw,
)


def engine_with_chain():
    engine = TraceEngine(AGENT_PID, EnforcementPolicy(enforce=frozenset()),
                         ReplayBackend([]))
    engine.ingest(raw(fork(AGENT_PID, 201)))
    engine.ingest(raw(exec_(201, "/bin/bash", ["bash", "-c", "cat /tmp/server.log"])))
    engine.ingest(raw(fork(201, 202)))
    engine.ingest(raw(exec_(202, "/usr/bin/cat", ["cat", "/tmp/server.log"])))
    return engine


def ctx_for(engine):
    return RuleContext(AGENT_PID, engine.records)


def event_of(engine, event_dict):
    event, _ = engine.ingest(raw(event_dict))
    return event


class TestGlobs:
    @pytest.mark.parametrize("pattern,value,expected", [
        ("/tmp/*", "/tmp/x.log", True),
        ("/tmp/*", "/tmp/sub/x.log", False),
        ("/tmp/**", "/tmp/sub/x.log", True),
        ("/var/log/**", "/var/log/app/a.log", True),
        ("/var/log/**", "/var/log", False),
        ("*.py", "setup.py", True),
        ("?at", "cat", True),
        ("?at", "c/at", False),
        ("/srv/agent/config.yaml", "/srv/agent/config.yaml", True),
    ])
    def test_match_semantics(self, pattern, value, expected):
        assert glob_match(pattern, value) is expected

    def test_triple_star_is_a_syntax_error(self):
        with pytest.raises(GlobError):
            glob_match("/tmp/***", "/tmp/x")

    def test_empty_pattern_is_a_syntax_error(self):
        with pytest.raises(GlobError):
            glob_match("", "/tmp/x")


class TestBuiltinRules:
    def test_kill_of_agent_main_is_unsafe(self):
        engine = engine_with_chain()
        rules = RuleSet(builtin_rules(agent_info()))
        verdict, rule_id = rules.screen(event_of(engine, kill(202, AGENT_PID)),
                                        ctx_for(engine))
        assert verdict == "unsafe"
        assert rule_id == "builtin/protect-agent-main"

    def test_kill_of_sibling_not_matched_by_builtin(self):
        engine = engine_with_chain()
        rules = RuleSet(builtin_rules(agent_info()))
        verdict, _ = rules.screen(event_of(engine, kill(202, 201)), ctx_for(engine))
        assert verdict == "unknown"

    @pytest.mark.parametrize("event_dict", [
        file_open(202, "/srv/agent/config.yaml", "write"),
        file_open(202, "/srv/agent/config.yaml", "read_write"),
        file_remove(202, "/srv/agent/agent.db"),
        file_rename(202, "/srv/agent/config.yaml", "/tmp/stolen.yaml"),
        file_rename(202, "/tmp/x", "/srv/agent/config.yaml"),
    ])
    def test_dependent_file_tampering_is_unsafe(self, event_dict):
        engine = engine_with_chain()
        rules = RuleSet(builtin_rules(agent_info()))
        verdict, rule_id = rules.screen(event_of(engine, event_dict), ctx_for(engine))
        assert verdict == "unsafe"
        assert rule_id.startswith("builtin/protect-dependent-files")

    def test_dependent_file_read_is_not_matched(self):
        engine = engine_with_chain()
        rules = RuleSet(builtin_rules(agent_info()))
        verdict, _ = rules.screen(
            event_of(engine, file_open(202, "/srv/agent/config.yaml", "read")),
            ctx_for(engine))
        assert verdict == "unknown"


class TestScreening:
    def test_no_match_is_unknown(self):
        engine = engine_with_chain()
        rules = RuleSet(builtin_rules(agent_info()))
        verdict, rule_id = rules.screen(
            event_of(engine, file_open(202, "/etc/hostname", "read")), ctx_for(engine))
        assert (verdict, rule_id) == ("unknown", None)

    def test_priority_order_first_match_decides(self):
        engine = engine_with_chain()
        rules = RuleSet([
            Rule(id="a-safe", priority=1, kind=EventKind.FILE_OPEN,
                 verdict="safe", path_glob="/tmp/**"),
            Rule(id="b-unsafe", priority=2, kind=EventKind.FILE_OPEN,
                 verdict="unsafe", path_glob="/tmp/**"),
        ])
        verdict, rule_id = rules.screen(
            event_of(engine, file_open(202, "/tmp/x", "read")), ctx_for(engine))
        assert (verdict, rule_id) == ("safe", "a-safe")

    def test_same_priority_breaks_ties_by_id(self):
        engine = engine_with_chain()
        rules = RuleSet([
            Rule(id="b", priority=5, kind=EventKind.FILE_OPEN, verdict="unsafe",
                 path_glob="/tmp/**"),
            Rule(id="a", priority=5, kind=EventKind.FILE_OPEN, verdict="safe",
                 path_glob="/tmp/**"),
        ])
        verdict, _ = rules.screen(event_of(engine, file_open(202, "/tmp/x", "read")),
                                  ctx_for(engine))
        assert verdict == "safe"

    def test_argv_glob_matches_originating_process(self):
        engine = engine_with_chain()
        rules = RuleSet([
            Rule(id="deny-server-log", priority=1, kind=EventKind.FILE_OPEN,
                 verdict="unsafe", argv_glob="cat **server.log*"),
        ])
        verdict, _ = rules.screen(
            event_of(engine, file_open(202, "/tmp/server.log", "read")),
            ctx_for(engine))
        assert verdict == "unsafe"

    def test_is_ancestor_relation(self):
        engine = engine_with_chain()
        rules = RuleSet([
            Rule(id="no-parricide", priority=1, kind=EventKind.KILL,
                 verdict="unsafe", target="is_ancestor"),
        ])
        verdict, _ = rules.screen(event_of(engine, kill(202, 201)), ctx_for(engine))
        assert verdict == "unsafe"
        verdict, _ = rules.screen(event_of(engine, kill(201, 202)), ctx_for(engine))
        assert verdict == "unknown"

    def test_duplicate_rule_ids_rejected(self):
        with pytest.raises(RuleError):
            RuleSet([
                Rule(id="dup", priority=1, kind=EventKind.EXEC, verdict="safe"),
                Rule(id="dup", priority=2, kind=EventKind.EXEC, verdict="unsafe"),
            ])


class TestRuleFile:
    def test_load_valid_file(self, tmp_path):
        path = tmp_path / "rules.ini"
        path.write_text(
            "[rule:allow-bash]\n"
            "priority = 10\n"
            "kind = exec\n"
            "path_glob = /bin/bash\n"
            "verdict = safe\n"
            "\n"
            "[rule:deny-shadow]\n"
            "priority = 5\n"
            "kind = file_open\n"
            "path_glob = /etc/shadow\n"
            "verdict = unsafe\n"
        )
        rules = load_rules(path)
        assert [r.id for r in rules] == ["allow-bash", "deny-shadow"]

    def test_duplicate_section_reports_line(self, tmp_path):
        path = tmp_path / "rules.ini"
        path.write_text(
            "[rule:x]\npriority = 1\nkind = exec\nverdict = safe\n"
            "[rule:x]\npriority = 2\nkind = exec\nverdict = unsafe\n"
        )
        with pytest.raises(RuleError, match="duplicate rule id"):
            load_rules(path)

    def test_bad_glob_reports_line_number(self, tmp_path):
        path = tmp_path / "rules.ini"
        path.write_text(
            "[rule:x]\npriority = 1\nkind = file_open\n"
            "path_glob = /tmp/***\nverdict = safe\n"
        )
        with pytest.raises(RuleError, match="line 4"):
            load_rules(path)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "rules.ini"
        path.write_text("[rule:x]\npriority = 1\nkind = exec\nverdict = safe\nmode = x\n")
        with pytest.raises(RuleError, match="unknown keys"):
            load_rules(path)

    def test_bad_verdict_rejected(self, tmp_path):
        path = tmp_path / "rules.ini"
        path.write_text("[rule:x]\npriority = 1\nkind = exec\nverdict = maybe\n")
        with pytest.raises(RuleError):
            load_rules(path)
