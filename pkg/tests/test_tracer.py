import pytest
from hypothesis import given, settings, strategies as st

from warden.tracer.dns import DnsMappingTable
from warden.tracer.engine import Classification, FencingError, TraceEngine, enrich_network
from warden.tracer.events import EventKind
from warden.tracer.policy import EnforcementPolicy
from warden.tracer.replay import EnforceStateError, OsBackend, ProcState, ReplayBackend

from helpers import (
    AGENT_PID,
    dns_resolve,
    exec_,
    exit_,
    file_open,
    fork,
    kill,
    net_connect,
    raw,
    raws,
)

OBSERVE_ONLY = EnforcementPolicy(enforce=frozenset())


def make_engine(events=(), policy=None):
    backend = ReplayBackend(raws(events))
    engine = TraceEngine(AGENT_PID, policy or EnforcementPolicy(), backend)
    return engine, backend


def ingest_all(engine, events):
    return [engine.ingest(raw(e)) for e in events]


class TestIngestClassification:
    def test_fork_registers_child_at_next_level(self):
        engine, _ = make_engine()
        event, classification = engine.ingest(raw(fork(AGENT_PID, 201)))
        assert classification is Classification.OBSERVED
        assert engine.records[201].level == 2
        assert engine.records[201].parent_pid == AGENT_PID

    def test_exec_beyond_max_level_is_observed_not_enforcement(self):
        engine, _ = make_engine()
        chain = [fork(AGENT_PID, 201), fork(201, 202), fork(202, 203), fork(203, 204)]
        ingest_all(engine, chain)
        assert engine.records[204].level == 5
        event, classification = engine.ingest(raw(exec_(204, "/usr/bin/curl")))
        assert classification is Classification.OBSERVED
        assert not event.enforcement
        assert event in engine.collector

    def test_event_from_non_interesting_pid_ignored(self):
        engine, _ = make_engine()
        event, classification = engine.ingest(raw(file_open(999, "/tmp/x", "write")))
        assert classification is Classification.IGNORED
        assert event not in engine.collector
        assert engine.warnings  # unknown pid in a non-fork event

    def test_fork_from_unknown_pid_ignored_silently(self):
        engine, _ = make_engine()
        _, classification = engine.ingest(raw(fork(999, 1000)))
        assert classification is Classification.IGNORED
        assert not engine.warnings
        assert 1000 not in engine.records

    def test_kill_at_level_two_with_probe_on_is_enforcement(self):
        engine, backend = make_engine()
        engine.ingest(raw(fork(AGENT_PID, 201)))
        event, classification = engine.ingest(raw(kill(201, AGENT_PID)))
        assert classification is Classification.ENFORCEMENT
        assert event.enforcement
        assert backend.state(201) is ProcState.SUSPENDED

    def test_read_open_observed_under_default_policy(self):
        engine, _ = make_engine()
        engine.ingest(raw(fork(AGENT_PID, 201)))
        _, classification = engine.ingest(raw(file_open(201, "/tmp/x", "read")))
        assert classification is Classification.OBSERVED

    def test_write_open_enforced_under_default_policy(self):
        engine, _ = make_engine()
        engine.ingest(raw(fork(AGENT_PID, 201)))
        _, classification = engine.ingest(raw(file_open(201, "/tmp/x", "write")))
        assert classification is Classification.ENFORCEMENT

    def test_exec_updates_record_and_shell_flag(self):
        engine, _ = make_engine(policy=OBSERVE_ONLY)
        engine.ingest(raw(fork(AGENT_PID, 201)))
        engine.ingest(raw(exec_(201, "/bin/bash", ["bash", "-c", "ls"])))
        record = engine.records[201]
        assert record.executable == "/bin/bash"
        assert record.is_shell
        engine.ingest(raw(fork(201, 202)))
        engine.ingest(raw(exec_(202, "/usr/bin/ls", ["ls"])))
        assert not engine.records[202].is_shell

    def test_event_count_conservation(self):
        events = [fork(AGENT_PID, 201), exec_(201, "/bin/bash"),
                  file_open(201, "/tmp/a", "read"), file_open(999, "/tmp/b", "write"),
                  fork(201, 202), kill(202, 1)]
        engine, _ = make_engine(policy=OBSERVE_ONLY)
        results = ingest_all(engine, events)
        total = sum(engine.counts.values())
        assert total == len(events) == len(results)
        assert engine.counts[Classification.IGNORED] \
            + engine.counts[Classification.OBSERVED] \
            + engine.counts[Classification.ENFORCEMENT] == total


class TestInterestingSetClosure:
    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 9), st.integers(10, 49)), max_size=30))
    def test_interesting_set_reconstructible_from_forks(self, edges):
        """Every interesting pid is the agent or a fork-descendant of it."""
        pid_pool = [AGENT_PID] + list(range(200, 210))
        events = []
        for parent_idx, child_offset in edges:
            parent = pid_pool[parent_idx % len(pid_pool)]
            events.append(fork(parent, 300 + child_offset))
        engine, _ = make_engine(policy=OBSERVE_ONLY)
        ingest_all(engine, events)

        # Independent reconstruction from the fork events alone.
        expected = {AGENT_PID}
        changed = True
        while changed:
            changed = False
            for e in events:
                if e["pid"] in expected and e["detail"]["child_pid"] not in expected:
                    expected.add(e["detail"]["child_pid"])
                    changed = True
        assert set(engine.records) == expected

    def test_enforced_subset_of_interesting_with_level_bound(self):
        engine, _ = make_engine()
        chain = [fork(AGENT_PID, 201), fork(201, 202), fork(202, 203),
                 fork(203, 204), fork(204, 205)]
        ingest_all(engine, chain)
        enforced = [pid for pid in engine.records if engine.enforced(pid)]
        for pid in enforced:
            assert engine.interesting(pid)
            assert engine.records[pid].level <= engine.policy.max_enforced_process_level
        assert 204 not in enforced and 205 not in enforced


class TestEpochs:
    def test_epoch_counter_increments(self):
        engine, _ = make_engine()
        assert engine.open_tool_epoch() == 1
        assert engine.open_tool_epoch() == 2

    def test_pre_epoch_events_are_epoch_zero(self):
        engine, _ = make_engine(policy=OBSERVE_ONLY)
        event, _ = engine.ingest(raw(fork(AGENT_PID, 201)))
        assert event.epoch == 0

    def test_event_mid_epoch_carries_current_epoch(self):
        engine, _ = make_engine(policy=OBSERVE_ONLY)
        engine.ingest(raw(fork(AGENT_PID, 201)))
        engine.open_tool_epoch()
        event, _ = engine.ingest(raw(file_open(201, "/tmp/x", "read")))
        assert event.epoch == 1
        assert engine.epoch_events(1) == [event]
        assert event not in engine.epoch_events(0)


class TestEnforcementContract:
    def test_suspend_resume_round_trip(self):
        engine, backend = make_engine()
        engine.ingest(raw(fork(AGENT_PID, 201)))
        engine.enforce(201, "suspend")
        with pytest.raises(FencingError):
            engine.ingest(raw(file_open(201, "/tmp/x", "read")))
        engine.enforce(201, "resume")
        _, classification = engine.ingest(raw(file_open(201, "/tmp/x", "read")))
        assert classification is Classification.OBSERVED

    def test_suspend_then_terminate_yields_only_exit(self):
        engine, backend = make_engine()
        engine.ingest(raw(fork(AGENT_PID, 201)))
        engine.enforce(201, "suspend")
        engine.enforce(201, "terminate")
        _, c1 = engine.ingest(raw(file_open(201, "/tmp/x", "read")))
        assert c1 is Classification.IGNORED  # gated
        _, c2 = engine.ingest(raw(exit_(201, status=137)))
        assert c2 is Classification.OBSERVED
        assert backend.state(201) is ProcState.EXITED

    def test_resume_without_suspend_is_state_error(self):
        engine, _ = make_engine()
        engine.ingest(raw(fork(AGENT_PID, 201)))
        with pytest.raises(EnforceStateError):
            engine.enforce(201, "resume")

    def test_terminate_after_exit_is_noop(self):
        engine, backend = make_engine()
        engine.ingest(raw(fork(AGENT_PID, 201)))
        engine.ingest(raw(exit_(201)))
        engine.enforce(201, "terminate")  # no exception
        assert backend.state(201) is ProcState.EXITED

    def test_enforcer_emits_no_events_of_its_own(self):
        """Partial effects stay committed: termination adds nothing to the trace."""
        engine, _ = make_engine()
        engine.ingest(raw(fork(AGENT_PID, 201)))
        before = list(engine.collector)
        engine.enforce(201, "suspend")
        engine.enforce(201, "terminate")
        assert engine.collector == before


class TestAuditBudget:
    def test_within_budget_stays_enforced(self):
        engine, _ = make_engine()
        engine.ingest(raw(fork(AGENT_PID, 201)))
        engine.accumulate_audit_time(201, 100.0)
        remaining = engine.accumulate_audit_time(201, 5.0)
        assert remaining == pytest.approx(5.0)
        assert engine.enforced(201)

    def test_exceeding_budget_de_enforces_permanently(self):
        engine, _ = make_engine()
        engine.ingest(raw(fork(AGENT_PID, 201)))
        engine.accumulate_audit_time(201, 109.0)
        remaining = engine.accumulate_audit_time(201, 2.0)
        assert remaining == 0.0
        assert not engine.enforced(201)
        assert engine.records[201].budget_exhausted

    def test_de_enforced_pid_events_observed_and_logged(self):
        engine, _ = make_engine()
        engine.ingest(raw(fork(AGENT_PID, 201)))
        engine.accumulate_audit_time(201, 111.0)
        event, classification = engine.ingest(raw(exec_(201, "/usr/bin/curl")))
        assert classification is Classification.OBSERVED
        assert event in engine.collector


class TestDnsMapping:
    def test_hit_annotates_connect(self):
        engine, _ = make_engine(policy=OBSERVE_ONLY)
        engine.ingest(raw(fork(AGENT_PID, 201)))
        engine.ingest(raw(dns_resolve(201, "example.com", ["93.184.216.34"])))
        event, _ = engine.ingest(raw(net_connect(201, "93.184.216.34", 443)))
        assert event.detail["domain"] == "example.com"

    def test_never_resolved_address_not_annotated(self):
        engine, _ = make_engine(policy=OBSERVE_ONLY)
        engine.ingest(raw(fork(AGENT_PID, 201)))
        event, _ = engine.ingest(raw(net_connect(201, "10.0.0.1", 443)))
        assert "domain" not in event.detail

    def test_latest_resolution_wins(self):
        engine, _ = make_engine(policy=OBSERVE_ONLY)
        engine.ingest(raw(fork(AGENT_PID, 201)))
        engine.ingest(raw(dns_resolve(201, "a.com", ["198.51.100.7"])))
        engine.ingest(raw(dns_resolve(201, "b.com", ["198.51.100.7"])))
        event, _ = engine.ingest(raw(net_connect(201, "198.51.100.7", 80)))
        assert event.detail["domain"] == "b.com"

    def test_enrich_rejects_non_connect(self):
        engine, _ = make_engine(policy=OBSERVE_ONLY)
        engine.ingest(raw(fork(AGENT_PID, 201)))
        event, _ = engine.ingest(raw(file_open(201, "/tmp/x", "read")))
        with pytest.raises(ValueError):
            enrich_network(event, DnsMappingTable())


class TestOsBackendSlot:
    def test_unimplemented_by_default(self):
        with pytest.raises(NotImplementedError):
            OsBackend()


class TestPolicyFile:
    def test_defaults_match_shipped_policy(self, tmp_path):
        from warden.tracer.policy import load_policy

        path = tmp_path / "policy.ini"
        path.write_text("[policy]\nmax_enforced_process_level = 4\n"
                        "audit_time_budget_seconds = 110\n")
        policy = load_policy(path)
        assert policy.max_enforced_process_level == 4
        assert policy.audit_time_budget == 110.0
        assert EventKind.EXEC in policy.enforce
        assert EventKind.FORK not in policy.enforce
        assert policy.file_open_modes == frozenset({"write", "read_write"})

    def test_probe_overrides(self, tmp_path):
        from warden.tracer.policy import load_policy

        path = tmp_path / "policy.ini"
        path.write_text("[enforce]\nexec = false\nfork = true\n")
        policy = load_policy(path)
        assert EventKind.EXEC not in policy.enforce
        assert EventKind.FORK in policy.enforce

    @pytest.mark.parametrize("text", [
        "[enforce]\nptrace = true\n",                      # unknown probe
        "[policy]\nmax_enforced_process_level = 0\n",      # level below 1
        "[policy]\naudit_time_budget_seconds = 0\n",       # non-positive budget
        "[policy]\nfile_open_enforce_modes = exec\n",      # bad mode
        "[policy]\nsurprise = 1\n",                        # unknown key
    ])
    def test_malformed_policy_rejected(self, tmp_path, text):
        from warden.tracer.policy import PolicyError, load_policy

        path = tmp_path / "policy.ini"
        path.write_text(text)
        with pytest.raises(PolicyError):
            load_policy(path)
