"""Operator entry point.

    warden serve  --config monitor.ini [--listen HOST:PORT]
    warden replay SCENARIO_DIR [--over-tcp]
    warden check  {config|policy|rules|stub|scenario} PATH
    warden log    AUDIT_LOG [--filter key=value]... [--json]

Exit codes: 0 success, 1 expectation mismatch (replay), 2 usage/parse error.
"""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys

from warden.auditor.backends import StubScriptError, load_stub_script
from warden.auditor.rules import RuleError, canonical_rules_text, load_rules
from warden.monitor.config import ConfigError, canonical_config_text, load_config
from warden.monitor.replay_driver import (
    BundleError,
    ScenarioBundle,
    build_core,
    report_text,
    run_bundle,
)
from warden.monitor.runtime import MonitorCore
from warden.monitor.server import MonitorServer
from warden.tracer.policy import PolicyError, canonical_policy_text, load_policy

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_USAGE = 2

LOG_FILTER_KEYS = ("pid", "epoch", "verdict")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="warden",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the monitoring server")
    serve.add_argument("--config", required=True, help="monitor config file (INI)")
    serve.add_argument("--listen", help="override the configured listen address")

    replay = sub.add_parser("replay", help="replay a scenario bundle in-process")
    replay.add_argument("bundle", help="scenario bundle directory")
    replay.add_argument("--over-tcp", action="store_true",
                        help="exercise the real socket path instead of the in-memory channel")

    check = sub.add_parser("check", help="validate a file and print its canonical form")
    check.add_argument("what", choices=["config", "policy", "rules", "stub", "scenario"])
    check.add_argument("path")

    log = sub.add_parser("log", help="inspect an audit log")
    log.add_argument("log_file")
    log.add_argument("--filter", action="append", default=[], metavar="KEY=VALUE",
                     help=f"filter records; keys: {', '.join(LOG_FILTER_KEYS)}")
    log.add_argument("--json", action="store_true", help="machine-readable output")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    handlers = {"serve": cmd_serve, "replay": cmd_replay,
                "check": cmd_check, "log": cmd_log}
    return handlers[args.command](args)


def cmd_serve(args) -> int:
    try:
        config = load_config(args.config)
        if config.trace_source_kind == "os":
            raise ConfigError(
                "trace_source kind 'os' is an adapter slot; this build ships "
                "the replay backend only"
            )
        core = MonitorCore.from_config(config)
    except (ConfigError, PolicyError, RuleError, StubScriptError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    listen_addr = args.listen or config.listen_addr
    print("effective config:")
    print(canonical_config_text(config), end="")
    print("effective policy:")
    print(canonical_policy_text(core.policy), end="", flush=True)

    server = MonitorServer(core, listen_addr)
    try:
        server.start()
    except OSError as exc:
        print(f"error: cannot bind {listen_addr}: {exc}", file=sys.stderr)
        return EXIT_USAGE

    def _stop(signum, frame):
        server.shutdown()

    signal.signal(signal.SIGINT, _stop)
    signal.signal(signal.SIGTERM, _stop)
    server.wait()
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        bundle = ScenarioBundle.load(args.bundle)
        result = run_bundle(bundle, over_tcp=args.over_tcp)
    except BundleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    sys.stdout.write(report_text(result.report))
    if result.passed:
        return EXIT_OK
    divergence = result.report.get("first_divergence") or \
        result.report.get("counter_divergence") or \
        (result.report["script_failures"][0] if result.report["script_failures"] else None)
    print(f"replay mismatch: {divergence}", file=sys.stderr)
    return EXIT_MISMATCH


def cmd_check(args) -> int:
    try:
        if args.what == "config":
            print(canonical_config_text(load_config(args.path)), end="")
        elif args.what == "policy":
            print(canonical_policy_text(load_policy(args.path)), end="")
        elif args.what == "rules":
            print(canonical_rules_text(load_rules(args.path)), end="")
        elif args.what == "stub":
            for entry in load_stub_script(args.path):
                print(json.dumps({"match": entry.match, "verdict": entry.verdict,
                                  "verified_ops": [op.to_json() for op in entry.verified_ops],
                                  "explanation": entry.explanation}, sort_keys=True))
        else:
            bundle = ScenarioBundle.load(args.path)
            _, actions, expected, counters = build_core(bundle)
            print(f"bundle {bundle.name}: {len(actions)} client actions, "
                  f"{len(expected)} expected decisions"
                  + (", counters pinned" if counters else ""))
    except (ConfigError, PolicyError, RuleError, StubScriptError, BundleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def cmd_log(args) -> int:
    filters = {}
    for raw in args.filter:
        key, sep, value = raw.partition("=")
        if not sep or key not in LOG_FILTER_KEYS:
            print(f"error: unknown filter {raw!r}; keys: {', '.join(LOG_FILTER_KEYS)}",
                  file=sys.stderr)
            return EXIT_USAGE
        filters[key] = value

    try:
        records = []
        with open(args.log_file, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    print(f"error: log line {line_no}: {exc}", file=sys.stderr)
                    return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    def keep(record: dict) -> bool:
        for key, value in filters.items():
            if key == "verdict":
                if record.get("decision", {}).get("verdict") != value:
                    return False
            elif str(record.get(key)) != value:
                return False
        return True

    records = [r for r in records if keep(r)]
    if args.json:
        print(json.dumps(records, sort_keys=True))
        return EXIT_OK

    header = f"{'seq':>5} {'epoch':>5} {'pid':>7} {'verdict':<9} {'kind':<12} " \
             f"{'ms':>9} {'cache':<5} stages"
    print(header)
    for r in records:
        print(f"{r.get('seq', '?'):>5} {r.get('epoch', '?'):>5} {r.get('pid', '?'):>7} "
              f"{r.get('decision', {}).get('verdict', '?'):<9} "
              f"{r.get('event', {}).get('kind', '?'):<12} "
              f"{r.get('elapsed_ms', 0):>9.3f} "
              f"{str(r.get('cache_hit', False)).lower():<5} "
              f"{'>'.join(r.get('stage_trace', []))}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
