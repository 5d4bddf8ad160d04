#!/usr/bin/env python3
"""Replay every scenario bundle and print a one-line result per bundle.

Usage: python scripts/run_corpus.py [--over-tcp] [--runs N]

With --runs > 1 the reports of repeated runs are compared byte for byte,
which is the determinism check the corpus is expected to satisfy.
"""

from __future__ import annotations

import argparse
import os
import sys

from warden.monitor.replay_driver import ScenarioBundle, report_text, run_bundle

CORPUS = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "scenarios")


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--over-tcp", action="store_true")
    parser.add_argument("--runs", type=int, default=1)
    args = parser.parse_args()

    failures = 0
    for name in sorted(os.listdir(CORPUS)):
        bundle_dir = os.path.join(CORPUS, name)
        if not os.path.isdir(bundle_dir):
            continue
        bundle = ScenarioBundle.load(bundle_dir)
        results = [run_bundle(bundle, over_tcp=args.over_tcp)
                   for _ in range(args.runs)]
        texts = [report_text(r.report) for r in results]
        deterministic = all(t == texts[0] for t in texts)
        passed = results[0].passed and deterministic
        failures += 0 if passed else 1
        suffix = "" if deterministic else " (NON-DETERMINISTIC)"
        print(f"{'PASS' if passed else 'FAIL'} {name}{suffix}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
