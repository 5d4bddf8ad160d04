#!/usr/bin/env python3
"""End-to-end smoke: real server process, real TCP, real client SDK.

Builds a scratch deployment (trace, rules, config), validates it with
`warden check`, starts `warden serve` on an ephemeral port, drives a benign
tool use and a dependent-file tampering attempt through warden_client,
checks the alert round trip and the persisted audit log, and shuts the
server down with SIGINT.  Exits 0 on success.

Requires both packages installed (`pip install -e . -e client_sdk`).
"""

from __future__ import annotations

import json
import os
import re
import signal
import subprocess
import sys
import tempfile
import time

from warden_client import SentinelClient

TRACE = [
    {"ts": 0.0, "pid": 100, "kind": "fork", "detail": {"child_pid": 201}, "epoch": 1},
    {"ts": 0.1, "pid": 201, "kind": "exec",
     "detail": {"path": "/bin/bash", "argv": ["bash", "-c", "cat notes.txt"]}, "epoch": 1},
    {"ts": 0.2, "pid": 201, "kind": "file_open",
     "detail": {"path": "/home/user/notes.txt", "mode": "read"}, "epoch": 1},
    {"ts": 0.3, "pid": 201, "kind": "exit", "detail": {"status": 0}, "epoch": 1},
    {"ts": 1.0, "pid": 100, "kind": "fork", "detail": {"child_pid": 202}, "epoch": 2},
    {"ts": 1.1, "pid": 202, "kind": "exec",
     "detail": {"path": "/bin/bash",
                "argv": ["bash", "-c", "echo x > /srv/agent/config.yaml"]}, "epoch": 2},
    {"ts": 1.2, "pid": 202, "kind": "file_open",
     "detail": {"path": "/srv/agent/config.yaml", "mode": "write"}, "epoch": 2},
    {"ts": 1.3, "pid": 202, "kind": "exit", "detail": {"status": 137}, "epoch": 2},
]


def check(condition, label):
    if not condition:
        print(f"FAIL {label}")
        sys.exit(1)
    print(f"ok   {label}")


def main() -> int:
    workdir = tempfile.mkdtemp(prefix="warden-e2e-")
    os.chdir(workdir)
    os.makedirs("logs")
    with open("trace.jsonl", "w") as fh:
        for event in TRACE:
            fh.write(json.dumps(event) + "\n")
    with open("rules.ini", "w") as fh:
        fh.write("[rule:allow-bash]\npriority = 10\nkind = exec\n"
                 "path_glob = /bin/bash\nverdict = safe\n")
    open("stub.jsonl", "w").close()
    with open("monitor.ini", "w") as fh:
        fh.write("[monitor]\nrule_file = rules.ini\nlog_dir = logs\n"
                 "[trace_source]\nkind = replay\npath = trace.jsonl\n"
                 "[auditor]\nkind = stub\nscript = stub.jsonl\n")

    for what, path in (("config", "monitor.ini"), ("rules", "rules.ini"),
                       ("stub", "stub.jsonl")):
        rc = subprocess.run(["warden", "check", what, path],
                            capture_output=True).returncode
        check(rc == 0, f"warden check {what}")

    proc = subprocess.Popen(
        ["warden", "serve", "--config", "monitor.ini", "--listen", "127.0.0.1:0"],
        stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True)
    port = None
    for _ in range(200):
        match = re.search(r"listening on 127\.0\.0\.1:(\d+)", proc.stdout.readline())
        if match:
            port = int(match.group(1))
            break
    check(port is not None, "serve reports its ephemeral port")

    client = SentinelClient(f"127.0.0.1:{port}", agent_process_id=100,
                            dependent_files=["/srv/agent/config.yaml"],
                            agent_name="e2e")
    client.add_user_message("read my notes, then update the config")

    client.notify_new_tool_use("bash", {"command": "cat /home/user/notes.txt"})
    benign = client.add_tool_result("notes content", is_error=False)
    check("SECURITY ALERT" not in client.try_append_security_alert(benign).content,
          "benign tool use carries no alert")

    client.notify_new_tool_use("bash", {"command": "echo x > /srv/agent/config.yaml"})
    failing = client.add_tool_result("bash: write failed: killed", is_error=True)
    final = client.try_append_security_alert(failing)
    check("SECURITY ALERT:" in final.content, "tampering blocked, alert delivered")
    client.close()

    time.sleep(0.3)
    logs = os.listdir("logs")
    check(len(logs) == 1, "one per-session audit log written")
    records = [json.loads(line) for line in open(os.path.join("logs", logs[0]))]
    verdicts = [r["decision"]["verdict"] for r in records]
    check(verdicts == ["resume", "resume", "terminate"],
          f"audit log verdicts {verdicts}")

    rc = subprocess.run(["warden", "log", os.path.join("logs", logs[0]),
                         "--filter", "verdict=terminate", "--json"],
                        capture_output=True, text=True)
    check(rc.returncode == 0 and len(json.loads(rc.stdout)) == 1,
          "warden log filters the termination")

    proc.send_signal(signal.SIGINT)
    check(proc.wait(timeout=10) == 0, "clean SIGINT shutdown")
    print("E2E VERIFY: PASS")
    return 0


if __name__ == "__main__":
    sys.exit(main())
