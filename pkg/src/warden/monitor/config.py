"""Service configuration.

INI file, paths resolved relative to the config file itself:

    [monitor]
    listen_addr = 127.0.0.1:7474
    policy_file = policy.ini
    rule_file = rules.ini
    log_dir = logs

    [trace_source]
    kind = replay            ; replay | os
    path = trace.jsonl

    [auditor]
    kind = stub               ; stub | remote | disabled
    script = stub.jsonl
    ; endpoint = https://auditor.example/v1/audit   (remote)
    ; api_key_env = WARDEN_AUDITOR_KEY              (credentials stay in the env)
    ; timeout_seconds = 30
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass
from typing import Optional

DEFAULT_LISTEN_ADDR = "127.0.0.1:7474"
DEFAULT_API_KEY_ENV = "WARDEN_AUDITOR_KEY"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MonitorConfig:
    listen_addr: str = DEFAULT_LISTEN_ADDR
    policy_file: Optional[str] = None
    rule_file: Optional[str] = None
    log_dir: Optional[str] = None
    trace_source_kind: str = "replay"
    trace_source_path: Optional[str] = None
    auditor_kind: str = "stub"
    auditor_script: Optional[str] = None
    auditor_endpoint: Optional[str] = None
    auditor_api_key_env: str = DEFAULT_API_KEY_ENV
    auditor_timeout: float = 30.0

    def __post_init__(self):
        if self.trace_source_kind not in ("replay", "os"):
            raise ConfigError(f"unknown trace_source kind {self.trace_source_kind!r}")
        if self.auditor_kind not in ("stub", "remote", "disabled"):
            raise ConfigError(f"unknown auditor kind {self.auditor_kind!r}")
        if self.trace_source_kind == "replay" and not self.trace_source_path:
            raise ConfigError("replay trace source needs a path")
        if self.auditor_kind == "stub" and not self.auditor_script:
            raise ConfigError("stub auditor needs a script path")
        if self.auditor_kind == "remote" and not self.auditor_endpoint:
            raise ConfigError("remote auditor needs an endpoint")


def load_config(path) -> MonitorConfig:
    parser = configparser.ConfigParser()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    except configparser.Error as exc:
        raise ConfigError(f"bad config file {path}: {exc}")

    base = os.path.dirname(os.path.abspath(path))

    def resolve(value: Optional[str]) -> Optional[str]:
        if value is None:
            return None
        return value if os.path.isabs(value) else os.path.join(base, value)

    for section in parser.sections():
        if section not in ("monitor", "trace_source", "auditor"):
            raise ConfigError(f"unknown config section [{section}]")

    try:
        config = MonitorConfig(
            listen_addr=parser.get("monitor", "listen_addr", fallback=DEFAULT_LISTEN_ADDR),
            policy_file=resolve(parser.get("monitor", "policy_file", fallback=None)),
            rule_file=resolve(parser.get("monitor", "rule_file", fallback=None)),
            log_dir=resolve(parser.get("monitor", "log_dir", fallback=None)),
            trace_source_kind=parser.get("trace_source", "kind", fallback="replay"),
            trace_source_path=resolve(parser.get("trace_source", "path", fallback=None)),
            auditor_kind=parser.get("auditor", "kind", fallback="stub"),
            auditor_script=resolve(parser.get("auditor", "script", fallback=None)),
            auditor_endpoint=parser.get("auditor", "endpoint", fallback=None),
            auditor_api_key_env=parser.get("auditor", "api_key_env",
                                           fallback=DEFAULT_API_KEY_ENV),
            auditor_timeout=parser.getfloat("auditor", "timeout_seconds", fallback=30.0),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}")

    for name, file_path in (("policy_file", config.policy_file),
                            ("rule_file", config.rule_file)):
        if file_path is not None and not os.path.exists(file_path):
            raise ConfigError(f"{name} does not exist: {file_path}")
    if config.trace_source_kind == "replay" and not os.path.exists(config.trace_source_path):
        raise ConfigError(f"trace file does not exist: {config.trace_source_path}")
    if config.auditor_kind == "stub" and not os.path.exists(config.auditor_script):
        raise ConfigError(f"auditor script does not exist: {config.auditor_script}")
    return config


def canonical_config_text(config: MonitorConfig) -> str:
    pairs = [
        ("listen_addr", config.listen_addr),
        ("policy_file", config.policy_file or "(defaults)"),
        ("rule_file", config.rule_file or "(builtins only)"),
        ("log_dir", config.log_dir or "(disabled)"),
        ("trace_source.kind", config.trace_source_kind),
        ("trace_source.path", config.trace_source_path or "-"),
        ("auditor.kind", config.auditor_kind),
        ("auditor.script", config.auditor_script or "-"),
        ("auditor.endpoint", config.auditor_endpoint or "-"),
        ("auditor.api_key_env", config.auditor_api_key_env),
        ("auditor.timeout_seconds", f"{config.auditor_timeout:g}"),
    ]
    return "\n".join(f"{key} = {value}" for key, value in pairs) + "\n"
