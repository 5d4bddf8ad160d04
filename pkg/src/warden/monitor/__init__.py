"""Composition root: sessions, the TCP service, and the scenario replay driver."""

from warden.monitor.config import ConfigError, MonitorConfig, load_config
from warden.monitor.runtime import MonitorCore, Session, SessionRuntime
from warden.monitor.server import MonitorServer
from warden.monitor.replay_driver import (
    BundleError,
    ReplayMismatch,
    ReplayResult,
    ScenarioBundle,
    report_text,
    run_bundle,
)

__all__ = [
    "BundleError",
    "ConfigError",
    "MonitorConfig",
    "MonitorCore",
    "MonitorServer",
    "ReplayMismatch",
    "ReplayResult",
    "ScenarioBundle",
    "Session",
    "SessionRuntime",
    "load_config",
    "report_text",
    "run_bundle",
]
