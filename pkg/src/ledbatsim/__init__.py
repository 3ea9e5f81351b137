"""Packet-level simulator of delay-based (LEDBAT) and loss-based (TCP AIMD)
congestion control sharing a drop-tail FIFO bottleneck."""

__version__ = "0.1.0"

from .engine import Engine, EventKind, SchedulingInPast
from .ledbat import LedbatConfig, LedbatFlow
from .tcp import TcpConfig, TcpFlow
from .network import AckPath, Bottleneck, Packet
from .metrics import AllZeroRates, MetricsReport, aggregate_runs, jain_fairness, loss_rate, utilization
from .harness import (
    FlowSpec,
    RunResult,
    Scenario,
    UsageError,
    detect_starvation,
    get_preset,
    load_scenario,
    preset_names,
    run_scenario,
    run_table1,
)

__all__ = [
    "Engine",
    "EventKind",
    "SchedulingInPast",
    "LedbatConfig",
    "LedbatFlow",
    "TcpConfig",
    "TcpFlow",
    "AckPath",
    "Bottleneck",
    "Packet",
    "AllZeroRates",
    "MetricsReport",
    "aggregate_runs",
    "jain_fairness",
    "loss_rate",
    "utilization",
    "FlowSpec",
    "RunResult",
    "Scenario",
    "UsageError",
    "detect_starvation",
    "get_preset",
    "load_scenario",
    "preset_names",
    "run_scenario",
    "run_table1",
]
