"""Simulation kit: event engine, workloads, metrics, scenarios, reports."""

from .engine import Engine, EventQueue, InvariantViolation, split_seed
from .metrics import BUCKET_EDGES_US, BUCKET_LABELS, MetricsSink
from .scenario import ConfigError, RunResult, load_scenario_file, run_scenario
from .scenarios import ScenarioFamily, scenario_suite
from .workload import GeneratorConfig, WorkloadGenerator

__all__ = [
    "Engine",
    "EventQueue",
    "InvariantViolation",
    "split_seed",
    "BUCKET_EDGES_US",
    "BUCKET_LABELS",
    "MetricsSink",
    "ConfigError",
    "RunResult",
    "load_scenario_file",
    "run_scenario",
    "ScenarioFamily",
    "scenario_suite",
    "GeneratorConfig",
    "WorkloadGenerator",
]
