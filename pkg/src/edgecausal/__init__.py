"""Causal consistency under partial replication with edge-indexed timestamps."""
from .graph import ConfigurationError, Topology
from .scenario import Scenario, ScenarioError, load_scenario, load_scenario_file
from .sim import Metrics, random_scenario, run, run_baseline
from .timestamp import ClockDomainError, EdgeClock

__all__ = [
    "ClockDomainError",
    "ConfigurationError",
    "EdgeClock",
    "Metrics",
    "Scenario",
    "ScenarioError",
    "Topology",
    "load_scenario",
    "load_scenario_file",
    "random_scenario",
    "run",
    "run_baseline",
]
