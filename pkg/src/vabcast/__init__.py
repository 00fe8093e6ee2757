"""Reconfigurable atomic broadcast over an auxiliary configuration service,
with primary-order and speculative primary-order variants, a passive
replication layer, a deterministic simulation harness, and a full history
checker."""

from .config_service import ConfigServiceError, ConfigStore
from .harness import RunResult, Simulator, run_scenario
from .model import AppMessage, Configuration, Mode, epoch_of
from .monitors import Violation
from .report import evaluate_history, evaluate_run
from .scenario import Scenario, ScenarioError, bundled, compute_premise, random_scenario

__version__ = "0.1.0"

__all__ = [
    "AppMessage",
    "ConfigServiceError",
    "ConfigStore",
    "Configuration",
    "Mode",
    "RunResult",
    "Scenario",
    "ScenarioError",
    "Simulator",
    "Violation",
    "bundled",
    "compute_premise",
    "epoch_of",
    "evaluate_history",
    "evaluate_run",
    "random_scenario",
    "run_scenario",
]
