"""
Backend of the spectrum poisoning simulator.

This package provides:
- Scenario configuration, validation and seed streams
- Channel, background traffic and the slot-level environment
- The feedforward classifier and its hyperparameter searches
- Transmitter and adversary logic (attacks and defense)
- The experiment harness and report emission
"""

from backend.config import (
    ConfigError,
    ScenarioConfig,
    SeedStreams,
    apply_overrides,
    configure_logging,
    load_scenario,
    multi_source_default,
    reference_default,
    validate,
)
from backend.harness import (
    ExperimentResult,
    ExperimentSpec,
    run_defense_sweep,
    run_experiment,
    search_defense_level,
)
from backend.report import emit_report, load_report

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "SeedStreams",
    "apply_overrides",
    "configure_logging",
    "load_scenario",
    "multi_source_default",
    "reference_default",
    "validate",
    "ExperimentResult",
    "ExperimentSpec",
    "run_defense_sweep",
    "run_experiment",
    "search_defense_level",
    "emit_report",
    "load_report",
]
