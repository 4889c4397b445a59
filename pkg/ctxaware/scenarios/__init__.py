"""
Deterministic world simulator and scenario scripts for ctxaware.
"""

from ctxaware.scenarios.runner import (
    ExpectationFailed,
    ScenarioReport,
    ScenarioResult,
    ScenarioRunner,
    ScenarioScript,
    ScriptError,
    load_script,
    run_scenario,
)
from ctxaware.scenarios.world import UnknownDevice, VirtualDevice, WorldState

__all__ = [
    "ExpectationFailed",
    "ScenarioReport",
    "ScenarioResult",
    "ScenarioRunner",
    "ScenarioScript",
    "ScriptError",
    "UnknownDevice",
    "VirtualDevice",
    "WorldState",
    "load_script",
    "run_scenario",
]
