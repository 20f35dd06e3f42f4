"""Scenario files, headless runs, replay tracks, and the console service."""

from .replay import ReplayTrack, load_replay_track, noisy_replay_track, replay_trajectory
from .runner import RunResult, SimEngine, run_headless
from .scenario import Scenario, ScenarioError, bundled_scenario_path, load_scenario, scenario_from_dict

__all__ = [
    "ReplayTrack",
    "RunResult",
    "Scenario",
    "ScenarioError",
    "SimEngine",
    "bundled_scenario_path",
    "load_replay_track",
    "load_scenario",
    "noisy_replay_track",
    "replay_trajectory",
    "run_headless",
    "scenario_from_dict",
]
