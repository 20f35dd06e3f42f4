"""Tests for scenario files, replay tracks, and the headless runner."""

import dataclasses
import json
import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from manisim.harness import (
    ReplayTrack,
    bundled_scenario_path,
    load_replay_track,
    load_scenario,
    noisy_replay_track,
    replay_trajectory,
    run_headless,
    scenario_from_dict,
)
from manisim.harness.cli import main as cli_main
from manisim.harness.scenario import ScenarioError


def minimal_blackboard_doc(**overrides) -> dict:
    doc = {
        "version": 1,
        "run": {"ticks": 50, "dt": 0.01},
        "manikin": {"trunk": [0.0, 0.0, 0.0]},
        "target": {"position": [0.3, 0.2, 0.35], "size": 0.1},
        "agents": [{"name": "Attraction", "kind": "attraction", "rate": 1, "d_pos": 0.01, "d_or": 0.05}],
    }
    doc.update(overrides)
    return doc


# -- scenario loading -------------------------------------------------------


def test_bundled_trap_loads_with_five_agents():
    scenario = load_scenario(bundled_scenario_path("trap"))
    assert len(scenario.agents) == 5
    kinds = sorted(spec.kind for spec in scenario.agents)
    assert kinds == ["attraction", "head", "operator", "repulsion", "visibility"]


def test_zero_rate_is_rejected_naming_the_agent():
    doc = minimal_blackboard_doc()
    doc["agents"][0]["rate"] = 0
    with pytest.raises(ScenarioError, match=r"agents\[0\] \(Attraction\)\.rate"):
        scenario_from_dict(doc)


def test_missing_target_is_rejected():
    doc = minimal_blackboard_doc()
    del doc["target"]
    with pytest.raises(ScenarioError, match="target"):
        scenario_from_dict(doc)


def test_parse_error_reports_location(tmp_path):
    bad = tmp_path / "broken.json"
    bad.write_text('{"version": 1,\n  "run": }')
    with pytest.raises(ScenarioError, match=r"broken\.json:2:10"):
        load_scenario(bad)


def test_unknown_version_rejected():
    with pytest.raises(ScenarioError, match="version"):
        scenario_from_dict(minimal_blackboard_doc(version=99))


def test_nan_values_rejected():
    doc = minimal_blackboard_doc()
    doc["target"]["position"] = [0.3, float("nan"), 0.35]
    with pytest.raises(ScenarioError, match=r"target\.position\[1\]"):
        scenario_from_dict(doc)


def test_guides_without_tool_rejected():
    doc = minimal_blackboard_doc()
    doc["guides"] = [{"kind": "slide", "axis_origin": [0, 0, 0], "axis_direction": [0, 0, 1]}]
    with pytest.raises(ScenarioError, match="guides"):
        scenario_from_dict(doc)


def test_script_without_operator_rejected():
    doc = minimal_blackboard_doc()
    doc["operator_script"] = {"5": {"dy": 0.01}}
    with pytest.raises(ScenarioError, match="operator"):
        scenario_from_dict(doc)


def test_empty_scenario_rejected():
    with pytest.raises(ScenarioError, match="nothing to run"):
        scenario_from_dict({"version": 1, "run": {"ticks": 10}})


def test_field_paths_reach_into_scene():
    doc = minimal_blackboard_doc()
    doc["scene"] = {"boxes": [{"center": [0, 0, 0], "half_extents": [1, -1, 1]}]}
    with pytest.raises(ScenarioError, match=r"scene\.boxes\[0\]"):
        scenario_from_dict(doc)


# -- replay tracks ----------------------------------------------------------


def make_track() -> ReplayTrack:
    return ReplayTrack(
        times=np.array([0.0, 1.0, 2.0]),
        positions=np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]]),
        rotvecs=np.array([[0.0, 0.0, 0.0], [0.0, 0.0, math.pi / 2], [0.0, 0.0, math.pi / 2]]),
    )


def test_replay_clamps_before_first_sample():
    p, R = replay_trajectory(make_track(), -5.0)
    np.testing.assert_allclose(p, [0.0, 0.0, 0.0])
    np.testing.assert_allclose(R, np.eye(3), atol=1e-15)


def test_replay_clamps_after_last_sample():
    p, _ = replay_trajectory(make_track(), 99.0)
    np.testing.assert_allclose(p, [1.0, 1.0, 0.0])


def test_replay_midpoint_position():
    p, _ = replay_trajectory(make_track(), 0.5)
    np.testing.assert_allclose(p, [0.5, 0.0, 0.0])


def test_replay_midpoint_rotation_is_half_turn_about_same_axis():
    # Endpoints differ by a 90 degree yaw; halfway must be exactly 45.
    _, R = replay_trajectory(make_track(), 0.5)
    expected = Rotation.from_rotvec([0.0, 0.0, math.pi / 4]).as_matrix()
    np.testing.assert_allclose(R, expected, atol=1e-12)


def test_replay_exact_at_sample_timestamps():
    track = make_track()
    for i, t in enumerate(track.times):
        p, R = replay_trajectory(track, float(t))
        np.testing.assert_allclose(p, track.positions[i], atol=1e-15)
        np.testing.assert_allclose(R, Rotation.from_rotvec(track.rotvecs[i]).as_matrix(), atol=1e-12)


def test_track_requires_strictly_increasing_times():
    with pytest.raises(ValueError, match="strictly increasing"):
        ReplayTrack(times=[0.0, 0.0], positions=np.zeros((2, 3)), rotvecs=np.zeros((2, 3)))


def test_noisy_track_is_seed_deterministic():
    a = noisy_replay_track(7, start=[0, 0, 0], end=[0, 0, 1])
    b = noisy_replay_track(7, start=[0, 0, 0], end=[0, 0, 1])
    c = noisy_replay_track(8, start=[0, 0, 0], end=[0, 0, 1])
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.rotvecs, b.rotvecs)
    assert not np.array_equal(a.positions, c.positions)


def test_track_file_round_trip(tmp_path):
    path = tmp_path / "track.json"
    path.write_text(
        json.dumps(
            {
                "version": 1,
                "frames": [
                    {"t": 0.0, "position": [0, 0, 0], "rotvec": [0, 0, 0]},
                    {"t": 0.5, "position": [0.1, 0, 0], "rotvec": [0, 0, 0.2]},
                ],
            }
        )
    )
    track = load_replay_track(path)
    assert len(track) == 2
    assert track.duration == 0.5


def test_track_file_rejects_unordered_frames(tmp_path):
    path = tmp_path / "track.json"
    path.write_text(
        json.dumps(
            {
                "version": 1,
                "frames": [{"t": 1.0, "position": [0, 0, 0]}, {"t": 0.5, "position": [0, 0, 0]}],
            }
        )
    )
    with pytest.raises(ScenarioError, match="increasing"):
        load_replay_track(path)


# -- headless runs ----------------------------------------------------------


def test_attraction_only_reaches_within_step_count_bound():
    doc = minimal_blackboard_doc()
    scenario = scenario_from_dict(doc)
    distance = math.hypot(0.3, 0.2)
    # Each activation moves at most d_pos toward the target and stops
    # inside the 0.05 m radius; heading alignment can only slow the
    # approach while the trunk turns, hence the slack.
    bound = math.ceil((distance - 0.05) / 0.01) + 20
    result = run_headless(dataclasses.replace(scenario, ticks=bound))
    assert result.metrics["reached"] is True
    assert result.metrics["final_distance"] <= 0.05 + 1e-12


def test_same_scenario_twice_gives_identical_ticklog_bytes():
    scenario = scenario_from_dict(minimal_blackboard_doc())
    a = run_headless(scenario)
    b = run_headless(scenario)
    assert a.ticklog == b.ticklog


def test_all_agents_paused_leaves_world_static():
    doc = minimal_blackboard_doc()
    doc["agents"][0]["enabled"] = False
    result = run_headless(scenario_from_dict(doc))
    assert result.metrics["reached"] is False
    assert result.world.manikin.trunk.x == 0.0
    assert result.world.manikin.trunk.y == 0.0


def test_numeric_failure_is_reported_with_tick_and_cause():
    scenario = load_scenario(bundled_scenario_path("table"))
    broken_arm = dataclasses.replace(scenario.arm, task_target=np.array([np.nan, np.nan]))
    result = run_headless(dataclasses.replace(scenario, arm=broken_arm))
    assert result.metrics["failed"] is True
    assert "tick 1" in result.metrics["failure"]


def test_ticklog_header_matches_scenario_sections():
    scenario = load_scenario(bundled_scenario_path("drill"))
    result = run_headless(dataclasses.replace(scenario, ticks=3))
    lines = result.ticklog.decode().splitlines()
    header = lines[0].split(",")
    assert header[:2] == ["tick", "time"]
    assert "tool_x" in header and "guide_angle" in header and "guide_s0" in header
    assert len(lines) == 4


def test_ticklog_floats_round_trip_exactly():
    scenario = scenario_from_dict(minimal_blackboard_doc())
    result = run_headless(dataclasses.replace(scenario, ticks=5))
    lines = result.ticklog.decode().splitlines()
    header = lines[0].split(",")
    row = lines[-1].split(",")
    x = float(row[header.index("trunk_x")])
    assert x == result.world.manikin.trunk.x


def test_scripted_operator_input_moves_trunk():
    doc = minimal_blackboard_doc()
    doc["agents"] = [
        {"name": "Operator", "kind": "operator", "rate": 1, "d_pos": 0.05, "d_or": 0.1},
    ]
    doc["operator_script"] = {"3": {"dy": 0.04}}
    result = run_headless(dataclasses.replace(scenario_from_dict(doc), ticks=5))
    lines = result.ticklog.decode().splitlines()
    header = lines[0].split(",")
    y_index = header.index("trunk_y")
    ys = [float(line.split(",")[y_index]) for line in lines[1:]]
    assert ys[0] == 0.0 and ys[1] == 0.0
    assert ys[2] == pytest.approx(0.04)
    assert ys[3] == pytest.approx(0.04)


def test_run_writes_log_and_metrics_files(tmp_path):
    scenario = scenario_from_dict(minimal_blackboard_doc())
    log = tmp_path / "log.csv"
    metrics = tmp_path / "metrics.csv"
    result = run_headless(dataclasses.replace(scenario, ticks=3), log_path=log, metrics_path=metrics)
    assert log.read_bytes() == result.ticklog
    text = metrics.read_text()
    assert text.startswith("key,value\n")
    assert "final_distance" in text


# -- command line -----------------------------------------------------------


def test_cli_run_and_validate(tmp_path, capsys):
    log = tmp_path / "out.csv"
    metrics = tmp_path / "m.csv"
    scenario_file = tmp_path / "mini.json"
    scenario_file.write_text(json.dumps(minimal_blackboard_doc()))
    assert cli_main(["run", str(scenario_file), "--log", str(log), "--metrics", str(metrics)]) == 0
    out = capsys.readouterr().out
    assert "final_distance=" in out
    assert log.exists() and metrics.exists()
    assert cli_main(["validate", str(scenario_file), "trap"]) == 0
    out = capsys.readouterr().out
    assert "OK" in out


def test_cli_validate_reports_invalid_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"version": 1, "run": {"ticks": 10}}))
    assert cli_main(["validate", str(bad)]) == 1
    assert "INVALID" in capsys.readouterr().out


def test_cli_replay_check(tmp_path, capsys):
    path = tmp_path / "track.json"
    path.write_text(
        json.dumps({"version": 1, "frames": [{"t": 0.0, "position": [0, 0, 0]}, {"t": 1.0, "position": [1, 0, 0]}]})
    )
    assert cli_main(["replay-check", str(path)]) == 0
    out = capsys.readouterr().out
    assert "frames=2" in out
