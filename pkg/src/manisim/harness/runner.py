"""Headless scenario execution: one engine stepping every section per tick.

The engine is fully deterministic: agents are pure functions of the world,
the arm and tool integrate fixed-step dynamics, and the only randomness
(replay noise) is drawn from a seed stored in the scenario file.  Two runs
of the same scenario therefore produce byte-identical tick logs.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.spatial.transform import Rotation

from ..agents import (
    OperatorQueue,
    attraction_agent,
    head_orientation_agent,
    operator_agent,
    repulsion_agent,
    visibility_agent,
)
from ..blackboard import (
    AgentDescriptor,
    Blackboard,
    TickLog,
    WorldState,
    occlusion_lengths,
    rebuild_cone,
    world_criteria,
)
from ..constraints import ContactProbe, HalfSpace, assemble_contacts, solve_lcp, step_constrained
from ..dynamics import JointDynamics
from ..guides import (
    GuideHandle,
    GuideMetrics,
    SpotlightGuide,
    ToolPose,
    ToolVelocity,
    VirtualMechanism,
    attach_guide,
    guide_angle_error,
    guide_wrench,
    spring_energy,
)
from ..kinematics import RobotModel, robot_fk, robot_jacobian
from .replay import ReplayTrack, load_replay_track, noisy_replay_track, replay_trajectory
from .scenario import AgentSpec, ArmConfig, Scenario, ToolConfig

DEFAULT_REACH_RADIUS = 0.05

_AGENT_FACTORIES: dict[str, Callable] = {
    "attraction": attraction_agent,
    "repulsion": repulsion_agent,
    "head": head_orientation_agent,
    "visibility": visibility_agent,
}


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


@dataclass
class _ArmState:
    """Constrained planar arm in the vertical x-z plane."""

    config: ArmConfig
    dynamics: JointDynamics
    model: RobotModel
    probe: ContactProbe
    half_spaces: tuple[HalfSpace, ...]
    task_energy: float = 0.0
    max_penetration: float = 0.0


@dataclass
class _ToolState:
    """Free first-order tool plus its guides."""

    config: ToolConfig
    track: ReplayTrack
    position: np.ndarray
    rotation: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    slide_handles: list[GuideHandle] = field(default_factory=list)
    spotlights: list[SpotlightGuide] = field(default_factory=list)
    metrics: GuideMetrics = field(default_factory=GuideMetrics)
    guide_energy: float = 0.0
    guide_energy_max: float = 0.0
    attach_energy: float = 0.0


def _build_blackboard(scenario: Scenario) -> tuple[Blackboard, OperatorQueue | None]:
    world = WorldState(
        manikin=scenario.manikin,
        target=scenario.target,
        scene=scenario.scene,
        robot=scenario.robot,
        cone=rebuild_cone(
            scenario.manikin,
            scenario.cone.aperture,
            length=scenario.cone.length,
            eps_min=scenario.cone.eps_min,
            eps_max=scenario.cone.eps_max,
        ),
    )
    board = Blackboard(world)
    queue: OperatorQueue | None = None
    for spec in scenario.agents:
        if spec.kind == "operator":
            queue = queue or OperatorQueue()
            step_fn = operator_agent(queue)
        else:
            step_fn = _AGENT_FACTORIES[spec.kind](**spec.params)
        board.register_agent(
            AgentDescriptor(name=spec.name, rate=spec.rate, enabled=spec.enabled, d_pos=spec.d_pos, d_or=spec.d_or),
            step_fn,
        )
    return board, queue


def _build_arm(config: ArmConfig, dt: float) -> _ArmState:
    model = RobotModel(link_lengths=config.link_lengths, q=config.q0)

    def position(q: np.ndarray) -> np.ndarray:
        pose = robot_fk(replace(model, q=q))
        return np.array([pose.x, pose.y])

    def jacobian(q: np.ndarray) -> np.ndarray:
        return robot_jacobian(replace(model, q=q))[:2]

    return _ArmState(
        config=config,
        dynamics=JointDynamics(q=config.q0, B_a=np.diag(config.damping), dt=dt),
        model=model,
        probe=ContactProbe("end_effector", position, jacobian),
        half_spaces=tuple(HalfSpace(normal=n, offset=o) for n, o in config.half_spaces),
    )


def _build_tool(scenario: Scenario) -> _ToolState:
    config = scenario.tool
    rc = config.replay
    if rc.file is not None:
        track = load_replay_track(Path(scenario.source).parent / rc.file)
    else:
        track = noisy_replay_track(
            seed=rc.seed,
            start=rc.start,
            end=rc.end,
            duration=rc.duration,
            sample_hz=rc.sample_hz,
            noise_pos=rc.noise_pos,
            noise_rot=rc.noise_rot,
            base_rotvec=rc.base_rotvec,
        )
    state = _ToolState(
        config=config,
        track=track,
        position=config.start_position.copy(),
        rotation=Rotation.from_rotvec(config.start_rotvec).as_matrix(),
    )
    pose = ToolPose(state.position, state.rotation)
    for spec in scenario.guides:
        if spec.kind == "slide":
            mech = VirtualMechanism(
                axis_origin=spec.axis_origin,
                axis_direction=spec.axis_direction,
                target_orientation=Rotation.from_rotvec(spec.target_rotvec).as_matrix(),
                stiffness_pos=spec.stiffness_pos,
                stiffness_rot=spec.stiffness_rot,
                damping_pos=spec.damping_pos,
                damping_rot=spec.damping_rot,
                mech_damping=spec.mech_damping,
            )
            handle = attach_guide(mech, pose)
            state.slide_handles.append(handle)
            state.attach_energy += spring_energy(handle, pose)
        else:
            guide = SpotlightGuide(
                aim_point=spec.aim_point,
                tool_axis_local=config.axis_local,
                stiffness_rot=spec.stiffness_rot,
                damping_rot=spec.damping_rot,
                damping_pos=spec.damping_pos,
            )
            state.spotlights.append(guide)
            state.attach_energy += guide.potential(pose)
    return state


class SimEngine:
    """Steps one scenario tick by tick and accumulates the tick log."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.tick = 0
        self.board: Blackboard | None = None
        self.operator_queue: OperatorQueue | None = None
        self.arm: _ArmState | None = None
        self.tool: _ToolState | None = None
        if scenario.agents:
            self.board, self.operator_queue = _build_blackboard(scenario)
        if scenario.arm is not None:
            self.arm = _build_arm(scenario.arm, scenario.dt)
        if scenario.tool is not None:
            self.tool = _build_tool(scenario)
        self.header = self._build_header()
        self.rows: list[list[str]] = []
        self.last_record: TickLog | None = None
        self.dropped_inputs = 0
        self.failure: str | None = None
        self.pending_target = None

    def _build_header(self) -> list[str]:
        cols = ["tick", "time"]
        if self.board is not None:
            cols += [
                "trunk_x",
                "trunk_y",
                "trunk_theta",
                "head_alpha",
                "head_beta",
                "head_theta_b",
                "cone_aperture",
                "collision_length",
                "st_occlusion",
                "cone_occlusion",
                "distance",
                "failures",
                "dropped_inputs",
            ]
            if self.board.world.robot is not None:
                cols += [f"robot_q{i}" for i in range(self.board.world.robot.n_joints)]
        if self.arm is not None:
            cols += [f"arm_q{i}" for i in range(len(self.arm.dynamics.q))]
            cols += ["arm_penetration", "arm_contacts", "arm_task_energy"]
        if self.tool is not None:
            cols += ["tool_x", "tool_y", "tool_z", "tool_rx", "tool_ry", "tool_rz", "guide_angle", "guide_energy"]
            cols += [f"guide_s{i}" for i in range(len(self.tool.slide_handles))]
        return cols

    @property
    def time(self) -> float:
        return self.tick * self.scenario.dt

    def _step_blackboard(self, row: list[str]) -> None:
        board = self.board
        next_tick = board.world.tick + 1
        scripted = self.scenario.operator_script.get(next_tick)
        if scripted is not None and self.operator_queue is not None:
            self.operator_queue.push(scripted)
        record = board.tick()
        self.last_record = record
        if self.operator_queue is not None:
            self.dropped_inputs = self.operator_queue.dropped_total
        world = board.world
        seg, cone_occ = occlusion_lengths(world)
        row += [
            _format_cell(world.manikin.trunk.x),
            _format_cell(world.manikin.trunk.y),
            _format_cell(world.manikin.trunk.theta),
            _format_cell(float(world.manikin.q_b[0])),
            _format_cell(float(world.manikin.q_b[1])),
            _format_cell(float(world.manikin.q_b[2])),
            _format_cell(world.cone.aperture),
            _format_cell(record.collision_length),
            _format_cell(seg),
            _format_cell(cone_occ),
            _format_cell(record.distance_to_target),
            ";".join(f"{name}:{msg}" for name, msg in sorted(record.failures.items())),
            str(self.dropped_inputs),
        ]
        if world.robot is not None:
            row += [_format_cell(float(v)) for v in world.robot.q]

    def _arm_torque(self) -> Callable[[np.ndarray], np.ndarray]:
        arm = self.arm
        K = np.diag(arm.config.task_stiffness)
        x_d = arm.config.task_target

        def gamma(q: np.ndarray) -> np.ndarray:
            pose = robot_fk(replace(arm.model, q=q))
            J = robot_jacobian(replace(arm.model, q=q))[:2]
            return J.T @ (K @ (x_d - np.array([pose.x, pose.y])))

        return gamma

    def _step_arm(self, row: list[str]) -> None:
        arm = self.arm
        gamma = self._arm_torque()
        contact_set, problem = assemble_contacts(
            arm.dynamics,
            gamma,
            probes=(arm.probe,),
            half_spaces=arm.half_spaces,
            joint_limits=arm.config.joint_limits,
        )
        forces = None
        if len(contact_set):
            forces, _, _ = solve_lcp(problem)
        q_old = arm.dynamics.q
        q_new = step_constrained(arm.dynamics, gamma, (contact_set, problem), forces=forces)
        dt = arm.dynamics.dt
        q_dot = (q_new - q_old) / dt
        pose = robot_fk(replace(arm.model, q=q_old))
        J = robot_jacobian(replace(arm.model, q=q_old))[:2]
        wrench = np.diag(arm.config.task_stiffness) @ (arm.config.task_target - np.array([pose.x, pose.y]))
        arm.task_energy += float(wrench @ (J @ q_dot)) * dt
        arm.dynamics = replace(arm.dynamics, q=q_new)
        point = arm.probe.position(q_new)
        gaps = [hs.gap(point) for hs in arm.half_spaces]
        penetration = max(0.0, -min(gaps)) if gaps else 0.0
        arm.max_penetration = max(arm.max_penetration, penetration)
        row += [_format_cell(float(v)) for v in q_new]
        row += [_format_cell(penetration), str(len(contact_set)), _format_cell(arm.task_energy)]

    def _step_tool(self, row: list[str]) -> None:
        tool = self.tool
        config = tool.config
        dt = self.scenario.dt
        p, R = tool.position, tool.rotation
        pose = ToolPose(p, R)
        p_d, R_d = replay_trajectory(tool.track, self.time)
        force_track = config.track_stiffness_pos * (p_d - p)
        torque_track = config.track_stiffness_rot * Rotation.from_matrix(R_d @ R.T).as_rotvec()

        # The force balance is implicit in the new velocity so stiff guide
        # dampers cannot destabilize the first-order tool.
        A = config.damping_linear * np.eye(3)
        rhs = force_track.copy()
        torque_denominator = config.damping_angular
        torque_rhs = torque_track.copy()
        for handle in tool.slide_handles:
            mech = handle.mechanism
            a = mech.axis_direction
            e = p - mech.point_at(handle.s)
            share = mech.damping_pos / (mech.mech_damping + mech.damping_pos)
            A += mech.damping_pos * (np.eye(3) - share * np.outer(a, a))
            rhs += -mech.stiffness_pos * e + share * mech.stiffness_pos * float(a @ e) * a
            torque_denominator += mech.damping_rot
            torque_rhs += mech.stiffness_rot * Rotation.from_matrix(mech.target_orientation @ R.T).as_rotvec()
        for guide in tool.spotlights:
            A += guide.damping_pos * np.eye(3)
            torque_denominator += guide.damping_rot
            passive = guide.wrench(pose, ToolVelocity())
            rhs += passive.force
            torque_rhs += passive.torque
        v_new = np.linalg.solve(A, rhs)
        w_new = torque_rhs / torque_denominator
        velocity = ToolVelocity(v_new, w_new)

        power = 0.0
        new_handles = []
        for handle in tool.slide_handles:
            wrench, handle = guide_wrench(handle, pose, velocity, dt)
            power += float(wrench.force @ v_new + wrench.torque @ w_new)
            new_handles.append(handle)
        tool.slide_handles = new_handles
        for guide in tool.spotlights:
            wrench = guide.wrench(pose, velocity)
            power += float(wrench.force @ v_new + wrench.torque @ w_new)
        tool.guide_energy += power * dt
        tool.guide_energy_max = max(tool.guide_energy_max, tool.guide_energy)

        tool.position = p + v_new * dt
        tool.rotation = Rotation.from_rotvec(w_new * dt).as_matrix() @ R
        tool.velocity, tool.omega = v_new, w_new
        angle = guide_angle_error(tool.rotation @ config.axis_local, config.ideal_axis)
        tool.metrics = tool.metrics.record(angle)

        rotvec = Rotation.from_matrix(tool.rotation).as_rotvec()
        row += [_format_cell(float(v)) for v in tool.position]
        row += [_format_cell(float(v)) for v in rotvec]
        row += [_format_cell(angle), _format_cell(tool.guide_energy)]
        row += [_format_cell(h.s) for h in tool.slide_handles]

    def step(self) -> list[str]:
        """Advance every section one tick and append the log row."""
        self.tick += 1
        row = [str(self.tick), _format_cell(self.time)]
        if self.board is not None:
            self._step_blackboard(row)
        if self.arm is not None:
            self._step_arm(row)
        if self.tool is not None:
            self._step_tool(row)
        self.rows.append(row)
        return row

    def ticklog_bytes(self) -> bytes:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(self.header)
        writer.writerows(self.rows)
        return buffer.getvalue().encode()

    def metrics(self) -> dict:
        """Summary of the run so far."""
        out: dict = {"scenario": self.scenario.name, "ticks_run": self.tick}
        out["failed"] = self.failure is not None
        if self.failure is not None:
            out["failure"] = self.failure
        if self.board is not None:
            world = self.board.world
            coll, occ, dist = world_criteria(world)
            seg, cone_occ = occlusion_lengths(world)
            reach = DEFAULT_REACH_RADIUS
            for spec in self.scenario.agents:
                if spec.kind == "attraction" and "stop_radius" in spec.params:
                    reach = float(spec.params["stop_radius"])
            out.update(
                {
                    "reached": dist <= reach,
                    "final_distance": dist,
                    "final_collision_length": coll,
                    "final_occlusion": occ,
                    "final_st_occlusion": seg,
                    "final_cone_occlusion": cone_occ,
                    "final_cone_aperture": world.cone.aperture,
                    "dropped_inputs": self.dropped_inputs,
                }
            )
        if self.arm is not None:
            out.update(
                {
                    "arm_max_penetration": self.arm.max_penetration,
                    "arm_task_energy": self.arm.task_energy,
                }
            )
        if self.tool is not None:
            out.update(
                {
                    "guide_angle_rms": self.tool.metrics.rms,
                    "guide_energy": self.tool.guide_energy,
                    "guide_energy_max": self.tool.guide_energy_max,
                    "guide_attach_energy": self.tool.attach_energy,
                }
            )
        return out


@dataclass(frozen=True)
class RunResult:
    scenario: Scenario
    world: WorldState | None
    ticklog: bytes
    metrics: dict


def run_headless(
    scenario: Scenario,
    log_path: str | Path | None = None,
    metrics_path: str | Path | None = None,
    tick_limit: int | None = None,
) -> RunResult:
    """Run a scenario to completion as fast as the machine allows.

    A numeric failure mid-run stops the loop; the summary then carries the
    failing tick and cause instead of silently truncated results.
    """
    engine = SimEngine(scenario)
    ticks = scenario.ticks if tick_limit is None else min(scenario.ticks, tick_limit)
    for _ in range(ticks):
        try:
            engine.step()
        except Exception as exc:  # noqa: BLE001 - the cause lands in the summary
            engine.failure = f"tick {engine.tick}: {exc}"
            break
    metrics = engine.metrics()
    ticklog = engine.ticklog_bytes()
    if log_path is not None:
        Path(log_path).write_bytes(ticklog)
    if metrics_path is not None:
        with open(metrics_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["key", "value"])
            for key, value in metrics.items():
                writer.writerow([key, _format_cell(value)])
    world = engine.board.world if engine.board is not None else None
    return RunResult(scenario=scenario, world=world, ticklog=ticklog, metrics=metrics)
