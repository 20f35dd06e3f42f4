"""Shared world state and the tick scheduler that agents post moves to.

The blackboard pattern: agents never talk to each other.  Each tick the
scheduler snapshots the world, asks every agent whose activity period
divides the tick for a raw contribution, normalizes each one against the
posting agent's translation and rotation bounds, sums them, and applies
the sum to the world (clamping joints, wrapping angles, rebuilding the
vision cone).  The per-tick record keeps both raw and normalized moves so
a run can be audited agent by agent.

Ticks are numbered from 1, so an agent with period ``rate`` fires on
ticks rate, 2*rate, ... and activates exactly floor(T / rate) times over
the first T ticks.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .geometry import (
    Cone,
    PlanarPose,
    Scene,
    cone_occlusion_length,
    polygon_overlap_length,
    segment_occlusion_length,
    Segment3,
)
from .kinematics import ManikinModel, RobotModel, Target, clamp_to_limits, manikin_eye_frame

log = logging.getLogger(__name__)

DEFAULT_DELTA_POS = 0.01   # meters per activation
DEFAULT_DELTA_OR = 0.05    # radians per angle per activation


@dataclass(frozen=True)
class WorldState:
    """Everything agents may read: the sole medium between them."""

    manikin: ManikinModel
    target: Target
    scene: Scene = field(default_factory=Scene)
    robot: RobotModel | None = None
    cone: Cone | None = None
    tick: int = 0
    manipulated_object: PlanarPose | None = None

    def __post_init__(self) -> None:
        if self.tick < 0:
            raise ValueError("tick must be nonnegative")
        if self.cone is None:
            object.__setattr__(self, "cone", rebuild_cone(self.manikin, math.radians(10.0)))


def rebuild_cone(
    manikin: ManikinModel,
    aperture: float,
    length: float = 1.0,
    eps_min: float = math.radians(2.0),
    eps_max: float = math.radians(30.0),
) -> Cone:
    """Vision cone anchored at the eye, along the gaze, with given aperture."""
    eye, axis = manikin_eye_frame(manikin)
    return Cone(
        vertex=eye,
        axis=axis,
        aperture=min(max(aperture, eps_min), eps_max),
        length=length,
        eps_min=eps_min,
        eps_max=eps_max,
    )


def sight_segment(world: WorldState) -> Segment3:
    """Straight sight line from the eye to the target point."""
    eye, _ = manikin_eye_frame(world.manikin)
    return Segment3(eye, world.target.position)


def collision_length(manikin: ManikinModel, scene: Scene) -> float:
    """Total intersection perimeter between the footprint and all obstacles."""
    footprint = manikin.world_footprint()
    return sum(polygon_overlap_length(footprint, obs) for obs in scene.polygons)


def occlusion_lengths(world: WorldState) -> tuple[float, float]:
    """(sight-segment, cone) occluded lengths against the scene boxes."""
    seg = segment_occlusion_length(sight_segment(world), world.scene.boxes)
    cone = cone_occlusion_length(world.cone, world.scene.boxes)
    return seg, cone


def world_criteria(world: WorldState) -> tuple[float, float, float]:
    """(collision length, total occlusion, floor distance to target)."""
    coll = collision_length(world.manikin, world.scene)
    seg, cone = occlusion_lengths(world)
    dist = float(
        math.hypot(
            world.manikin.trunk.x - world.target.position[0],
            world.manikin.trunk.y - world.target.position[1],
        )
    )
    return coll, seg + cone, dist


@dataclass(frozen=True)
class Contribution:
    """One agent's proposed move, expressed as state deltas.

    ``d_trunk`` is (dx, dy, dtheta) of the trunk, ``d_head`` is
    (dalpha, dbeta, dtheta_b) of the head joints, ``d_joints`` optional
    robot joint deltas, ``d_cone`` a vision-aperture delta.
    """

    d_trunk: np.ndarray = field(default_factory=lambda: np.zeros(3))
    d_head: np.ndarray = field(default_factory=lambda: np.zeros(3))
    d_joints: np.ndarray | None = None
    d_cone: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "d_trunk", np.asarray(self.d_trunk, dtype=float).reshape(3))
        object.__setattr__(self, "d_head", np.asarray(self.d_head, dtype=float).reshape(3))
        if self.d_joints is not None:
            object.__setattr__(self, "d_joints", np.asarray(self.d_joints, dtype=float).ravel())

    def is_finite(self) -> bool:
        parts = [self.d_trunk, self.d_head, [self.d_cone]]
        if self.d_joints is not None:
            parts.append(self.d_joints)
        return all(np.all(np.isfinite(p)) for p in parts)


ZERO_CONTRIBUTION = Contribution()


@dataclass
class AgentDescriptor:
    """Identity and scheduling/normalization parameters of one agent."""

    name: str
    rate: int = 1
    enabled: bool = True
    d_pos: float = DEFAULT_DELTA_POS
    d_or: float = DEFAULT_DELTA_OR

    def __post_init__(self) -> None:
        _validate_control(rate=self.rate, d_pos=self.d_pos, d_or=self.d_or)


def _validate_control(rate=None, d_pos=None, d_or=None, enabled=None) -> None:
    if rate is not None and (not isinstance(rate, (int, np.integer)) or rate < 1):
        raise ValueError(f"rate must be a positive integer, got {rate!r}")
    if d_pos is not None and not (isinstance(d_pos, (int, float)) and d_pos > 0 and math.isfinite(d_pos)):
        raise ValueError(f"d_pos must be positive and finite, got {d_pos!r}")
    if d_or is not None and not (isinstance(d_or, (int, float)) and d_or > 0 and math.isfinite(d_or)):
        raise ValueError(f"d_or must be positive and finite, got {d_or!r}")
    if enabled is not None and not isinstance(enabled, bool):
        raise ValueError(f"enabled must be a boolean, got {enabled!r}")


def normalize_contribution(raw: Contribution, d_pos: float, d_or: float) -> Contribution:
    """Bound a raw contribution: translation rescaled, angles clamped.

    The translation keeps its direction (rescaled onto the d_pos ball);
    every angular component (trunk heading, head joints, robot joints,
    cone aperture) is clamped independently to [-d_or, d_or].
    """
    if d_pos <= 0 or d_or <= 0:
        raise ValueError("normalization bounds must be positive")
    if not raw.is_finite():
        raise ValueError("raw contribution has non-finite components")
    d_trunk = raw.d_trunk.copy()
    norm = math.hypot(d_trunk[0], d_trunk[1])
    if norm > d_pos:
        d_trunk[:2] *= d_pos / norm
    d_trunk[2] = min(max(d_trunk[2], -d_or), d_or)
    d_head = np.clip(raw.d_head, -d_or, d_or)
    d_joints = None if raw.d_joints is None else np.clip(raw.d_joints, -d_or, d_or)
    d_cone = min(max(raw.d_cone, -d_or), d_or)
    return Contribution(d_trunk=d_trunk, d_head=d_head, d_joints=d_joints, d_cone=d_cone)


StepFn = Callable[[WorldState], Contribution]


@dataclass
class RegisteredAgent:
    descriptor: AgentDescriptor
    step_fn: StepFn


@dataclass(frozen=True)
class TickLog:
    """One tick's audit record: who fired, what they asked, what applied."""

    tick: int
    raw: Mapping[str, Contribution]
    normalized: Mapping[str, Contribution]
    applied: Contribution
    failures: Mapping[str, str]
    collision_length: float
    occlusion_length: float
    distance_to_target: float


def _sum_contributions(
    normalized: Mapping[str, Contribution], n_joints: int | None
) -> Contribution:
    # Sum in name order so the result is independent of registration order.
    d_trunk = np.zeros(3)
    d_head = np.zeros(3)
    d_joints = np.zeros(n_joints) if n_joints else None
    d_cone = 0.0
    for name in sorted(normalized):
        c = normalized[name]
        d_trunk += c.d_trunk
        d_head += c.d_head
        d_cone += c.d_cone
        if c.d_joints is not None and d_joints is not None:
            if len(c.d_joints) != n_joints:
                raise ValueError(f"agent {name!r} posted {len(c.d_joints)} joint deltas, robot has {n_joints}")
            d_joints += c.d_joints
    return Contribution(d_trunk=d_trunk, d_head=d_head, d_joints=d_joints, d_cone=d_cone)


def apply_contribution(world: WorldState, applied: Contribution) -> WorldState:
    """New world with the summed delta applied and all invariants restored."""
    manikin = world.manikin
    trunk = manikin.trunk.moved(*applied.d_trunk)
    q_b, _ = clamp_to_limits(manikin.q_b + applied.d_head, manikin.limits)
    manikin = replace(manikin, trunk=trunk, q_b=q_b)

    robot = world.robot
    if robot is not None and applied.d_joints is not None:
        q, _ = clamp_to_limits(robot.q + applied.d_joints, robot.limits)
        robot = robot.with_joints(q)

    cone = rebuild_cone(
        manikin,
        world.cone.aperture + applied.d_cone,
        length=world.cone.length,
        eps_min=world.cone.eps_min,
        eps_max=world.cone.eps_max,
    )
    return replace(world, manikin=manikin, robot=robot, cone=cone)


def run_tick(world: WorldState, agents: Sequence[RegisteredAgent]) -> tuple[WorldState, TickLog]:
    """Advance the world by one tick.

    Fires every enabled agent whose period divides the new tick number,
    normalizes and sums their contributions, applies the sum, and logs the
    post-apply criterion values.  A failing agent is skipped and recorded;
    the tick still completes.
    """
    tick = world.tick + 1
    raw: dict[str, Contribution] = {}
    normalized: dict[str, Contribution] = {}
    failures: dict[str, str] = {}
    for agent in agents:
        desc = agent.descriptor
        if not desc.enabled or tick % desc.rate != 0:
            continue
        try:
            contribution = agent.step_fn(world)
            normalized[desc.name] = normalize_contribution(contribution, desc.d_pos, desc.d_or)
            raw[desc.name] = contribution
        except Exception as exc:  # noqa: BLE001 - one bad agent must not kill the loop
            failures[desc.name] = f"{type(exc).__name__}: {exc}"
            log.warning("agent %s failed on tick %d: %s", desc.name, tick, exc)

    n_joints = world.robot.n_joints if world.robot is not None else None
    applied = _sum_contributions(normalized, n_joints)
    new_world = replace(apply_contribution(world, applied), tick=tick)
    coll, occl, dist = world_criteria(new_world)
    record = TickLog(
        tick=tick,
        raw=raw,
        normalized=normalized,
        applied=applied,
        failures=failures,
        collision_length=coll,
        occlusion_length=occl,
        distance_to_target=dist,
    )
    return new_world, record


class Blackboard:
    """Owns the world and the agent roster; the single logical writer.

    Control changes (pause, rate, bounds) are queued and applied at the
    next tick boundary so a tick never sees a half-updated roster.
    """

    def __init__(self, world: WorldState):
        self.world = world
        self._agents: dict[str, RegisteredAgent] = {}
        self._pending: list[tuple[str, dict]] = []

    @property
    def agents(self) -> tuple[RegisteredAgent, ...]:
        return tuple(self._agents.values())

    def register_agent(self, descriptor: AgentDescriptor, step_fn: StepFn) -> str:
        if descriptor.name in self._agents:
            raise ValueError(f"agent {descriptor.name!r} already registered")
        self._agents[descriptor.name] = RegisteredAgent(descriptor, step_fn)
        return descriptor.name

    def descriptor(self, handle: str) -> AgentDescriptor:
        return self._agents[handle].descriptor

    def set_agent_control(
        self,
        handle: str,
        enabled: bool | None = None,
        rate: int | None = None,
        d_pos: float | None = None,
        d_or: float | None = None,
    ) -> dict:
        """Queue a control change; returns the acknowledgment.

        Validation happens now (bad values are rejected and nothing is
        queued); the change itself lands at the next tick boundary.
        """
        if handle not in self._agents:
            raise KeyError(f"unknown agent {handle!r}")
        _validate_control(rate=rate, d_pos=d_pos, d_or=d_or, enabled=enabled)
        changes = {
            k: v
            for k, v in (("enabled", enabled), ("rate", rate), ("d_pos", d_pos), ("d_or", d_or))
            if v is not None
        }
        if changes:
            self._pending.append((handle, changes))
        return {"agent": handle, "changes": changes, "effective_tick": self.world.tick + 1}

    def _apply_pending(self) -> None:
        for handle, changes in self._pending:
            desc = self._agents[handle].descriptor
            for key, value in changes.items():
                setattr(desc, key, value)
        self._pending.clear()

    def tick(self) -> TickLog:
        """Apply queued control changes, then run one tick."""
        self._apply_pending()
        self.world, record = run_tick(self.world, self.agents)
        return record
