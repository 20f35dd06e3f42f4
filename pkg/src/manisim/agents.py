"""The five elementary agents that steer the manikin and robot.

Each agent is a pure function of the world state (plus, for the operator,
its own input queue) returning a raw contribution; the blackboard
normalizes and sums.  Attraction walks toward the target, repulsion
descends the collision criterion, head orientation tracks the target with
the gaze, visibility descends the occlusion criteria and adapts the
vision-cone aperture, and the operator forwards live steering input.

The factory functions at the bottom bind configuration into step
callables of the shape the blackboard expects.
"""

from __future__ import annotations

import collections
import logging
import math
import threading
from dataclasses import dataclass, replace

import numpy as np

from .blackboard import Contribution, WorldState
from .geometry import (
    Cone,
    CriterionEvaluationError,
    DEFAULT_CONE_RAYS,
    DEFAULT_FD_STEPS,
    PlanarPose,
    Segment3,
    cone_occlusion_length,
    finite_diff_gradient,
    polygon_overlap_length,
    segment_occlusion_length,
    wrap_angle,
)
from .kinematics import (
    OutOfReachError,
    clamp_to_limits,
    eye_frame_at,
    ik_planar_preserving_aspect,
    robot_aspect_of,
)

log = logging.getLogger(__name__)

DEFAULT_STOP_RADIUS = 0.05     # meters; freeze translation this close to the target
DEFAULT_HEAD_GAIN = 1.0        # rad of raw delta per rad of gaze error
DEFAULT_APERTURE_STEP = math.radians(1.0)   # aperture change per activation
ON_AXIS_TOLERANCE = 1e-9       # rad; below this the gaze counts as on target


# ---------------------------------------------------------------------------
# Attraction
# ---------------------------------------------------------------------------


def attraction_step(world: WorldState, stop_radius: float = DEFAULT_STOP_RADIUS) -> Contribution:
    """Move trunk (and robot arm) toward the target; align the heading.

    The raw translation is the full floor-plane vector to the target
    (normalization bounds the step); the heading delta is the shortest
    rotation bringing the trunk forward axis onto that vector.  Inside the
    stop radius translation freezes so the agent does not chatter around
    the goal.
    """
    trunk = world.manikin.trunk
    to_target = world.target.xy - np.array([trunk.x, trunk.y])
    dist = float(np.linalg.norm(to_target))
    d_trunk = np.zeros(3)
    if dist > stop_radius:
        d_trunk[:2] = to_target
    if dist > 1e-12:
        # Trunk forward axis is (-sin theta, cos theta); shortest rotation onto u.
        forward = np.array([-math.sin(trunk.theta), math.cos(trunk.theta)])
        d_trunk[2] = math.atan2(
            forward[0] * to_target[1] - forward[1] * to_target[0],
            float(forward @ to_target),
        )

    d_joints = None
    robot = world.robot
    if robot is not None:
        model = robot
        if robot.n_joints == 2 and abs(robot.q[1]) >= 1e-12:
            model = replace(robot, aspect=robot_aspect_of(robot.q))
        try:
            q_goal, _ = ik_planar_preserving_aspect(model, world.target.xy)
        except OutOfReachError as exc:
            q_goal, _ = ik_planar_preserving_aspect(model, exc.closest)
        d_joints = np.array([wrap_angle(d) for d in q_goal - robot.q])
    return Contribution(d_trunk=d_trunk, d_joints=d_joints)


# ---------------------------------------------------------------------------
# Repulsion
# ---------------------------------------------------------------------------


def _total_overlap(world: WorldState, trunk: PlanarPose) -> float:
    footprint = world.manikin.footprint.transformed(trunk)
    return sum(polygon_overlap_length(footprint, obs) for obs in world.scene.polygons)


def repulsion_step(world: WorldState, fd_steps=DEFAULT_FD_STEPS) -> Contribution:
    """Push the trunk down the gradient of the collision criterion.

    Exactly zero while the footprint is clear of every obstacle; a failed
    gradient evaluation degrades to a zero move rather than killing the
    tick.
    """
    if _total_overlap(world, world.manikin.trunk) == 0.0:
        return Contribution()
    try:
        grad = finite_diff_gradient(
            lambda pose: _total_overlap(world, pose), world.manikin.trunk, fd_steps
        )
    except CriterionEvaluationError as exc:
        log.warning("repulsion gradient failed at %s: %s", world.manikin.trunk, exc)
        return Contribution()
    return Contribution(d_trunk=-grad)


# ---------------------------------------------------------------------------
# Head orientation
# ---------------------------------------------------------------------------


def _gaze_errors(world: WorldState) -> tuple[float, float, float]:
    """(pitch error, yaw error, distance) of the gaze relative to the target."""
    m = world.manikin
    eye, _ = eye_frame_at(m.trunk, m.trunk_height, m.eye_offset, m.q_b)
    u = world.target.position - eye
    dist = float(np.linalg.norm(u))
    c, s = math.cos(-m.trunk.theta), math.sin(-m.trunk.theta)
    ux = c * u[0] - s * u[1]
    uy = s * u[0] + c * u[1]
    yaw_goal = math.atan2(-ux, uy)
    pitch_goal = math.atan2(u[2], math.hypot(ux, uy))
    alpha, _, theta_b = m.q_b
    return pitch_goal - alpha, wrap_angle(yaw_goal - theta_b), dist


def head_orientation_step(world: WorldState, gain: float = DEFAULT_HEAD_GAIN) -> Contribution:
    """Rotate the head so the gaze meets the target; relax when it does.

    Pitch and yaw deltas are proportional to the decomposed gaze error.
    Once the target sits on the vision axis the head instead drifts toward
    the neutral posture, which models visual comfort.  The roll joint is
    never touched.  Deltas are pre-shrunk so the post-step joints stay
    inside their limits.
    """
    m = world.manikin
    e_pitch, e_yaw, _ = _gaze_errors(world)
    if max(abs(e_pitch), abs(e_yaw)) <= ON_AXIS_TOLERANCE:
        d_head = np.array([-gain * m.q_b[0], 0.0, -gain * m.q_b[2]])
    else:
        d_head = np.array([gain * e_pitch, 0.0, gain * e_yaw])
    reachable, _ = clamp_to_limits(m.q_b + d_head, m.limits)
    return Contribution(d_head=reachable - m.q_b)


# ---------------------------------------------------------------------------
# Visibility
# ---------------------------------------------------------------------------


def _occlusion_parts(
    world: WorldState, trunk: PlanarPose, q_b, aperture: float, n_rays: int
) -> tuple[float, float]:
    """(sight-segment, cone) occlusion for hypothetical trunk/head values."""
    m = world.manikin
    eye, axis = eye_frame_at(trunk, m.trunk_height, m.eye_offset, q_b)
    seg = segment_occlusion_length(Segment3(eye, world.target.position), world.scene.boxes)
    cone = Cone(
        vertex=eye,
        axis=axis,
        aperture=aperture,
        length=world.cone.length,
        eps_min=world.cone.eps_min,
        eps_max=world.cone.eps_max,
    )
    return seg, cone_occlusion_length(cone, world.scene.boxes, n_rays)


def _aperture_delta(world: WorldState, step: float) -> float:
    """Widen while the gaze holds the target, narrow otherwise.

    The widening cap adapts to the apparent target size: a distant or
    small target does not justify a wide cone.
    """
    m = world.manikin
    eye, axis = eye_frame_at(m.trunk, m.trunk_height, m.eye_offset, m.q_b)
    u = world.target.position - eye
    dist = float(np.linalg.norm(u))
    cone = world.cone
    apparent = math.atan2(world.target.size, dist) if dist > 0 else cone.eps_max
    eff_max = max(cone.eps_min, min(cone.eps_max, apparent))
    if dist > 0 and math.acos(min(1.0, max(-1.0, float(axis @ u) / dist))) <= cone.aperture:
        goal = min(cone.aperture + step, eff_max)
    else:
        goal = max(cone.aperture - step, cone.eps_min)
    return goal - cone.aperture


def visibility_step(
    world: WorldState,
    fd_steps=DEFAULT_FD_STEPS,
    aperture_step: float = DEFAULT_APERTURE_STEP,
    n_rays: int = DEFAULT_CONE_RAYS,
) -> Contribution:
    """Keep the sight line and vision cone clear of occluders.

    When anything occludes the sight segment or the cone, the trunk
    descends the total occlusion criterion and the head descends the cone
    term (the eye point, and with it the sight segment, does not move with
    the head joints).  The aperture delta applies whether or not there is
    occlusion.
    """
    m = world.manikin
    seg0, cone0 = _occlusion_parts(world, m.trunk, m.q_b, world.cone.aperture, n_rays)
    d_cone = _aperture_delta(world, aperture_step)
    if seg0 + cone0 == 0.0:
        return Contribution(d_cone=d_cone)

    grad = finite_diff_gradient(
        lambda pose: sum(_occlusion_parts(world, pose, m.q_b, world.cone.aperture, n_rays)),
        m.trunk,
        fd_steps,
    )
    h = fd_steps[2]
    d_head = np.zeros(3)
    for out_idx, joint_idx in ((0, 0), (2, 2)):
        q_hi, q_lo = m.q_b.copy(), m.q_b.copy()
        q_hi[joint_idx] += h
        q_lo[joint_idx] -= h
        f_hi = _occlusion_parts(world, m.trunk, q_hi, world.cone.aperture, n_rays)[1]
        f_lo = _occlusion_parts(world, m.trunk, q_lo, world.cone.aperture, n_rays)[1]
        d_head[out_idx] = -(f_hi - f_lo) / (2.0 * h)
    return Contribution(d_trunk=-grad, d_head=d_head, d_cone=d_cone)


# ---------------------------------------------------------------------------
# Operator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OperatorInput:
    """One live steering sample: planar translation plus heading delta."""

    d_pos: np.ndarray
    d_theta: float = 0.0
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        d_pos = np.asarray(self.d_pos, dtype=float).reshape(2)
        object.__setattr__(self, "d_pos", d_pos)
        if not (np.all(np.isfinite(d_pos)) and math.isfinite(self.d_theta)):
            raise ValueError("operator input components must be finite")


class OperatorQueue:
    """Ordered hand-off from the input thread to the scheduler.

    The scheduler drains it at tick boundaries and keeps only the newest
    sample; stale ones are counted and dropped, which keeps a laggy input
    stream from replaying old moves.
    """

    def __init__(self) -> None:
        self._items: collections.deque[OperatorInput] = collections.deque()
        self._lock = threading.Lock()
        self.dropped_total = 0

    def push(self, item: OperatorInput) -> None:
        with self._lock:
            self._items.append(item)

    def __len__(self) -> int:
        return len(self._items)

    def drain_latest(self) -> tuple[OperatorInput | None, int]:
        with self._lock:
            if not self._items:
                return None, 0
            latest = self._items.pop()
            dropped = len(self._items)
            self._items.clear()
        self.dropped_total += dropped
        return latest, dropped


def operator_step(world: WorldState, queue: OperatorQueue) -> Contribution:
    """Forward the newest queued operator input as a trunk move."""
    latest, dropped = queue.drain_latest()
    if dropped:
        log.info("operator queue dropped %d stale input(s) on tick %d", dropped, world.tick + 1)
    if latest is None:
        return Contribution()
    return Contribution(d_trunk=[latest.d_pos[0], latest.d_pos[1], latest.d_theta])


# ---------------------------------------------------------------------------
# Factories binding configuration into blackboard step functions
# ---------------------------------------------------------------------------


def attraction_agent(stop_radius: float = DEFAULT_STOP_RADIUS):
    return lambda world: attraction_step(world, stop_radius)


def repulsion_agent(fd_steps=DEFAULT_FD_STEPS):
    return lambda world: repulsion_step(world, fd_steps)


def head_orientation_agent(gain: float = DEFAULT_HEAD_GAIN):
    return lambda world: head_orientation_step(world, gain)


def visibility_agent(
    fd_steps=DEFAULT_FD_STEPS,
    aperture_step: float = DEFAULT_APERTURE_STEP,
    n_rays: int = DEFAULT_CONE_RAYS,
):
    return lambda world: visibility_step(world, fd_steps, aperture_step, n_rays)


def operator_agent(queue: OperatorQueue):
    return lambda world: operator_step(world, queue)
