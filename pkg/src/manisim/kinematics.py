"""Manikin trunk/head skeleton and a planar serial robot.

The manikin is the planner's moving body: a trunk pose on the floor plane,
a neck joint with three rotations (pitch ``alpha``, roll ``beta``, yaw
``theta_b``) under ergonomic limits, and an eye point from which the sight
line and vision cone emanate.  The trunk forward axis is +y in the trunk
frame; the neutral gaze (all head joints at zero) looks along it.

The robot is a planar serial arm on a mobile planar base.  The two-link
arm gets the analytic inverse kinematics with elbow-branch (aspect)
preservation; longer chains fall back to damped-least-squares iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import PlanarPose, Polygon2, wrap_angle

# Head joint order used throughout: (alpha = pitch, beta = roll, theta_b = yaw).
# Defaults stand in for adult ergonomic ranges; scenarios may override them.
DEFAULT_HEAD_LIMITS = (
    (math.radians(-45.0), math.radians(60.0)),   # alpha (pitch)
    (math.radians(-40.0), math.radians(40.0)),   # beta (roll)
    (math.radians(-60.0), math.radians(60.0)),   # theta_b (yaw)
)

ASPECT_ELBOW_UP = 1
ASPECT_ELBOW_DOWN = -1


class OutOfReachError(ValueError):
    """Inverse kinematics target outside the reachable annulus."""

    def __init__(self, target, closest):
        super().__init__(f"target {tuple(target)} unreachable; closest point {tuple(closest)}")
        self.target = np.asarray(target, dtype=float)
        self.closest = np.asarray(closest, dtype=float)


def clamp_to_limits(q, limits) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise clamp of ``q`` into closed intervals ``limits``.

    Returns the clamped vector and a boolean flag per joint marking where a
    limit actually truncated the value (sitting exactly on a limit is fine).
    """
    q = np.asarray(q, dtype=float)
    lims = np.asarray(limits, dtype=float).reshape(-1, 2)
    if np.any(lims[:, 0] >= lims[:, 1]):
        raise ValueError("joint limits must satisfy lo < hi")
    clamped = np.clip(q, lims[:, 0], lims[:, 1])
    violated = clamped != q
    return clamped, violated


@dataclass(frozen=True)
class Target:
    """Point of interest: position in space and a characteristic size."""

    position: np.ndarray
    size: float = 0.05

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        if self.size <= 0:
            raise ValueError("target size must be positive")

    @property
    def xy(self) -> np.ndarray:
        return self.position[:2]


@dataclass(frozen=True)
class ManikinModel:
    """Trunk pose plus head joint state of the manikin.

    ``eye_offset`` is expressed in the trunk frame and raised by
    ``trunk_height``; ``footprint`` is the planar collision silhouette in
    the trunk frame used by the repulsion criterion.
    """

    trunk: PlanarPose = field(default_factory=PlanarPose)
    trunk_height: float = 0.35
    eye_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q_b: np.ndarray = field(default_factory=lambda: np.zeros(3))
    limits: np.ndarray = field(default_factory=lambda: np.asarray(DEFAULT_HEAD_LIMITS, dtype=float))
    footprint: Polygon2 = field(default_factory=lambda: Polygon2.rectangle(0.3, 0.2))

    def __post_init__(self) -> None:
        object.__setattr__(self, "eye_offset", np.asarray(self.eye_offset, dtype=float).reshape(3))
        object.__setattr__(self, "q_b", np.asarray(self.q_b, dtype=float).reshape(3))
        object.__setattr__(self, "limits", np.asarray(self.limits, dtype=float).reshape(3, 2))
        clamped, violated = clamp_to_limits(self.q_b, self.limits)
        if np.any(violated):
            raise ValueError("head joints outside their limits")

    def with_trunk(self, trunk: PlanarPose) -> "ManikinModel":
        return replace(self, trunk=trunk)

    def with_head(self, q_b: np.ndarray) -> "ManikinModel":
        return replace(self, q_b=np.asarray(q_b, dtype=float))

    def world_footprint(self) -> Polygon2:
        return self.footprint.transformed(self.trunk)


def _rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def eye_frame_at(
    trunk: PlanarPose, trunk_height: float, eye_offset, q_b
) -> tuple[np.ndarray, np.ndarray]:
    """Eye point and unit vision axis for explicit trunk/head parameters.

    The vision axis starts along the trunk forward direction (+y of the
    trunk frame) and is rotated by yaw ``theta_b`` about the vertical,
    then pitch ``alpha`` about the lateral axis, then roll ``beta`` about
    the gaze itself (which leaves the axis unchanged).  Head angles are
    taken as given; limit checking belongs to the model, not to this
    kinematic map, so criterion probes may step slightly past a limit.
    """
    c, s = math.cos(trunk.theta), math.sin(trunk.theta)
    ex, ey, ez = np.asarray(eye_offset, dtype=float)
    eye = np.array(
        [
            trunk.x + c * ex - s * ey,
            trunk.y + s * ex + c * ey,
            trunk_height + ez,
        ]
    )
    alpha, beta, theta_b = q_b
    head_rot = _rot_z(theta_b) @ _rot_x(alpha) @ _rot_y(beta)
    axis = _rot_z(trunk.theta) @ head_rot @ np.array([0.0, 1.0, 0.0])
    axis /= np.linalg.norm(axis)
    return eye, axis


def manikin_eye_frame(m: ManikinModel) -> tuple[np.ndarray, np.ndarray]:
    """Eye point and unit vision axis of the manikin."""
    return eye_frame_at(m.trunk, m.trunk_height, m.eye_offset, m.q_b)


@dataclass(frozen=True)
class RobotModel:
    """Planar serial arm on a mobile base; ``aspect`` pins the IK branch."""

    base: PlanarPose = field(default_factory=PlanarPose)
    link_lengths: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0]))
    q: np.ndarray | None = None
    limits: np.ndarray | None = None
    aspect: int = ASPECT_ELBOW_UP

    def __post_init__(self) -> None:
        links = np.asarray(self.link_lengths, dtype=float)
        if np.any(links < 0):
            raise ValueError("link lengths must be nonnegative")
        object.__setattr__(self, "link_lengths", links)
        q = np.zeros(len(links)) if self.q is None else np.asarray(self.q, dtype=float)
        if q.shape != links.shape:
            raise ValueError("joint vector length must match link count")
        object.__setattr__(self, "q", q)
        if self.limits is None:
            lims = np.tile([-math.pi, math.pi], (len(links), 1))
        else:
            lims = np.asarray(self.limits, dtype=float).reshape(len(links), 2)
        object.__setattr__(self, "limits", lims)
        if self.aspect not in (ASPECT_ELBOW_UP, ASPECT_ELBOW_DOWN):
            raise ValueError("aspect must be +1 (elbow up) or -1 (elbow down)")

    @property
    def n_joints(self) -> int:
        return len(self.link_lengths)

    def with_joints(self, q: np.ndarray) -> "RobotModel":
        return replace(self, q=np.asarray(q, dtype=float))


def robot_fk(r: RobotModel) -> PlanarPose:
    """End-effector pose from serial composition of base and joints."""
    angles = r.base.theta + np.cumsum(r.q)
    x = r.base.x + float(np.sum(r.link_lengths * np.cos(angles)))
    y = r.base.y + float(np.sum(r.link_lengths * np.sin(angles)))
    return PlanarPose(x, y, wrap_angle(float(angles[-1])) if len(angles) else r.base.theta)


def robot_joint_points(r: RobotModel) -> np.ndarray:
    """World positions of the base and every link tip, shape (n+1, 2)."""
    pts = np.empty((r.n_joints + 1, 2))
    pts[0] = (r.base.x, r.base.y)
    angle = r.base.theta
    for i, (l, qi) in enumerate(zip(r.link_lengths, r.q)):
        angle += qi
        pts[i + 1] = pts[i] + (l * math.cos(angle), l * math.sin(angle))
    return pts


def robot_jacobian(r: RobotModel) -> np.ndarray:
    """Analytic Jacobian of the end-effector (x, y, theta) w.r.t. joints."""
    angles = r.base.theta + np.cumsum(r.q)
    n = r.n_joints
    J = np.zeros((3, n))
    for j in range(n):
        tail_x = np.sum(r.link_lengths[j:] * np.cos(angles[j:]))
        tail_y = np.sum(r.link_lengths[j:] * np.sin(angles[j:]))
        J[0, j] = -tail_y
        J[1, j] = tail_x
        J[2, j] = 1.0
    return J


def _ik_two_link(r: RobotModel, target_xy: np.ndarray) -> np.ndarray:
    l1, l2 = r.link_lengths
    # Target expressed in the base frame.
    dx = target_xy[0] - r.base.x
    dy = target_xy[1] - r.base.y
    c, s = math.cos(-r.base.theta), math.sin(-r.base.theta)
    px, py = c * dx - s * dy, s * dx + c * dy
    d2 = px * px + py * py
    d = math.sqrt(d2)
    r_min, r_max = abs(l1 - l2), l1 + l2
    if d > r_max + 1e-12 or d < r_min - 1e-12:
        closest_d = min(max(d, r_min), r_max)
        if d > 0:
            closest_local = np.array([px, py]) * (closest_d / d)
        else:
            closest_local = np.array([closest_d, 0.0])
        cb, sb = math.cos(r.base.theta), math.sin(r.base.theta)
        closest_world = np.array(
            [
                r.base.x + cb * closest_local[0] - sb * closest_local[1],
                r.base.y + sb * closest_local[0] + cb * closest_local[1],
            ]
        )
        raise OutOfReachError(target_xy, closest_world)
    cos_q2 = (d2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    cos_q2 = min(1.0, max(-1.0, cos_q2))
    q2 = r.aspect * math.acos(cos_q2)
    q1 = math.atan2(py, px) - math.atan2(l2 * math.sin(q2), l1 + l2 * math.cos(q2))
    return np.array([wrap_angle(q1), wrap_angle(q2)])


def _ik_damped_least_squares(
    r: RobotModel, target_xy: np.ndarray, damping=1e-3, iters=200, tol=1e-10
) -> np.ndarray:
    q = r.q.copy()
    for _ in range(iters):
        model = r.with_joints(q)
        ee = robot_fk(model)
        err = np.array([target_xy[0] - ee.x, target_xy[1] - ee.y])
        if err @ err < tol * tol:
            break
        J = robot_jacobian(model)[:2]
        JT = J.T
        dq = JT @ np.linalg.solve(J @ JT + damping * np.eye(2), err)
        q = q + dq
    return np.array([wrap_angle(v) for v in q])


def ik_planar_preserving_aspect(r: RobotModel, target_xy) -> tuple[np.ndarray, np.ndarray]:
    """Joint angles reaching ``target_xy`` on the robot's stored branch.

    Two-link arms use the closed-form solution on the elbow branch given by
    ``r.aspect``; longer chains iterate (damped least squares) from the
    current posture, which stays on the current branch by locality.  Joint
    limits are enforced by clamping; the flags report which joints were
    truncated.

    Raises OutOfReachError (carrying the closest reachable point) when the
    target lies outside the reachable annulus.
    """
    target_xy = np.asarray(target_xy, dtype=float).reshape(2)
    if r.n_joints == 2:
        q = _ik_two_link(r, target_xy)
    else:
        reach = float(np.sum(r.link_lengths))
        offset = target_xy - np.array([r.base.x, r.base.y])
        dist = float(np.linalg.norm(offset))
        if dist > reach + 1e-12:
            closest = np.array([r.base.x, r.base.y]) + offset * (reach / dist)
            raise OutOfReachError(target_xy, closest)
        q = _ik_damped_least_squares(r, target_xy)
    return clamp_to_limits(q, r.limits)


def robot_aspect_of(q) -> int:
    """Elbow branch of a two-link joint vector (sign of the elbow angle)."""
    return ASPECT_ELBOW_UP if q[1] >= 0 else ASPECT_ELBOW_DOWN
