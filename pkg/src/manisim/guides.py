"""Virtual guides: damped-spring couplings to simple virtual mechanisms.

A guide never projects the tool's motion.  Instead a small mechanism with
its own damped dynamics (a slide along a fixed axis, or an aim frame)
follows the tool, and a full 3D spring-damper connects the two.  Because
every force in the path comes from a spring potential or a damper, the
energy the guide can deliver to the tool is bounded by the spring energy
stored at attach time; that bound is the module's defining property and
is audited by the tests.

The mechanism state advances by an implicit first-order law, so stiff
couplings stay stable at the default millisecond step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.transform import Rotation

DEFAULT_STIFFNESS_POS = 500.0   # N/m
DEFAULT_STIFFNESS_ROT = 20.0    # N·m/rad
DEFAULT_DAMPING_POS = 20.0      # N·s/m
DEFAULT_DAMPING_ROT = 2.0       # N·m·s/rad
DEFAULT_MECH_DAMPING = 5.0      # N·s/m on the mechanism's own DOF


@dataclass(frozen=True)
class Wrench:
    """Force and torque applied to the tool frame."""

    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        object.__setattr__(self, "force", np.asarray(self.force, dtype=float).reshape(3))
        object.__setattr__(self, "torque", np.asarray(self.torque, dtype=float).reshape(3))


@dataclass(frozen=True)
class ToolPose:
    position: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        if np.abs(R @ R.T - np.eye(3)).max() > 1e-8 or np.linalg.det(R) < 0:
            raise ValueError("rotation must be a proper orthonormal matrix")
        object.__setattr__(self, "rotation", R)


@dataclass(frozen=True)
class ToolVelocity:
    linear: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        object.__setattr__(self, "linear", np.asarray(self.linear, dtype=float).reshape(3))
        object.__setattr__(self, "angular", np.asarray(self.angular, dtype=float).reshape(3))


@dataclass(frozen=True)
class VirtualMechanism:
    """A slide along a fixed axis holding a fixed orientation.

    The slide position is the mechanism's only degree of freedom; the tool
    couples to the point at the current slide position through springs.
    """

    axis_origin: np.ndarray
    axis_direction: np.ndarray
    target_orientation: np.ndarray = field(default_factory=lambda: np.eye(3))
    stiffness_pos: float = DEFAULT_STIFFNESS_POS
    stiffness_rot: float = DEFAULT_STIFFNESS_ROT
    damping_pos: float = DEFAULT_DAMPING_POS
    damping_rot: float = DEFAULT_DAMPING_ROT
    mech_damping: float = DEFAULT_MECH_DAMPING

    def __post_init__(self) -> None:
        object.__setattr__(self, "axis_origin", np.asarray(self.axis_origin, dtype=float).reshape(3))
        a = np.asarray(self.axis_direction, dtype=float).reshape(3)
        norm = np.linalg.norm(a)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError("axis direction must be unit norm")
        object.__setattr__(self, "axis_direction", a)
        R = np.asarray(self.target_orientation, dtype=float).reshape(3, 3)
        if np.abs(R @ R.T - np.eye(3)).max() > 1e-8 or np.linalg.det(R) < 0:
            raise ValueError("target orientation must be a proper rotation")
        object.__setattr__(self, "target_orientation", R)
        for name in ("stiffness_pos", "stiffness_rot", "damping_pos", "damping_rot", "mech_damping"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def point_at(self, s: float) -> np.ndarray:
        return self.axis_origin + s * self.axis_direction


@dataclass(frozen=True)
class GuideHandle:
    """A mechanism plus its live slide state."""

    mechanism: VirtualMechanism
    s: float


def attach_guide(mech: VirtualMechanism, pose: ToolPose) -> GuideHandle:
    """Initialize the slide at the closest point to the tool.

    The parallel spring stretch starts at zero, so the only energy stored
    at attach time is the perpendicular offset and any orientation error.
    """
    s = float(mech.axis_direction @ (pose.position - mech.axis_origin))
    return GuideHandle(mechanism=mech, s=s)


def _orientation_error_vector(mech: VirtualMechanism, rotation: np.ndarray) -> np.ndarray:
    """Rotation vector taking the tool orientation to the target."""
    return Rotation.from_matrix(mech.target_orientation @ rotation.T).as_rotvec()


def spring_energy(handle: GuideHandle, pose: ToolPose) -> float:
    """Energy currently stored in the coupling springs."""
    mech = handle.mechanism
    e = pose.position - mech.point_at(handle.s)
    r = _orientation_error_vector(mech, pose.rotation)
    return 0.5 * mech.stiffness_pos * float(e @ e) + 0.5 * mech.stiffness_rot * float(r @ r)


def guide_wrench(
    handle: GuideHandle, pose: ToolPose, velocity: ToolVelocity, dt: float
) -> tuple[Wrench, GuideHandle]:
    """Spring-damper wrench on the tool and the advanced mechanism state.

    The slide velocity solves its damped balance implicitly:
    (b_m + B_g) s_dot = K_g e_par + B_g (a . v_tool), where e_par is the
    spring stretch along the axis.  No projection enters the force: the
    tool always feels the full 3D spring to the mechanism point.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    mech = handle.mechanism
    a = mech.axis_direction
    e = pose.position - mech.point_at(handle.s)
    e_par = float(a @ e)
    s_dot = (mech.stiffness_pos * e_par + mech.damping_pos * float(a @ velocity.linear)) / (
        mech.mech_damping + mech.damping_pos
    )
    force = -mech.stiffness_pos * e - mech.damping_pos * (velocity.linear - s_dot * a)
    r = _orientation_error_vector(mech, pose.rotation)
    torque = mech.stiffness_rot * r - mech.damping_rot * velocity.angular
    return Wrench(force=force, torque=torque), replace(handle, s=handle.s + dt * s_dot)


def guide_angle_error(tool_axis, ideal_axis) -> float:
    """Angle in [0, pi] between the actual and ideal tool axes."""
    t = np.asarray(tool_axis, dtype=float).reshape(3)
    u = np.asarray(ideal_axis, dtype=float).reshape(3)
    if abs(np.linalg.norm(t) - 1.0) > 1e-6 or abs(np.linalg.norm(u) - 1.0) > 1e-6:
        raise ValueError("axes must be unit vectors")
    return math.acos(min(1.0, max(-1.0, float(t @ u))))


@dataclass(frozen=True)
class GuideMetrics:
    """Per-step axis-angle error and its running RMS."""

    last_angle: float = 0.0
    count: int = 0
    sum_squares: float = 0.0

    def record(self, angle: float) -> "GuideMetrics":
        if not 0.0 <= angle <= math.pi:
            raise ValueError("angle must lie in [0, pi]")
        return GuideMetrics(
            last_angle=angle, count=self.count + 1, sum_squares=self.sum_squares + angle * angle
        )

    @property
    def rms(self) -> float:
        return math.sqrt(self.sum_squares / self.count) if self.count else 0.0


@dataclass(frozen=True)
class SpotlightGuide:
    """Orientation-only guide pointing a body axis at a fixed spot.

    Position stays free: the single potential k (1 - axis . u) produces a
    torque toward alignment and a position force that vanishes exactly
    when aligned.  Both derive from the same potential, which is what
    keeps the coupling passive.
    """

    aim_point: np.ndarray
    tool_axis_local: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    stiffness_rot: float = DEFAULT_STIFFNESS_ROT
    damping_rot: float = DEFAULT_DAMPING_ROT
    damping_pos: float = DEFAULT_DAMPING_POS

    def __post_init__(self) -> None:
        object.__setattr__(self, "aim_point", np.asarray(self.aim_point, dtype=float).reshape(3))
        ax = np.asarray(self.tool_axis_local, dtype=float).reshape(3)
        if abs(np.linalg.norm(ax) - 1.0) > 1e-9:
            raise ValueError("tool axis must be unit norm")
        object.__setattr__(self, "tool_axis_local", ax)
        if self.stiffness_rot <= 0 or self.damping_rot <= 0 or self.damping_pos < 0:
            raise ValueError("gains must be positive (position damping nonnegative)")

    def potential(self, pose: ToolPose) -> float:
        t = pose.rotation @ self.tool_axis_local
        d = self.aim_point - pose.position
        dist = np.linalg.norm(d)
        if dist < 1e-12:
            return 0.0
        return self.stiffness_rot * (1.0 - float(t @ (d / dist)))

    def wrench(self, pose: ToolPose, velocity: ToolVelocity) -> Wrench:
        t = pose.rotation @ self.tool_axis_local
        d = self.aim_point - pose.position
        dist = float(np.linalg.norm(d))
        if dist < 1e-12:
            return Wrench(torque=-self.damping_rot * velocity.angular)
        u = d / dist
        torque = self.stiffness_rot * np.cross(t, u) - self.damping_rot * velocity.angular
        # -dU/dp: the potential depends on position through u.
        force = (
            -self.stiffness_rot * (np.eye(3) - np.outer(u, u)) @ t / dist
            - self.damping_pos * velocity.linear
        )
        return Wrench(force=force, torque=torque)
