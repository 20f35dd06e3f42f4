"""Unilateral constraints: contacts and joint limits as per-step LCPs.

Each step, proximity detection turns skin sample points (probes) near
half-spaces or boxes, plus joint-limit rows, into a constraint Jacobian.
The complementarity problem in the constraint-space velocities is solved
by projected Gauss-Seidel; the resulting wrenches join the free torque
for one ordinary integration step.

The formulation is velocity-level: a contact row demands a nonnegative
separation velocity, with a capped pushout term added only when already
penetrating.  Impulses therefore never do negative work against the
constraint directions beyond the solver tolerance, which is the passivity
claim for this stage restated numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynamics import JointDynamics, step_first_order
from .geometry import Box3

DEFAULT_LCP_TOL = 1e-8
DEFAULT_LCP_MAX_ITER = 500
DEFAULT_RELAXATION = 1.0
DEFAULT_PROXIMITY_THRESHOLD = 1e-3   # meters; contacts activate inside this band
DEFAULT_STABILIZATION = 0.2          # fraction of penetration recovered per step
LCP_REGULARIZATION = 1e-10


class LcpConvergenceError(RuntimeError):
    """Projected Gauss-Seidel ran out of iterations."""

    def __init__(self, z: np.ndarray, w: np.ndarray, residual: float, iterations: int):
        super().__init__(
            f"LCP solver did not reach tolerance in {iterations} iterations "
            f"(best residual {residual:.3e})"
        )
        self.z = z
        self.w = w
        self.residual = residual


@dataclass(frozen=True)
class LcpProblem:
    """Find z >= 0 with w = M z + b >= 0 and z^T w = 0."""

    M: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        M = np.asarray(self.M, dtype=float)
        b = np.asarray(self.b, dtype=float).ravel()
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] != len(b):
            raise ValueError(f"LCP dimensions disagree: M {M.shape}, b {b.shape}")
        if not (np.all(np.isfinite(M)) and np.all(np.isfinite(b))):
            raise ValueError("LCP data must be finite")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return len(self.b)


def _lcp_residual(M: np.ndarray, b: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, float]:
    w = M @ z + b
    neg_z = float(max(0.0, -z.min())) if len(z) else 0.0
    neg_w = float(max(0.0, -w.min())) if len(w) else 0.0
    comp = float(abs(z @ w))
    return w, max(neg_z, neg_w, comp)


def solve_lcp(
    p: LcpProblem,
    tol: float = DEFAULT_LCP_TOL,
    max_iter: int = DEFAULT_LCP_MAX_ITER,
    relaxation: float = DEFAULT_RELAXATION,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Projected Gauss-Seidel solve; returns (z, w, residual).

    Raises LcpConvergenceError carrying the best iterate when the
    tolerance is not reached within ``max_iter`` sweeps.
    """
    if tol <= 0 or max_iter < 1:
        raise ValueError("tol must be positive and max_iter at least 1")
    M, b = p.M, p.b
    n = p.n
    if n == 0:
        return np.zeros(0), np.zeros(0), 0.0
    z = np.zeros(n)
    best_z, best_w, best_res = z.copy(), b.copy(), math.inf
    diag = np.diag(M)
    for _ in range(max_iter):
        for i in range(n):
            if diag[i] <= 0.0:
                continue
            row_value = M[i] @ z + b[i]
            z[i] = max(0.0, z[i] - relaxation * row_value / diag[i])
        w, res = _lcp_residual(M, b, z)
        if res < best_res:
            best_z, best_w, best_res = z.copy(), w, res
        if res <= tol:
            return z, w, res
    raise LcpConvergenceError(best_z, best_w, best_res, max_iter)


# ---------------------------------------------------------------------------
# Contact assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HalfSpace:
    """Allowed region ``normal . x >= offset``; the normal points out of
    the forbidden solid."""

    normal: np.ndarray
    offset: float = 0.0

    def __post_init__(self) -> None:
        n = np.asarray(self.normal, dtype=float).ravel()
        norm = np.linalg.norm(n)
        if not (math.isfinite(norm) and norm > 0):
            raise ValueError("half-space normal must be nonzero and finite")
        object.__setattr__(self, "normal", n / norm)

    def gap(self, point: np.ndarray) -> float:
        return float(self.normal @ np.asarray(point, dtype=float) - self.offset)


def box_face_gap(box: Box3, point: np.ndarray) -> tuple[float, np.ndarray]:
    """Signed gap and outward world normal of the nearest box face.

    The gap is the largest of the six face half-space gaps: positive just
    outside a face, negative (least-penetrated face) inside.  Corner
    regions underestimate the true distance, which only makes detection
    conservative.
    """
    local = box._to_local(np.asarray(point, dtype=float).reshape(1, 3))[0]
    best_gap = -math.inf
    best_axis, best_sign = 0, 1.0
    for axis in range(3):
        for sign in (1.0, -1.0):
            g = sign * local[axis] - box.half_extents[axis]
            if g > best_gap:
                best_gap, best_axis, best_sign = g, axis, sign
    normal_local = np.zeros(3)
    normal_local[best_axis] = best_sign
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return best_gap, rot @ normal_local


@dataclass(frozen=True)
class ContactProbe:
    """A skin sample point: world position and its Jacobian, both
    functions of the joint vector."""

    name: str
    position: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Contact:
    """One unilateral constraint row."""

    label: str
    index: int                  # probe index, or joint index for limit rows
    direction: np.ndarray       # unit normal (world) or signed joint axis
    gap: float
    restitution: float = 0.0

    def __post_init__(self) -> None:
        d = np.asarray(self.direction, dtype=float).ravel()
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("contact direction must be unit norm")
        if not math.isfinite(self.gap):
            raise ValueError("contact gap must be finite")
        object.__setattr__(self, "direction", d)


@dataclass(frozen=True)
class ContactSet:
    """Active contacts plus their stacked constraint Jacobian."""

    contacts: tuple[Contact, ...] = ()
    jacobian: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __len__(self) -> int:
        return len(self.contacts)

    @property
    def gaps(self) -> np.ndarray:
        return np.array([c.gap for c in self.contacts])


def assemble_contacts(
    d: JointDynamics,
    gamma_free,
    probes: Sequence[ContactProbe] = (),
    half_spaces: Sequence[HalfSpace] = (),
    boxes: Sequence[Box3] = (),
    joint_limits: np.ndarray | None = None,
    threshold: float = DEFAULT_PROXIMITY_THRESHOLD,
    stabilization: float = DEFAULT_STABILIZATION,
    effective_damping: np.ndarray | None = None,
) -> tuple[ContactSet, LcpProblem]:
    """Collect proximity and joint-limit rows into one LCP.

    A row enters when its signed gap is at most ``threshold``.  The LCP
    matrix is J_c B^-1 J_c^T (B the effective damping) with a small
    diagonal regularization; the offset combines the predicted
    constraint-space velocity with a capped pushout for rows already in
    penetration.
    """
    q = d.q
    n = len(q)
    gamma_vec = np.asarray(gamma_free(q) if callable(gamma_free) else gamma_free, dtype=float)
    contacts: list[Contact] = []
    rows: list[np.ndarray] = []

    for p_idx, probe in enumerate(probes):
        point = np.asarray(probe.position(q), dtype=float)
        J_p = np.atleast_2d(np.asarray(probe.jacobian(q), dtype=float))
        surfaces: list[tuple[float, np.ndarray]] = [(hs.gap(point), hs.normal) for hs in half_spaces]
        surfaces += [box_face_gap(box, point) for box in boxes]
        for gap, normal in surfaces:
            if gap <= threshold:
                contacts.append(Contact(label=probe.name, index=p_idx, direction=normal, gap=gap))
                rows.append(normal @ J_p)

    if joint_limits is not None:
        lims = np.asarray(joint_limits, dtype=float).reshape(n, 2)
        for j in range(n):
            lo, hi = lims[j]
            if math.isfinite(lo) and q[j] - lo <= threshold:
                axis = np.zeros(n)
                axis[j] = 1.0
                contacts.append(Contact(label=f"joint{j}-lo", index=j, direction=axis, gap=q[j] - lo))
                rows.append(axis)
            if math.isfinite(hi) and hi - q[j] <= threshold:
                axis = np.zeros(n)
                axis[j] = -1.0
                contacts.append(Contact(label=f"joint{j}-hi", index=j, direction=axis, gap=hi - q[j]))
                rows.append(axis)

    if not contacts:
        return ContactSet(), LcpProblem(M=np.zeros((0, 0)), b=np.zeros(0))

    J_c = np.vstack(rows)
    B = d.B_a if effective_damping is None else np.asarray(effective_damping, dtype=float)
    B_inv_JcT = np.linalg.solve(B, J_c.T)
    M = J_c @ B_inv_JcT + LCP_REGULARIZATION * np.eye(len(contacts))
    gaps = np.array([c.gap for c in contacts])
    # Pushout only when penetrating; recover a fraction per step, capped so
    # a deep penetration cannot launch the body.
    pushout = np.where(gaps < 0.0, np.maximum(stabilization * gaps / d.dt, -threshold / d.dt), 0.0)
    b = J_c @ np.linalg.solve(B, gamma_vec) + pushout
    return ContactSet(contacts=tuple(contacts), jacobian=J_c), LcpProblem(M=M, b=b)


def step_constrained(
    d: JointDynamics,
    gamma_free,
    contacts: tuple[ContactSet, LcpProblem],
    forces: np.ndarray | None = None,
    tol: float = DEFAULT_LCP_TOL,
    max_iter: int = DEFAULT_LCP_MAX_ITER,
) -> np.ndarray:
    """One integration step with constraint wrenches added to the torque.

    With no active contacts this is exactly ``step_first_order``.  The
    constraint forces are held constant across the RK4 stages; pass
    ``forces`` to reuse a solution already computed for logging.
    """
    contact_set, problem = contacts
    if len(contact_set) == 0:
        return step_first_order(d, gamma_free)
    if forces is None:
        forces, _, _ = solve_lcp(problem, tol=tol, max_iter=max_iter)
    correction = contact_set.jacobian.T @ np.asarray(forces, dtype=float)
    if callable(gamma_free):
        total = lambda q: gamma_free(q) + correction
    else:
        total = np.asarray(gamma_free, dtype=float) + correction
    return step_first_order(d, total)
