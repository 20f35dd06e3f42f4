"""First-order joint dynamics, task-space control, and port energy audit.

The avatar model is damping-dominated: ``B_a q_dot = Gamma`` with a
symmetric positive definite damping matrix.  On top of that sit a
task-space PD controller, the implicit joint-velocity solution it admits,
null-space projections for internal tasks, and an energy ledger per power
port.  ``build_passivity_counterexample`` constructs the specific
two-port coupling for which null-space prioritization provably pumps
energy out of the system without bound; it exists so tests can certify
the non-passivity mechanism rather than stumble over it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .geometry import wrap_angle

log = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12
KERNEL_SINGULAR_VALUE_TOL = 1e-10
DEFAULT_CONDITION_LIMIT = 1e12


class SingularSystemError(np.linalg.LinAlgError):
    """The joint-velocity system is too ill-conditioned to trust."""

    def __init__(self, condition: float, limit: float):
        super().__init__(
            f"system condition estimate {condition:.3e} exceeds limit {limit:.3e}; "
            "pass a tikhonov weight to opt into regularization"
        )
        self.condition = condition
        self.limit = limit


def _require_symmetric(name: str, m: np.ndarray, tol: float = SYMMETRY_TOL) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    scale = max(1.0, float(np.abs(m).max()))
    if np.abs(m - m.T).max() > tol * scale:
        raise ValueError(f"{name} is not symmetric to {tol}")
    return m


def _require_spd(name: str, m: np.ndarray) -> np.ndarray:
    m = _require_symmetric(name, m)
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{name} is not positive definite") from exc
    return m


@dataclass(frozen=True)
class JointDynamics:
    """Joint state under first-order damping dynamics.

    ``wrap_mask`` marks which components are angles to wrap after a step;
    by default every component is treated as an angle.  Positive
    definiteness of ``B_a`` is checked once here so stepping never has to.
    """

    q: np.ndarray
    B_a: np.ndarray
    dt: float = 1e-3
    wrap_mask: np.ndarray | None = None

    def __post_init__(self) -> None:
        q = np.asarray(self.q, dtype=float).ravel()
        object.__setattr__(self, "q", q)
        B_a = _require_spd("B_a", self.B_a)
        if B_a.shape[0] != len(q):
            raise ValueError("B_a size must match the joint vector")
        object.__setattr__(self, "B_a", B_a)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.wrap_mask is None:
            mask = np.ones(len(q), dtype=bool)
        else:
            mask = np.asarray(self.wrap_mask, dtype=bool).ravel()
            if mask.shape != q.shape:
                raise ValueError("wrap_mask length must match the joint vector")
        object.__setattr__(self, "wrap_mask", mask)
        object.__setattr__(self, "_chol", cho_factor(B_a, lower=True))

    def velocity(self, torque: np.ndarray) -> np.ndarray:
        """q_dot solving B_a q_dot = torque."""
        return cho_solve(self._chol, np.asarray(torque, dtype=float))

    def with_q(self, q: np.ndarray) -> "JointDynamics":
        return replace(self, q=q)


TorqueField = Callable[[np.ndarray], np.ndarray]


def step_first_order(d: JointDynamics, torque) -> np.ndarray:
    """One classical Runge-Kutta step of B_a q_dot = torque.

    ``torque`` may be a constant vector or a callable of q (evaluated at
    the RK4 stage points).  Angle components are wrapped only after the
    full step so stage evaluations see an unbroken trajectory.
    """
    if callable(torque):
        gamma: TorqueField = torque
    else:
        const = np.asarray(torque, dtype=float)
        gamma = lambda _q: const
    h = d.dt
    q0 = d.q
    k1 = d.velocity(gamma(q0))
    k2 = d.velocity(gamma(q0 + 0.5 * h * k1))
    k3 = d.velocity(gamma(q0 + 0.5 * h * k2))
    k4 = d.velocity(gamma(q0 + h * k3))
    q = q0 + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    out = q.copy()
    for i in np.nonzero(d.wrap_mask)[0]:
        out[i] = wrap_angle(float(q[i]))
    return out


@dataclass(frozen=True)
class TaskGains:
    """Task-space stiffness and damping of the point controller."""

    K: np.ndarray
    B_c: np.ndarray

    def __post_init__(self) -> None:
        K = _require_symmetric("K", self.K)
        eigs = np.linalg.eigvalsh(K)
        if eigs.min() < -SYMMETRY_TOL * max(1.0, abs(eigs.max())):
            raise ValueError("K must be positive semi-definite")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "B_c", _require_symmetric("B_c", self.B_c))


def task_force(g: TaskGains, x, x_d, v, v_d) -> np.ndarray:
    """PD wrench toward the task target: K (x_d - x) + B_c (v_d - v)."""
    x, x_d = np.asarray(x, dtype=float), np.asarray(x_d, dtype=float)
    v, v_d = np.asarray(v, dtype=float), np.asarray(v_d, dtype=float)
    return g.K @ (x_d - x) + g.B_c @ (v_d - v)


def solve_joint_velocity(
    d: JointDynamics,
    g: TaskGains,
    J: np.ndarray,
    x,
    x_d,
    v_d,
    condition_limit: float = DEFAULT_CONDITION_LIMIT,
    tikhonov: float | None = None,
) -> np.ndarray:
    """Joint velocity of the implicitly damped task controller.

    Solves (B_a + J^T B_c J) q_dot = J^T (K (x_d - x) + B_c v_d).  The
    system matrix must be well conditioned; otherwise this raises rather
    than silently regularizing.  Passing ``tikhonov`` opts into ridge
    regularization of a near-singular system, and that choice is flagged
    in the log.
    """
    J = np.asarray(J, dtype=float)
    M = d.B_a + J.T @ (g.B_c @ J)
    rhs = J.T @ (g.K @ (np.asarray(x_d, dtype=float) - np.asarray(x, dtype=float)) + g.B_c @ np.asarray(v_d, dtype=float))
    condition = float(np.linalg.cond(M))
    if condition > condition_limit or not math.isfinite(condition):
        if tikhonov is None:
            raise SingularSystemError(condition, condition_limit)
        log.warning(
            "joint-velocity system condition %.3e above %.3e; applying tikhonov %.3e",
            condition,
            condition_limit,
            tikhonov,
        )
        M = M + tikhonov * np.eye(M.shape[0])
    return cho_solve(cho_factor(M, lower=True), rhs)


def null_space_projection(J1: np.ndarray, B_a: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto Ker(J1 B_a^-1).

    Torques passed through the projector produce no velocity at the port
    described by J1.  Built from the SVD right-singular vectors whose
    singular values fall below threshold.
    """
    J1 = np.atleast_2d(np.asarray(J1, dtype=float))
    B_a = _require_spd("B_a", B_a)
    if B_a.shape[0] != J1.shape[1]:
        raise ValueError("J1 column count must match B_a size")
    A = J1 @ np.linalg.inv(B_a)
    _, s, vt = np.linalg.svd(A)
    scale = s[0] if len(s) and s[0] > 0 else 1.0
    rank = int(np.sum(s > KERNEL_SINGULAR_VALUE_TOL * scale))
    kernel = vt[rank:].T
    return kernel @ kernel.T


def internal_potential_torque(projector: np.ndarray, grad_u: np.ndarray, alpha: float) -> np.ndarray:
    """Gradient-descent torque on an internal potential, projected away
    from the external port: -alpha * projector @ grad_u."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    return -alpha * (np.asarray(projector, dtype=float) @ np.asarray(grad_u, dtype=float))


@dataclass(frozen=True)
class EnergyLedger:
    """Cumulative trapezoidal integral of one port's power W^T V."""

    energy: float = 0.0
    steps: int = 0
    prev_power: float | None = None


def port_energy(ledger: EnergyLedger, W, V, dt: float) -> EnergyLedger:
    """Accumulate one sample of port power into the ledger.

    The first sample is integrated as a rectangle (there is no earlier
    sample to pair with); later samples use the trapezoid rule, so
    concatenated runs that carry the ledger forward stay additive.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    power = float(np.asarray(W, dtype=float).ravel() @ np.asarray(V, dtype=float).ravel())
    if ledger.prev_power is None:
        increment = power * dt
    else:
        increment = 0.5 * (power + ledger.prev_power) * dt
    return EnergyLedger(energy=ledger.energy + increment, steps=ledger.steps + 1, prev_power=power)


@dataclass(frozen=True)
class PassivityCertificate:
    """Verified witness that the two-port prioritized coupling pumps energy."""

    J2_coupling_nonzero: float      # norm of J2^T W2, must be > 0
    wrench_balance_residual: float  # norm of J1^T W1 + 0.5 J2^T W2, must be ~ 0
    projected_coupling_residual: float  # norm of J2 B_a^-1 P1 J2^T, must be ~ 0
    power: float                    # instantaneous two-port power, constant and < 0


def build_passivity_counterexample(
    J1: np.ndarray, B_a: np.ndarray, W2: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray, PassivityCertificate]:
    """Construct ports whose prioritized coupling has constant negative power.

    With J2 = J1 and W1 = -W2/2 the three structural conditions hold for
    any nonzero W2, and the combined port power is -W1^T S W1 with
    S = J1 B_a^-1 J1^T positive definite, so the energy integral decreases
    without bound.  Returns (W1, W2, J2, certificate); the certificate
    carries the numerically verified residuals.
    """
    J1 = np.atleast_2d(np.asarray(J1, dtype=float))
    if np.allclose(J1, 0.0):
        raise ValueError("J1 = 0 admits no counterexample: the coupling cannot transmit")
    B_a = _require_spd("B_a", B_a)
    J2 = J1.copy()
    if W2 is None:
        u, _, _ = np.linalg.svd(J1)
        W2 = 2.0 * u[:, 0]
    W2 = np.asarray(W2, dtype=float).ravel()
    if np.allclose(J2.T @ W2, 0.0):
        raise ValueError("W2 must couple through J2 (J2^T W2 != 0)")
    W1 = -0.5 * W2

    B_inv = np.linalg.inv(B_a)
    projector = null_space_projection(J1, B_a)
    S = J1 @ B_inv @ J1.T
    certificate = PassivityCertificate(
        J2_coupling_nonzero=float(np.linalg.norm(J2.T @ W2)),
        wrench_balance_residual=float(np.linalg.norm(J1.T @ W1 + 0.5 * J2.T @ W2)),
        projected_coupling_residual=float(np.linalg.norm(J2 @ B_inv @ projector @ J2.T)),
        power=float(-(W1 @ S @ W1)),
    )
    return W1, W2, J2, certificate


def prioritized_port_power(
    J1: np.ndarray, J2: np.ndarray, W1: np.ndarray, W2: np.ndarray, B_a: np.ndarray
) -> float:
    """Instantaneous W1^T V1 + W2^T V2 under null-space prioritization.

    The secondary torque is filtered through the projector onto
    Ker(J1 B_a^-1) before entering the shared dynamics; both port
    velocities follow from the resulting joint velocity.
    """
    J1 = np.atleast_2d(np.asarray(J1, dtype=float))
    J2 = np.atleast_2d(np.asarray(J2, dtype=float))
    W1 = np.asarray(W1, dtype=float).ravel()
    W2 = np.asarray(W2, dtype=float).ravel()
    projector = null_space_projection(J1, B_a)
    torque = J1.T @ W1 + projector @ (J2.T @ W2)
    q_dot = np.linalg.solve(B_a, torque)
    return float(W1 @ (J1 @ q_dot) + W2 @ (J2 @ q_dot))


class AlphaMonitor:
    """Runtime guard on the internal-task weight.

    Whenever the external-port energy ledger dips below the configured
    bound the weight is halved, throttling the internal task until the
    port recovers.  The halving count is observable for logging.
    """

    def __init__(self, alpha: float, energy_bound: float):
        if alpha < 0:
            raise ValueError("alpha must be nonnegative")
        self.alpha = alpha
        self.energy_bound = energy_bound
        self.halvings = 0

    def update(self, external_energy: float) -> float:
        if external_energy < self.energy_bound:
            self.alpha *= 0.5
            self.halvings += 1
            log.info(
                "external port energy %.3e below bound %.3e; alpha halved to %.3e",
                external_energy,
                self.energy_bound,
                self.alpha,
            )
        return self.alpha
