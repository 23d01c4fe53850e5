"""
Task-space QP controllers.

Velocity level:      min ||J u + eta x~||^2 + lambda^2 ||u||^2   s.t. W u <= w
Acceleration level:  min ||J u + beta||^2   + lambda^2 ||u||^2   s.t. gamma_l <= u <= gamma_u, W u <= w
                     beta = (kd J + Jdot) qdot + kp x~
Torque level:        tau = n(q, qdot) + M(q) u_a
"""

from __future__ import annotations

import logging
import time
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from core.dynamics import DynamicTerms, RigidBodyModel, dynamic_terms
from core.geometry import Plane, dist_point_plane
from core.kinematics import (
    ChainPose,
    JointState,
    SerialChain,
    forward_kinematics,
    jacobian_time_derivative,
    point_plane_distance_jacobian,
)
from core.qp import GoldfarbIdnaniSolver, QpProblem
from core.schemas import BoundShape, ControllerMode, QpStatus, TaskSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TaskEvaluation:
    """Task error, its Jacobian, and (for acceleration control) Jdot."""
    error: np.ndarray
    jacobian: np.ndarray
    error_rate: np.ndarray
    jacobian_dot: np.ndarray | None = None

    @property
    def error_norm(self) -> float:
        return float(np.linalg.norm(self.error))


def evaluate_task(
    task: TaskSpec,
    chain: SerialChain,
    state: JointState,
    plane: Plane,
    with_derivative: bool = False,
    pose: ChainPose | None = None,
) -> TaskEvaluation:
    """Signed attachment-to-plane distance minus its target value."""
    att = chain.attachment(task.attachment)

    def jac(q):
        return point_plane_distance_jacobian(chain, q, att.frame, att.point, plane).matrix

    pose = pose if pose is not None else forward_kinematics(chain, state.q)
    J = point_plane_distance_jacobian(chain, state.q, att.frame, att.point, plane, pose).matrix
    error = np.array([dist_point_plane(pose.point(att.frame, att.point), plane) - task.target_value])
    Jdot = None
    if with_derivative:
        Jdot = jacobian_time_derivative(chain, state.q, state.qdot, jac).matrix
    return TaskEvaluation(error, J, J @ state.qdot, Jdot)


# ---------------------------------------------------------------------------
# Bound shapes g
# ---------------------------------------------------------------------------


def _velocity_norm(error_rate: np.ndarray, error: np.ndarray | None) -> float:
    return float(np.linalg.norm(error_rate))


def _velocity_and_error_norm(error_rate: np.ndarray, error: np.ndarray | None) -> float:
    extra = 0.0 if error is None else float(np.linalg.norm(error))
    return float(np.linalg.norm(error_rate)) + extra


BOUND_SHAPES: dict[BoundShape, Callable[[np.ndarray, np.ndarray | None], float]] = {
    BoundShape.VELOCITY_NORM: _velocity_norm,
    BoundShape.VELOCITY_AND_ERROR_NORM: _velocity_and_error_norm,
}


@dataclass
class ControlOutput:
    command: np.ndarray
    mode: ControllerMode
    status: QpStatus
    flagged: bool = False
    slacks: np.ndarray = field(default_factory=lambda: np.zeros(0))
    solve_time: float = 0.0
    acceleration: np.ndarray | None = None
    message: str = ""
    dynamics: DynamicTerms | None = None


class WholeBodyController:
    """
    Owns a QP solver; one stepping thread per instance.

    `bounded=False` drops the acceleration bounds (task-only QP variant).
    """

    def __init__(self, task: TaskSpec, solver: GoldfarbIdnaniSolver | None = None, bounded: bool = True):
        self.task = task
        self.solver = solver or GoldfarbIdnaniSolver()
        self.bounded = bounded
        self.shape = BOUND_SHAPES[task.bound_shape]

    def _hessian(self, J: np.ndarray) -> np.ndarray:
        n = J.shape[1]
        return 2.0 * (J.T @ J + self.task.damping ** 2 * np.eye(n))

    def _solve(self, H, f, A, b):
        started = time.perf_counter()
        solution = self.solver.solve(QpProblem(H, f, A, b))
        return solution, time.perf_counter() - started

    def velocity_step(
        self, evaluation: TaskEvaluation, W: np.ndarray, w: np.ndarray, state: JointState,
    ) -> ControlOutput:
        """Joint velocity from the velocity-level QP; zero when infeasible."""
        J = evaluation.jacobian
        n = J.shape[1]
        H = self._hessian(J)
        f = 2.0 * self.task.gain * (J.T @ evaluation.error)
        solution, elapsed = self._solve(H, f, W, w)
        if not solution.ok:
            logger.warning(f"[Controller] velocity QP {solution.status.value}, holding zero velocity")
            return ControlOutput(
                np.zeros(n), ControllerMode.VELOCITY, solution.status, True,
                w - W @ np.zeros(n), elapsed, message=f"qp {solution.status.value}",
            )
        return ControlOutput(solution.x, ControllerMode.VELOCITY, solution.status, False, w - W @ solution.x, elapsed)

    def acceleration_bounds(
        self, qdot: np.ndarray, error_rate: np.ndarray, error: np.ndarray | None = None,
    ) -> tuple[np.ndarray, np.ndarray]:
        """gamma_l = k(-g 1 - qdot), gamma_u = k(g 1 - qdot)."""
        qdot = np.asarray(qdot, dtype=float)
        g = self.shape(np.atleast_1d(error_rate), None if error is None else np.atleast_1d(error))
        k = self.task.bound_scale
        ones = np.ones_like(qdot)
        return k * (-g * ones - qdot), k * (g * ones - qdot)

    def acceleration_step(
        self, evaluation: TaskEvaluation, W: np.ndarray, w: np.ndarray, state: JointState,
    ) -> ControlOutput:
        """Joint acceleration from the acceleration-level QP."""
        J = evaluation.jacobian
        n = J.shape[1]
        qdot = state.qdot
        Jdot = evaluation.jacobian_dot if evaluation.jacobian_dot is not None else np.zeros_like(J)
        beta = (self.task.kd * J + Jdot) @ qdot + self.task.kp * evaluation.error
        H = self._hessian(J)
        f = 2.0 * (J.T @ beta)

        if self.bounded:
            lower, upper = self.acceleration_bounds(qdot, evaluation.error_rate, evaluation.error)
            A = np.vstack([np.eye(n), -np.eye(n), W])
            b = np.concatenate([upper, -lower, w])
        else:
            A, b = W, w
        solution, elapsed = self._solve(H, f, A, b)

        if not solution.ok:
            fallback = 0.5 * (lower + upper) if self.bounded else np.zeros(n)
            logger.warning(f"[Controller] acceleration QP {solution.status.value}, holding bound-consistent command")
            return ControlOutput(
                fallback, ControllerMode.ACCELERATION, solution.status, True,
                w - W @ fallback, elapsed, fallback, f"qp {solution.status.value}",
            )
        u = solution.x
        return ControlOutput(u, ControllerMode.ACCELERATION, solution.status, False, w - W @ u, elapsed, u)

    def torque_step(
        self,
        evaluation: TaskEvaluation,
        W: np.ndarray,
        w: np.ndarray,
        state: JointState,
        model: RigidBodyModel,
    ) -> ControlOutput:
        """tau = n(q, qdot) + M(q) u_a; M and n are returned for the plant."""
        out = self.acceleration_step(evaluation, W, w, state)
        terms = dynamic_terms(model, state.q, state.qdot)
        tau = torque_from_acceleration(model, state, out.command, terms)
        return ControlOutput(
            tau, ControllerMode.TORQUE, out.status, out.flagged, out.slacks,
            out.solve_time, out.command, out.message, terms,
        )


def torque_from_acceleration(
    model: RigidBodyModel, state: JointState, qddot, terms: DynamicTerms | None = None,
) -> np.ndarray:
    terms = terms if terms is not None else dynamic_terms(model, state.q, state.qdot)
    return terms.bias + terms.mass @ np.asarray(qddot, dtype=float)
