"""Unit tests for the task-space QP controllers in src/core/control.py."""

import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import minimize

sys.path.insert(0, str(Path(__file__).resolve().parents[2] / "src"))

from core.config import Config
from core.control import TaskEvaluation, WholeBodyController, evaluate_task, torque_from_acceleration
from core.dynamics import LinkInertia, RigidBodyModel, dynamic_terms, forward_dynamics, inverse_dynamics
from core.kinematics import JointState, RevoluteJoint, SerialChain
from core.schemas import BoundShape, ControllerMode, QpStatus, TaskSpec
from tests.fixtures.reference_models import load_desk

LAMBDA = 0.01
ETA = 0.36

# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _make_task(**kwargs) -> TaskSpec:
    return TaskSpec(attachment="hand", target="table", **kwargs)


def _make_evaluation(J, error, error_rate=None, Jdot=None) -> TaskEvaluation:
    J = np.atleast_2d(np.asarray(J, dtype=float))
    error = np.atleast_1d(np.asarray(error, dtype=float))
    rate = np.zeros(1) if error_rate is None else np.atleast_1d(np.asarray(error_rate, dtype=float))
    return TaskEvaluation(error, J, rate, Jdot)


def _no_rows(n: int):
    return np.zeros((0, n)), np.zeros(0)


def _velocity_objective(J, error, u):
    r = J @ u + ETA * error
    return float(r @ r + LAMBDA ** 2 * u @ u)


# ---------------------------------------------------------------------------
# Velocity level
# ---------------------------------------------------------------------------

class TestVelocityStep:
    """Damped least squares with VFI rows."""

    def test_scalar_damped_least_squares(self):
        controller = WholeBodyController(_make_task())
        out = controller.velocity_step(_make_evaluation([[1.0]], 0.5), *_no_rows(1), JointState(np.zeros(1)))
        assert out.status == QpStatus.OPTIMAL
        assert not out.flagged
        assert out.command[0] == pytest.approx(-0.18 / (1.0 + LAMBDA ** 2))
        assert out.mode == ControllerMode.VELOCITY

    def test_binding_constraint(self):
        controller = WholeBodyController(_make_task())
        W, w = np.array([[-1.0, 0.0]]), np.array([0.0])  # u_1 >= 0
        out = controller.velocity_step(_make_evaluation([[1.0, 1.0]], 0.5), W, w, JointState(np.zeros(2)))
        assert out.command[0] == pytest.approx(0.0, abs=1e-12)
        assert out.command[1] == pytest.approx(-0.18 / (1.0 + LAMBDA ** 2))
        assert out.slacks[0] == pytest.approx(0.0, abs=1e-12)

    def test_unconstrained_matches_closed_form(self):
        rng = np.random.default_rng(93)
        controller = WholeBodyController(_make_task())
        for _ in range(50):
            n = int(rng.integers(1, 10))
            J = rng.normal(size=(1, n))
            error = rng.uniform(-0.5, 0.5, 1)
            out = controller.velocity_step(_make_evaluation(J, error), *_no_rows(n), JointState(np.zeros(n)))
            expected = np.linalg.solve(J.T @ J + LAMBDA ** 2 * np.eye(n), -ETA * J.T @ error)
            np.testing.assert_allclose(out.command, expected, atol=1e-8)

    def test_inactive_rows_change_nothing(self):
        rng = np.random.default_rng(94)
        controller = WholeBodyController(_make_task())
        for _ in range(20):
            n = int(rng.integers(1, 10))
            J = rng.normal(size=(1, n))
            evaluation = _make_evaluation(J, rng.uniform(-0.5, 0.5))
            W, w = rng.normal(size=(5, n)), np.full(5, 1e3)
            free = controller.velocity_step(evaluation, *_no_rows(n), JointState(np.zeros(n)))
            constrained = controller.velocity_step(evaluation, W, w, JointState(np.zeros(n)))
            np.testing.assert_allclose(constrained.command, free.command, atol=1e-8)

    def test_infeasible_holds_zero_and_flags(self):
        controller = WholeBodyController(_make_task())
        W, w = np.array([[1.0], [-1.0]]), np.array([-1.0, -1.0])
        out = controller.velocity_step(_make_evaluation([[1.0]], 0.5), W, w, JointState(np.zeros(1)))
        assert out.status == QpStatus.INFEASIBLE
        assert out.flagged
        np.testing.assert_allclose(out.command, [0.0])

    def test_matches_general_purpose_optimizer(self):
        rng = np.random.default_rng(90)
        controller = WholeBodyController(_make_task())
        for _ in range(20):
            n = int(rng.integers(2, 6))
            J = rng.normal(size=(1, n))
            error = rng.uniform(-0.5, 0.5, 1)
            W = rng.normal(size=(3, n))
            w = rng.uniform(0.0, 0.1, 3)
            out = controller.velocity_step(_make_evaluation(J, error), W, w, JointState(np.zeros(n)))
            reference = minimize(
                lambda u: _velocity_objective(J, error, u),
                np.zeros(n),
                method="SLSQP",
                constraints=[{"type": "ineq", "fun": lambda u: w - W @ u, "jac": lambda u: -W}],
                options={"ftol": 1e-14, "maxiter": 500},
            )
            assert np.all(W @ out.command <= w + 1e-9)
            assert _velocity_objective(J, error, out.command) <= reference.fun + 1e-9

    def test_grid_search_never_beats_solution(self):
        controller = WholeBodyController(_make_task())
        J, error = np.array([[0.8, -0.4]]), np.array([0.3])
        W, w = np.array([[1.0, 1.0], [-1.0, 0.5]]), np.array([0.02, 0.05])
        out = controller.velocity_step(_make_evaluation(J, error), W, w, JointState(np.zeros(2)))
        best = _velocity_objective(J, error, out.command)
        for a in np.linspace(-0.5, 0.5, 101):
            for b in np.linspace(-0.5, 0.5, 101):
                u = np.array([a, b])
                if np.all(W @ u <= w):
                    assert _velocity_objective(J, error, u) >= best - 1e-12

    def test_closed_loop_error_decays_exponentially(self):
        scenario = load_desk()
        chain = scenario.robot.build_chain()
        plane = scenario.obstacle("table").build()
        controller = WholeBodyController(scenario.task)
        dt, margin = Config.VELOCITY_DT, 0.02
        q = np.zeros(chain.dof)
        initial = evaluate_task(scenario.task, chain, JointState(q), plane).error_norm
        for k in range(1, 1001):
            evaluation = evaluate_task(scenario.task, chain, JointState(q), plane)
            out = controller.velocity_step(evaluation, *_no_rows(chain.dof), JointState(q))
            q = q + dt * out.command
            error = evaluate_task(scenario.task, chain, JointState(q), plane).error_norm
            assert error <= initial * np.exp(-(ETA - margin) * k * dt)


# ---------------------------------------------------------------------------
# Acceleration level
# ---------------------------------------------------------------------------

class TestAccelerationStep:
    """Bounds, their collapse, and the unbounded variant."""

    def test_bounds_velocity_norm(self):
        controller = WholeBodyController(_make_task())
        qdot = np.array([0.1, -0.2])
        lower, upper = controller.acceleration_bounds(qdot, np.array([0.3]))
        np.testing.assert_allclose(lower, 2.0 * (-0.3 - qdot))
        np.testing.assert_allclose(upper, 2.0 * (0.3 - qdot))

    def test_bounds_with_error_term(self):
        controller = WholeBodyController(_make_task(bound_shape=BoundShape.VELOCITY_AND_ERROR_NORM))
        qdot = np.zeros(3)
        lower, upper = controller.acceleration_bounds(qdot, np.array([0.3]), np.array([-0.2]))
        np.testing.assert_allclose(upper, 2.0 * 0.5 * np.ones(3))
        np.testing.assert_allclose(lower, -upper)

    def test_collapsed_bounds_force_braking(self):
        controller = WholeBodyController(_make_task())
        qdot = np.array([0.5, -0.3])
        out = controller.acceleration_step(
            _make_evaluation(np.zeros((1, 2)), 0.0), *_no_rows(2), JointState(np.zeros(2), qdot),
        )
        assert out.status == QpStatus.OPTIMAL
        np.testing.assert_allclose(out.command, -2.0 * qdot, atol=1e-9)
        np.testing.assert_allclose(out.acceleration, out.command)

    def test_unbounded_variant_matches_least_squares(self):
        controller = WholeBodyController(_make_task(), bounded=False)
        qdot = np.array([0.2])
        out = controller.acceleration_step(_make_evaluation([[1.0]], 0.5), *_no_rows(1), JointState(np.zeros(1), qdot))
        beta = 1.5 * 0.2 + 0.3 * 0.5
        assert out.command[0] == pytest.approx(-beta / (1.0 + LAMBDA ** 2))

    def test_bounds_respected(self):
        rng = np.random.default_rng(91)
        controller = WholeBodyController(_make_task())
        for _ in range(20):
            n = int(rng.integers(1, 6))
            J = rng.normal(size=(1, n))
            qdot = rng.normal(size=n)
            rate = J @ qdot
            out = controller.acceleration_step(
                _make_evaluation(J, rng.uniform(-0.5, 0.5), rate), *_no_rows(n), JointState(np.zeros(n), qdot),
            )
            lower, upper = controller.acceleration_bounds(qdot, rate)
            assert out.status == QpStatus.OPTIMAL
            assert np.all(out.command >= lower - 1e-9)
            assert np.all(out.command <= upper + 1e-9)

    def test_infeasible_uses_bound_midpoint(self):
        controller = WholeBodyController(_make_task())
        qdot = np.array([0.4])
        W, w = np.array([[1.0], [-1.0]]), np.array([-1.0, -1.0])
        out = controller.acceleration_step(_make_evaluation([[1.0]], 0.1), W, w, JointState(np.zeros(1), qdot))
        assert out.flagged
        assert out.status == QpStatus.INFEASIBLE
        np.testing.assert_allclose(out.command, -2.0 * qdot)


# ---------------------------------------------------------------------------
# Torque level
# ---------------------------------------------------------------------------

class TestTorqueStep:
    """tau = n + M u_a on a 1-DOF pendulum."""

    def _make_model(self) -> RigidBodyModel:
        chain = SerialChain((RevoluteJoint(np.array([1.0, 0, 0]), np.zeros(3), -np.pi, np.pi),))
        link = LinkInertia(0.5, np.array([0.0, 0.4, 0.0]), 1e-4 * np.eye(3))
        return RigidBodyModel(chain, (link,), np.array([0.0, 0.0, -9.81]))

    def test_torque_matches_inverse_dynamics(self):
        model = self._make_model()
        state = JointState(np.array([0.3]), np.array([-0.2]))
        tau = torque_from_acceleration(model, state, [0.7])
        np.testing.assert_allclose(tau, inverse_dynamics(model, state.q, state.qdot, [0.7]), atol=1e-12)

    def test_torque_step_wraps_acceleration_step(self):
        model = self._make_model()
        controller = WholeBodyController(_make_task())
        state = JointState(np.array([0.3]), np.array([0.1]))
        evaluation = _make_evaluation([[0.4]], 0.2, [0.04])
        accel = controller.acceleration_step(evaluation, *_no_rows(1), state)
        out = controller.torque_step(evaluation, *_no_rows(1), state, model)
        assert out.mode == ControllerMode.TORQUE
        np.testing.assert_allclose(out.acceleration, accel.command, atol=1e-12)
        np.testing.assert_allclose(out.command, torque_from_acceleration(model, state, accel.command), atol=1e-12)

    def test_torque_step_hands_dynamics_to_plant(self):
        model = self._make_model()
        controller = WholeBodyController(_make_task())
        state = JointState(np.array([-0.6]), np.array([0.3]))
        out = controller.torque_step(_make_evaluation([[0.4]], 0.2, [0.12]), *_no_rows(1), state, model)
        assert out.dynamics is not None
        qddot = forward_dynamics(model, state.q, state.qdot, out.command, out.dynamics)
        np.testing.assert_allclose(qddot, out.acceleration, atol=1e-12)

    def test_shared_terms_match_fresh_terms(self):
        model = self._make_model()
        state = JointState(np.array([1.1]), np.array([-0.4]))
        terms = dynamic_terms(model, state.q, state.qdot)
        np.testing.assert_allclose(
            torque_from_acceleration(model, state, [0.25], terms),
            torque_from_acceleration(model, state, [0.25]),
            atol=1e-14,
        )


# ---------------------------------------------------------------------------
# Task evaluation
# ---------------------------------------------------------------------------

class TestEvaluateTask:
    """Hand-to-table distance on the bundled scenario."""

    def test_desk_home_pose(self):
        scenario = load_desk()
        chain = scenario.robot.build_chain()
        plane = scenario.obstacle("table").build()
        evaluation = evaluate_task(scenario.task, chain, JointState(np.zeros(chain.dof)), plane)
        assert evaluation.error[0] == pytest.approx(0.15)
        assert evaluation.jacobian.shape == (1, chain.dof)
        np.testing.assert_allclose(evaluation.error_rate, [0.0])

    def test_error_rate_is_jacobian_times_velocity(self):
        scenario = load_desk()
        chain = scenario.robot.build_chain()
        plane = scenario.obstacle("table").build()
        rng = np.random.default_rng(92)
        state = JointState(rng.uniform(-0.3, 0.3, chain.dof), rng.normal(size=chain.dof))
        evaluation = evaluate_task(scenario.task, chain, state, plane, with_derivative=True)
        np.testing.assert_allclose(evaluation.error_rate, evaluation.jacobian @ state.qdot)
        assert evaluation.jacobian_dot.shape == (1, chain.dof)

    def test_target_value_shifts_error(self):
        scenario = load_desk()
        chain = scenario.robot.build_chain()
        plane = scenario.obstacle("table").build()
        task = scenario.task.model_copy(update={"target_value": 0.05})
        evaluation = evaluate_task(task, chain, JointState(np.zeros(chain.dof)), plane)
        assert evaluation.error[0] == pytest.approx(0.10)
