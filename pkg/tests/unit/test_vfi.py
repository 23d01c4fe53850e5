"""Unit tests for VFI rows and the second-order safety oracle in src/core/vfi.py."""

import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import solve_ivp

sys.path.insert(0, str(Path(__file__).resolve().parents[2] / "src"))

from core.errors import DimensionError, HypothesisError, LemmaCondition
from core.geometry import dist_point_plane, line_through, metric_from_phi, plane_through
from core.kinematics import (
    LineKinematics,
    PointKinematics,
    RevoluteJoint,
    SerialChain,
    forward_kinematics,
    jacobian_time_derivative,
    point_plane_distance_jacobian,
    relative_angle_jacobian,
)
from core.schemas import ConstraintKind, ConstraintSpec, Direction
from core.vfi import (
    ConstraintRow,
    cone_row,
    first_order_row,
    joint_limit_rows,
    lemma_oracle,
    second_order_row,
    stack,
    torso_arm_distance,
    torso_arm_row,
)
from tests.fixtures.reference_models import joint_limit_lines, random_chain, random_q

# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _make_spec(direction=Direction.KEEP_OUT, **kwargs) -> ConstraintSpec:
    fields = {"name": "c", "kind": ConstraintKind.POINT_PLANE, "robot": "hand", "obstacle": "wall"}
    fields.update(kwargs)
    return ConstraintSpec(direction=direction, **fields)


def _make_cone(safe_angle=0.1) -> ConstraintSpec:
    return ConstraintSpec(name="cone", kind=ConstraintKind.CONE, robot="cup", obstacle="up", safe_angle=safe_angle)


def _make_torso_arm() -> ConstraintSpec:
    return ConstraintSpec(
        name="torso-arm", kind=ConstraintKind.TORSO_ARM,
        torso="torso", forearm="forearm", hand="hand", elbow="elbow", safe_distance=0.07,
    )


def _static_line(p, l, n=2) -> LineKinematics:
    return LineKinematics.static(line_through(p, l), n)


def _static_point(p, n=2) -> PointKinematics:
    return PointKinematics(np.asarray(p, dtype=float), np.zeros((3, n)))


def _make_chain(n: int, lower=-1.5, upper=1.5) -> SerialChain:
    axes = ([0, 0, 1], [0, 1, 0])
    joints = tuple(
        RevoluteJoint(np.array(axes[i % 2], dtype=float), np.array([0.0, 0.0, 0.1 * (i > 0)]), lower, upper)
        for i in range(n)
    )
    return SerialChain(joints)


# ---------------------------------------------------------------------------
# Distance rows
# ---------------------------------------------------------------------------

class TestFirstOrderRow:
    """-J qdot <= eta d~ (keep-out) and its keep-in mirror."""

    def test_boundary_allows_zero_approach(self):
        row = first_order_row(_make_spec(safe_distance=0.07), 0.07, np.array([1.0, 2.0]))
        assert row.rhs == pytest.approx(0.0)

    def test_published_gain_arithmetic(self):
        row = first_order_row(_make_spec(safe_distance=0.07, eta=0.36), 0.17, np.array([1.0, 2.0]))
        assert row.rhs == pytest.approx(0.036)
        np.testing.assert_allclose(row.jacobian, [-1.0, -2.0])
        assert row.error == pytest.approx(0.10)

    def test_keep_in_negates_row(self):
        J = np.array([0.5, -0.25])
        out = first_order_row(_make_spec(safe_distance=0.05), 0.2, J)
        inside = first_order_row(_make_spec(Direction.KEEP_IN, safe_distance=0.05), 0.2, J)
        np.testing.assert_allclose(inside.jacobian, -out.jacobian)
        assert inside.rhs == pytest.approx(-out.rhs)

    def test_slack(self):
        row = ConstraintRow(np.array([1.0, 0.0]), 0.5, "r")
        assert row.slack(np.array([0.2, 9.0])) == pytest.approx(0.3)

    def test_non_finite_row_rejected(self):
        with pytest.raises(ValueError):
            ConstraintRow(np.array([np.nan, 0.0]), 0.5, "r")

    def test_saturated_row_keeps_error_sign(self):
        # 1-D point with d = x and J = [1]; the command sits on the row boundary.
        eta, safe = 0.36, 0.1
        for direction, d0 in ((Direction.KEEP_OUT, 0.5), (Direction.KEEP_IN, 0.02)):
            spec = _make_spec(direction, safe_distance=safe, eta=eta)

            def rate(_, y, spec=spec):
                row = first_order_row(spec, y[0], np.array([1.0]))
                return [row.rhs / row.jacobian[0]]

            t = np.linspace(0.0, 30.0, 301)
            sol = solve_ivp(rate, (0.0, 30.0), [d0], t_eval=t, rtol=1e-10, atol=1e-12)
            error = sol.y[0] - safe
            assert np.all(np.sign(error) == np.sign(d0 - safe))
            np.testing.assert_allclose(error, (d0 - safe) * np.exp(-eta * t), atol=1e-8)


class TestSecondOrderRow:
    """beta = (eta1 J + Jdot) qdot + eta2 d~."""

    def test_rest_at_boundary(self):
        row = second_order_row(_make_spec(safe_distance=0.07), 0.07, np.ones(3), np.ones(3), np.zeros(3))
        assert row.rhs == pytest.approx(0.0)

    def test_published_gain_arithmetic(self):
        spec = _make_spec(safe_distance=0.0, eta1=1.5, eta2=0.3)
        row = second_order_row(spec, 0.1, np.ones(2), np.zeros(2), np.zeros(2))
        assert row.rhs == pytest.approx(0.03)

    def test_random_inputs_match_formula(self):
        rng = np.random.default_rng(80)
        for _ in range(100):
            eta1 = rng.uniform(0.5, 3.0)
            eta2 = rng.uniform(0.01, eta1 ** 2 / 4 * 0.99)
            safe = rng.uniform(0.0, 0.2)
            spec = _make_spec(safe_distance=safe, eta1=eta1, eta2=eta2)
            n = int(rng.integers(1, 10))
            J, Jdot, qdot = rng.normal(size=n), rng.normal(size=n), rng.normal(size=n)
            d = rng.uniform(0.0, 1.0)
            expected = eta1 * J @ qdot + Jdot @ qdot + eta2 * (d - safe)
            row = second_order_row(spec, d, J, Jdot, qdot)
            assert row.rhs == pytest.approx(expected, rel=1e-12, abs=1e-14)
            np.testing.assert_allclose(row.jacobian, -J)

    def test_rhs_is_quadratic_in_velocity_scale(self):
        # beta(alpha qdot) = alpha^2 Jdot(qdot) qdot + alpha eta1 J qdot + eta2 d~
        spec = _make_spec(safe_distance=0.05, eta1=1.5, eta2=0.3)
        chain = _make_chain(4)
        plane = plane_through([0.0, 0.0, -0.5], [0.3, 0.2, 1.0])
        local = np.array([0.2, 0.1, 0.05])
        rng = np.random.default_rng(83)
        q, qdot = rng.uniform(-1.0, 1.0, 4), rng.normal(size=4)

        def jac(qq):
            return point_plane_distance_jacobian(chain, qq, 4, local, plane)

        J = jac(q).row
        d = dist_point_plane(forward_kinematics(chain, q).point(4, local), plane)
        alphas = np.linspace(-2.0, 2.0, 9)
        rhs = [
            second_order_row(spec, d, J, jacobian_time_derivative(chain, q, a * qdot, jac).row, a * qdot).rhs
            for a in alphas
        ]
        c2, c1, c0 = np.polyfit(alphas, rhs, 2)
        Jdot = jacobian_time_derivative(chain, q, qdot, jac).row
        assert c2 == pytest.approx(Jdot @ qdot, abs=1e-6)
        assert c1 == pytest.approx(1.5 * J @ qdot, abs=1e-6)
        assert c0 == pytest.approx(0.3 * (d - 0.05), abs=1e-6)


# ---------------------------------------------------------------------------
# Cones and joint limits
# ---------------------------------------------------------------------------

class TestConeRow:
    """Keep-in on the angle metric."""

    def test_at_safe_angle(self):
        l = np.array([0.0, 0.0, 1.0])
        l_z = np.array([np.sin(0.1), 0.0, np.cos(0.1)])
        row = cone_row(_make_cone(), l_z, line_through([0, 0, 0], l), np.array([1.0, 0.0]))
        assert row.rhs == pytest.approx(0.0, abs=1e-12)

    def test_aligned_axis(self):
        row = cone_row(_make_cone(), np.array([0.0, 0.0, 1.0]), line_through([0, 0, 0], [0, 0, 1]), np.zeros(2))
        assert row.error == pytest.approx(-0.0099834, abs=1e-7)
        assert row.rhs == pytest.approx(0.003594, abs=1e-6)
        # Zero row with positive rhs: inactive for every velocity.
        assert row.slack(np.array([10.0, -10.0])) > 0

    def test_second_order_needs_velocity(self):
        with pytest.raises(ValueError):
            cone_row(_make_cone(), np.array([0.0, 0.0, 1.0]), line_through([0, 0, 0], [0, 0, 1]), np.zeros(2), np.zeros(2))


class TestJointLimitRows:
    """One keep-in cone per joint, safe angle = half range."""

    def test_one_row_per_joint(self):
        chain = _make_chain(9)
        rows = joint_limit_rows(chain, np.zeros(9))
        assert len(rows) == 9
        assert [r.tag for r in rows] == [f"joint_limits[{j}]" for j in range(9)]

    def test_mid_range_is_maximally_interior(self):
        chain = _make_chain(3)
        for row in joint_limit_rows(chain, np.zeros(3)):
            assert row.error == pytest.approx(-metric_from_phi(1.5))

    def test_at_bound(self):
        chain = _make_chain(3)
        rows = joint_limit_rows(chain, np.array([1.5, -1.5, 0.0]))
        assert rows[0].error == pytest.approx(0.0, abs=1e-12)
        assert rows[0].rhs == pytest.approx(0.0, abs=1e-12)
        assert rows[1].error == pytest.approx(0.0, abs=1e-12)

    def test_outward_motion_is_blocked_at_the_bound(self):
        chain = _make_chain(2)
        rows = joint_limit_rows(chain, np.array([1.5, 0.3]))
        # Moving joint 0 further out violates its row; moving back in satisfies it.
        assert rows[0].slack(np.array([0.1, 0.0])) < 0
        assert rows[0].slack(np.array([-0.1, 0.0])) > 0

    def test_second_order_rows(self):
        chain = _make_chain(3)
        rows = joint_limit_rows(chain, np.array([0.2, -0.4, 0.1]), np.array([0.3, 0.1, -0.2]), second_order=True)
        assert len(rows) == 3
        with pytest.raises(ValueError):
            joint_limit_rows(chain, np.zeros(3), None, second_order=True)

    def test_wrong_configuration_length(self):
        with pytest.raises(DimensionError):
            joint_limit_rows(_make_chain(3), np.zeros(2))

    def test_matches_line_construction(self):
        rng = np.random.default_rng(84)
        spec = ConstraintSpec(name="joint_limits", kind=ConstraintKind.JOINT_LIMITS)
        for _ in range(30):
            chain = random_chain(rng, int(rng.integers(1, 10)))
            q, qdot = random_q(rng, chain), rng.normal(size=chain.dof)
            first = joint_limit_rows(chain, q, spec=spec)
            second = joint_limit_rows(chain, q, qdot, spec, second_order=True)
            for j, joint in enumerate(chain.joints):
                moving, reference = joint_limit_lines(chain, q, j)
                f = float((moving.l - reference.l) @ (moving.l - reference.l))
                J = relative_angle_jacobian(moving, reference)
                Jdot = jacobian_time_derivative(
                    chain, q, qdot, lambda qq, j=j: relative_angle_jacobian(*joint_limit_lines(chain, qq, j))
                ).matrix
                f_tilde = f - metric_from_phi(joint.half_range)
                assert first[j].error == pytest.approx(f_tilde, abs=1e-10)
                np.testing.assert_allclose(first[j].jacobian, J, atol=1e-10)
                assert first[j].rhs == pytest.approx(-spec.eta * f_tilde, abs=1e-10)
                expected = -((spec.eta1 * J + Jdot) @ qdot + spec.eta2 * f_tilde)
                assert second[j].rhs == pytest.approx(expected, abs=1e-6)


# ---------------------------------------------------------------------------
# Torso / forearm
# ---------------------------------------------------------------------------

class TestTorsoArm:
    """Line-line distance with the point-line fallback."""

    def test_skew_lines(self):
        spec = _make_torso_arm()
        torso = _static_line([0, 0, 0], [0, 0, 1])
        forearm = _static_line([0.2, 0, 0.5], [0, 1, 0])
        row = torso_arm_row(spec, torso, forearm, _static_point([0.2, 0.3, 0.5]), _static_point([0.2, 0.1, 0.5]))
        assert row.branch == "line_line"
        assert row.rhs == pytest.approx(0.36 * 0.13)
        assert row.tag == "torso-arm"

    def test_intersecting_lines_use_closer_point(self):
        spec = _make_torso_arm()
        torso = _static_line([0, 0, 0], [0, 0, 1])
        forearm = _static_line([0, 0, 0.5], [0, 1, 0])
        hand, elbow = _static_point([0, 0.3, 0.5]), _static_point([0, 0.1, 0.5])
        measure = torso_arm_distance(spec, torso, forearm, hand, elbow)
        assert measure.branch == "point_line:elbow"
        assert measure.distance == pytest.approx(0.1)
        row = torso_arm_row(spec, torso, forearm, hand, elbow)
        assert row.rhs == pytest.approx(0.36 * (0.1 - 0.07))

    def test_hand_branch(self):
        spec = _make_torso_arm()
        torso = _static_line([0, 0, 0], [0, 0, 1])
        forearm = _static_line([0, 0, 0.5], [0, 1, 0])
        measure = torso_arm_distance(spec, torso, forearm, _static_point([0, 0.05, 0.5]), _static_point([0, 0.2, 0.5]))
        assert measure.branch == "point_line:hand"
        assert measure.distance == pytest.approx(0.05)

    def test_branch_distance_is_continuous_near_the_switch(self):
        spec = _make_torso_arm()
        torso = _static_line([0, 0, 0], [0, 0, 1])
        hand, elbow = _static_point([0.0, 0.3, 0.5]), _static_point([0.0, 0.0, 0.5])
        # Forearm passes through the elbow; its offset from the torso shrinks through the switch.
        for offset in (2e-4, 1.01e-4, 0.99e-4, 5e-5):
            forearm = _static_line([offset, 0, 0.5], [0, 1, 0])
            elbow = _static_point([offset, 0.0, 0.5])
            measure = torso_arm_distance(spec, torso, forearm, hand, elbow)
            assert measure.distance == pytest.approx(offset, abs=1e-12)


# ---------------------------------------------------------------------------
# Stacking
# ---------------------------------------------------------------------------

class TestStack:
    def test_empty(self):
        W, w = stack([], 4)
        assert W.shape == (0, 4)
        assert w.shape == (0,)

    def test_order_preserved(self):
        rows = [ConstraintRow(np.array([1.0, 0.0]), 1.0, "a"), ConstraintRow(np.array([0.0, 1.0]), 2.0, "b")]
        W, w = stack(rows, 2)
        np.testing.assert_allclose(W, np.eye(2))
        np.testing.assert_allclose(w, [1.0, 2.0])

    def test_column_mismatch(self):
        with pytest.raises(DimensionError):
            stack([ConstraintRow(np.ones(3), 0.0, "a")], 2)


# ---------------------------------------------------------------------------
# Second-order safety oracle
# ---------------------------------------------------------------------------

class TestLemmaOracle:
    """Saturated distance dynamics stay positive under the gain hypotheses."""

    def test_published_example(self):
        trace = lemma_oracle(3.0, 1.0, 1.0, -1.0)
        assert trace.min_distance > 0
        assert trace.r1 == pytest.approx((-3 + np.sqrt(5)) / 2)
        assert trace.r2 == pytest.approx((-3 - np.sqrt(5)) / 2)

    def test_from_rest_decreases_monotonically(self):
        trace = lemma_oracle(1.5, 0.3, 0.5, 0.0, horizon=20.0)
        assert np.all(np.diff(trace.distance) < 0)
        assert trace.min_distance > 0
        assert trace.c1 > 0

    def test_boundary_rate_accepted(self):
        trace = lemma_oracle(2.0, 0.5, 1.0, -1.0)
        assert trace.min_distance > 0

    def test_approach_rate_rejected(self):
        with pytest.raises(HypothesisError) as info:
            lemma_oracle(1.999, 0.5, 1.0, -1.0)
        assert info.value.condition == LemmaCondition.APPROACH_RATE

    def test_random_hypotheses_hold(self):
        rng = np.random.default_rng(81)
        for _ in range(100):
            d0 = rng.uniform(0.2, 2.0)
            rate0 = rng.uniform(-1.0, 1.0)
            eta1 = max(2.0 * abs(rate0) / d0, 0.1) + rng.uniform(0.0, 5.0)
            eta2 = rng.uniform(0.01, 0.99) * eta1 ** 2 / 4.0
            trace = lemma_oracle(eta1, eta2, d0, rate0, horizon=50.0, dt=0.05)
            assert trace.integration_error < 1e-8
            assert trace.min_distance > 0

    def test_violations_name_the_condition(self):
        cases = [
            ((0.0, 0.3, 1.0, 0.0), LemmaCondition.GAINS),
            ((1.5, -0.3, 1.0, 0.0), LemmaCondition.GAINS),
            ((1.0, 0.25, 1.0, 0.0), LemmaCondition.DISCRIMINANT),
            ((1.0, 1.0, 1.0, 0.0), LemmaCondition.DISCRIMINANT),
            ((1.5, 0.3, 0.0, 0.0), LemmaCondition.INITIAL_DISTANCE),
            ((1.5, 0.3, -0.1, 0.0), LemmaCondition.INITIAL_DISTANCE),
            ((1.5, 0.3, 0.1, -1.0), LemmaCondition.APPROACH_RATE),
        ]
        rng = np.random.default_rng(82)
        for k in range(20):
            args, condition = cases[k % len(cases)]
            scale = rng.uniform(1.0, 2.0)
            eta1, eta2, d0, rate0 = args
            if condition == LemmaCondition.APPROACH_RATE:
                rate0 *= scale
            with pytest.raises(HypothesisError) as info:
                lemma_oracle(eta1, eta2, d0, rate0)
            assert info.value.condition == condition
