"""
Constraint assembly service.

Turns the scenario's ConstraintSpec list into VFI rows for one joint state,
in scenario order. Every constraint is measured (so the log can report it);
only the enforced ones contribute rows to (W, w).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from core.errors import DegenerateGeometry
from core.geometry import (
    Cylinder,
    Line,
    Plane,
    Sphere,
    angle_metric,
    dist_line_line,
    dist_point_line,
    dist_point_plane,
    phi_from_metric,
    primitive_radius,
)
from core.kinematics import (
    ChainPose,
    JointState,
    LineKinematics,
    SerialChain,
    attachment_line_kinematics,
    attachment_point_kinematics,
    forward_kinematics,
    jacobian_time_derivative,
    relative_angle_jacobian,
    relative_line_line_jacobian,
    relative_point_line_jacobian,
)
from core.schemas import ConstraintKind, ConstraintSpec, Direction, Scenario
from core.vfi import (
    ConstraintRow,
    cone_row,
    first_order_row,
    joint_limit_rows,
    second_order_row,
    stack,
    torso_arm_distance,
    torso_arm_row,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class _Measure:
    distance: float
    jacobian: np.ndarray
    branch: str = ""
    line: LineKinematics | None = None
    parts: tuple = ()


@dataclass
class AssembledConstraints:
    rows: list[ConstraintRow]
    W: np.ndarray
    w: np.ndarray
    errors: dict[str, float] = field(default_factory=dict)
    angles: dict[str, float] = field(default_factory=dict)
    branches: dict[str, str] = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return self.W.shape[0]


class ConstraintAssembler:
    """Builds the VFI stack for a scenario."""

    def __init__(self, scenario: Scenario, chain: SerialChain | None = None, enforce: bool = True):
        self.scenario = scenario
        self.chain = chain or scenario.robot.build_chain()
        self.obstacles = {o.name: o.build() for o in scenario.obstacles}
        self.radii = {a.name: a.radius for a in scenario.robot.attachments}
        # Disabled constraints are still measured and logged, just not enforced.
        self.monitored = list(scenario.constraints)
        self.enforced = {c.name for c in scenario.active_constraints()} if enforce else set()
        self.directions: dict[str, Direction] = {}
        for spec in scenario.constraints:
            if spec.kind == ConstraintKind.JOINT_LIMITS:
                for j in range(self.chain.dof):
                    self.directions[f"{spec.name}[{j}]"] = Direction.KEEP_IN
            else:
                self.directions[spec.name] = spec.direction

    def census(self) -> dict[str, int]:
        """Enforced row count per constraint name."""
        return {
            spec.name: (self.chain.dof if spec.kind == ConstraintKind.JOINT_LIMITS else 1)
            for spec in self.scenario.constraints
            if spec.name in self.enforced
        }

    # ------------------------------------------------------------------
    # Measurement
    # ------------------------------------------------------------------

    def _static_line(self, name: str):
        obstacle = self.obstacles[name]
        if isinstance(obstacle, Cylinder):
            return obstacle.axis, primitive_radius(obstacle)
        if isinstance(obstacle, Line):
            return obstacle.line, primitive_radius(obstacle)
        raise DegenerateGeometry(f"obstacle {name!r} is not a line")

    def _measure(self, spec: ConstraintSpec, q, pose: ChainPose | None, branch: str | None = None) -> _Measure:
        chain = self.chain
        kind = spec.kind
        n = chain.dof

        if kind == ConstraintKind.TORSO_ARM:
            parts = (
                attachment_line_kinematics(chain, q, spec.torso, pose),
                attachment_line_kinematics(chain, q, spec.forearm, pose),
                attachment_point_kinematics(chain, q, spec.hand, pose),
                attachment_point_kinematics(chain, q, spec.elbow, pose),
            )
            measure = torso_arm_distance(spec, *parts, branch)
            distance = measure.distance - self._body_radius(spec)
            return _Measure(distance, measure.jacobian, measure.branch, parts=parts)

        if kind == ConstraintKind.CONE:
            moving = attachment_line_kinematics(chain, q, spec.robot, pose)
            line, _ = self._static_line(spec.obstacle)
            static = LineKinematics.static(line, n)
            f = angle_metric(moving.l, line.l)
            return _Measure(f, relative_angle_jacobian(moving, static), line=moving)

        if kind == ConstraintKind.LINE_LINE:
            moving = attachment_line_kinematics(chain, q, spec.robot, pose)
            line, obstacle_radius = self._static_line(spec.obstacle)
            static = LineKinematics.static(line, n)
            radius = self.radii[spec.robot] + obstacle_radius
            if branch is None:
                branch = "line_line" if dist_line_line(moving.line, line) > spec.switch_eps else "point_line"
            if branch == "line_line":
                d = dist_line_line(moving.line, line)
                jac = relative_line_line_jacobian(moving, static, threshold=0.0)
            else:
                d = dist_point_line(moving.p, line)
                jac = _safe_point_line(moving.p, moving.J_p, static)
            return _Measure(d - radius, jac, branch)

        point = attachment_point_kinematics(chain, q, spec.robot, pose)
        obstacle = self.obstacles[spec.obstacle]
        radius = self.radii[spec.robot]

        if kind == ConstraintKind.POINT_PLANE:
            assert isinstance(obstacle, Plane)
            return _Measure(dist_point_plane(point.p, obstacle) - radius, obstacle.n @ point.J_p)

        if kind == ConstraintKind.POINT_POINT:
            center = obstacle.center if isinstance(obstacle, Sphere) else obstacle.p
            radius += primitive_radius(obstacle)
            diff = point.p - center
            dist = float(np.linalg.norm(diff))
            jac = (diff / dist) @ point.J_p if dist > 0 else np.zeros(n)
            return _Measure(dist - radius, jac)

        if kind == ConstraintKind.POINT_LINE:
            line, obstacle_radius = self._static_line(spec.obstacle)
            d = dist_point_line(point.p, line)
            jac = _safe_point_line(point.p, point.J_p, LineKinematics.static(line, n))
            return _Measure(d - radius - obstacle_radius, jac)

        raise ValueError(f"unsupported constraint kind {kind}")

    # ------------------------------------------------------------------
    # Assembly
    # ------------------------------------------------------------------

    def assemble(self, state: JointState, second_order: bool = False, pose: ChainPose | None = None) -> AssembledConstraints:
        """
        Rows for the current state.

        First-order rows constrain joint velocities, second-order rows joint
        accelerations (Jdot by central difference along qdot).
        """
        chain = self.chain
        q, qdot = state.q, state.qdot
        pose = pose if pose is not None else forward_kinematics(chain, q)

        specs = [s for s in self.monitored if s.kind != ConstraintKind.JOINT_LIMITS]
        measures = {s.name: self._measure(s, q, pose) for s in specs}

        jdots: dict[str, np.ndarray] = {}
        dynamic = [s for s in specs if s.name in self.enforced] if second_order else []
        if dynamic:
            branches = {s.name: measures[s.name].branch or None for s in dynamic}

            def stacked(qq):
                qpose = forward_kinematics(chain, qq)
                return np.vstack([self._measure(s, qq, qpose, branches[s.name]).jacobian for s in dynamic])

            Jdot = jacobian_time_derivative(chain, q, qdot, stacked).matrix
            jdots = {s.name: Jdot[i] for i, s in enumerate(dynamic)}

        result = AssembledConstraints(rows=[], W=np.zeros((0, chain.dof)), w=np.zeros(0))
        enforced_rows: list[ConstraintRow] = []
        for spec in self.monitored:
            enforce = spec.name in self.enforced
            if spec.kind == ConstraintKind.JOINT_LIMITS:
                rows = joint_limit_rows(chain, q, qdot, spec, second_order and enforce)
            else:
                m = measures[spec.name]
                rows = [self._row(spec, m, jdots.get(spec.name), qdot)]
                if m.branch:
                    result.branches[spec.name] = m.branch
                if spec.kind == ConstraintKind.CONE:
                    result.angles[spec.name] = phi_from_metric(min(max(m.distance, 0.0), 4.0))
            for row in rows:
                result.errors[row.tag] = row.error
            result.rows.extend(rows)
            if enforce:
                enforced_rows.extend(rows)

        result.W, result.w = stack(enforced_rows, chain.dof)
        return result

    def _body_radius(self, spec: ConstraintSpec) -> float:
        return self.radii[spec.torso] + self.radii[spec.forearm]

    def _row(self, spec: ConstraintSpec, m: _Measure, jdot, qdot) -> ConstraintRow:
        if spec.kind == ConstraintKind.TORSO_ARM:
            return torso_arm_row(
                spec, *m.parts, jdot, qdot if jdot is not None else None, self._body_radius(spec)
            )
        if spec.kind == ConstraintKind.CONE:
            line, _ = self._static_line(spec.obstacle)
            return cone_row(spec, m.line.l, line, m.jacobian, jdot, qdot if jdot is not None else None)
        if jdot is None:
            row = first_order_row(spec, m.distance, m.jacobian)
        else:
            row = second_order_row(spec, m.distance, m.jacobian, jdot, qdot)
        if m.branch:
            row = ConstraintRow(row.jacobian, row.rhs, row.tag, row.error, m.branch)
        return row


def _safe_point_line(p, J_p, line: LineKinematics) -> np.ndarray:
    try:
        return relative_point_line_jacobian(p, J_p, line)
    except DegenerateGeometry:
        logger.debug("[Assembler] point on line, zero distance Jacobian")
        return np.zeros(J_p.shape[1])
