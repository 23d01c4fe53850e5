"""
Post-run collision checker.

Recomputes every enabled constraint's clearance from the joint trajectory with
plain vector algebra (closest points, projections, arccos), independent of
the Plücker-line routines the controller uses. A run passes when no recorded
configuration violates a safe value beyond tolerance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from core.config import Config
from core.kinematics import ChainPose, SerialChain, forward_kinematics
from core.schemas import (
    ConstraintKind,
    ConstraintSpec,
    CylinderConfig,
    Direction,
    LineConfig,
    PlaneConfig,
    Scenario,
    SphereConfig,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Violation:
    step: int
    constraint: str
    value: float
    safe: float


@dataclass(frozen=True)
class ClearanceEntry:
    """Clearance of one constraint at one configuration; excess > 0 is inside the unsafe set."""
    constraint: str
    value: float
    safe: float
    excess: float
    violated: bool


@dataclass
class CollisionReport:
    checked_steps: int = 0
    violations: list[Violation] = field(default_factory=list)
    worst: dict[str, float] = field(default_factory=dict)
    final: list[ClearanceEntry] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def _point_to_line(p, a, u) -> float:
    r = p - a
    return float(np.linalg.norm(r - (r @ u) * u))


def _line_to_line(a1, u1, a2, u2) -> float:
    n = np.cross(u1, u2)
    nn = float(np.linalg.norm(n))
    if nn < Config.PARALLEL_EPS:
        return _point_to_line(a1, a2, u2)
    return abs(float((a2 - a1) @ n)) / nn


def _line_to_segment(a, u, s0, s1) -> float:
    """Infinite line (a, u) against the segment s0-s1."""
    v = s1 - s0
    vv = float(v @ v)
    if vv == 0.0:
        return _point_to_line(s0, a, u)
    # Minimise |s0 + t v - line| over t in [0, 1]; the squared distance is quadratic in t.
    w0 = s0 - a
    perp_v = v - (v @ u) * u
    perp_w = w0 - (w0 @ u) * u
    denom = float(perp_v @ perp_v)
    t = 0.0 if denom < Config.PARALLEL_EPS else float(np.clip(-(perp_w @ perp_v) / denom, 0.0, 1.0))
    return _point_to_line(s0 + t * v, a, u)


class CollisionChecker:
    """Clearance of each enabled constraint along a joint trajectory."""

    def __init__(self, scenario: Scenario, chain: SerialChain | None = None):
        self.scenario = scenario
        self.chain = chain or scenario.robot.build_chain()
        self.obstacles = {o.name: o for o in scenario.obstacles}
        self.radii = {a.name: a.radius for a in scenario.robot.attachments}
        disabled = set(scenario.controller.disabled)
        self.specs = [c for c in scenario.constraints if c.name not in disabled]

    def _point(self, pose: ChainPose, name: str) -> np.ndarray:
        att = self.chain.attachment(name)
        return pose.point(att.frame, att.point)

    def _axis(self, pose: ChainPose, name: str) -> np.ndarray:
        att = self.chain.attachment(name)
        return _unit(pose.direction(att.frame, att.axis))

    def _static_line(self, name: str) -> tuple[np.ndarray, np.ndarray, float]:
        obstacle = self.obstacles[name]
        assert isinstance(obstacle, (LineConfig, CylinderConfig))
        radius = obstacle.radius if isinstance(obstacle, CylinderConfig) else 0.0
        return np.array(obstacle.point, dtype=float), _unit(obstacle.direction), radius

    def clearance(self, spec: ConstraintSpec, pose: ChainPose) -> float:
        """Distance (m) or angle (rad) the constraint compares with its safe value."""
        kind = spec.kind
        if kind == ConstraintKind.POINT_PLANE:
            plane = self.obstacles[spec.obstacle]
            assert isinstance(plane, PlaneConfig)
            p = self._point(pose, spec.robot)
            return float((p - np.array(plane.point)) @ _unit(plane.normal)) - self.radii[spec.robot]
        if kind == ConstraintKind.POINT_POINT:
            obstacle = self.obstacles[spec.obstacle]
            center = np.array(obstacle.center if isinstance(obstacle, SphereConfig) else obstacle.position)
            radius = obstacle.radius if isinstance(obstacle, SphereConfig) else 0.0
            return float(np.linalg.norm(self._point(pose, spec.robot) - center)) - radius - self.radii[spec.robot]
        if kind == ConstraintKind.POINT_LINE:
            a, u, radius = self._static_line(spec.obstacle)
            return _point_to_line(self._point(pose, spec.robot), a, u) - radius - self.radii[spec.robot]
        if kind == ConstraintKind.LINE_LINE:
            a, u, radius = self._static_line(spec.obstacle)
            d = _line_to_line(self._point(pose, spec.robot), self._axis(pose, spec.robot), a, u)
            return d - radius - self.radii[spec.robot]
        if kind == ConstraintKind.CONE:
            _, u, _ = self._static_line(spec.obstacle)
            cos = float(np.clip(self._axis(pose, spec.robot) @ u, -1.0, 1.0))
            return float(np.arccos(cos))
        if kind == ConstraintKind.TORSO_ARM:
            d = _line_to_segment(
                self._point(pose, spec.torso),
                self._axis(pose, spec.torso),
                self._point(pose, spec.elbow),
                self._point(pose, spec.hand),
            )
            return d - self.radii[spec.torso] - self.radii[spec.forearm]
        raise ValueError(f"no clearance for {kind.value}")

    def _joint_entries(self, spec: ConstraintSpec, q: np.ndarray) -> list[ClearanceEntry]:
        tol = Config.COLLISION_ANGLE_TOL
        lower, upper = self.chain.lower, self.chain.upper
        over = np.maximum(lower - q, q - upper)
        entries = []
        for j, excess in enumerate(over):
            bound = lower[j] if q[j] < 0.5 * (lower[j] + upper[j]) else upper[j]
            entries.append(
                ClearanceEntry(f"{spec.name}[{j}]", float(q[j]), float(bound), float(excess), bool(excess > tol))
            )
        return entries

    def entries(self, q) -> list[ClearanceEntry]:
        """One entry per enabled constraint (per joint for joint limits) at configuration q."""
        q = np.asarray(q, dtype=float)
        pose = forward_kinematics(self.chain, q)
        entries: list[ClearanceEntry] = []
        for spec in self.specs:
            if spec.kind == ConstraintKind.JOINT_LIMITS:
                entries.extend(self._joint_entries(spec, q))
                continue
            value = self.clearance(spec, pose)
            angular = spec.kind == ConstraintKind.CONE
            safe = spec.safe_angle if angular else spec.safe_distance
            tol = Config.COLLISION_ANGLE_TOL if angular else Config.COLLISION_TOL
            excess = safe - value if spec.direction == Direction.KEEP_OUT else value - safe
            entries.append(ClearanceEntry(spec.name, value, safe, excess, bool(excess > tol)))
        return entries

    def check(self, trajectory) -> CollisionReport:
        """
        Check every configuration of a trajectory.

        Args:
            trajectory: iterable of joint position vectors

        Returns:
            CollisionReport; `worst` holds the worst margin per constraint,
            negative when inside the safe set, and `final` the entries of the
            last configuration
        """
        report = CollisionReport()
        for step, q in enumerate(trajectory):
            entries = self.entries(q)
            for entry in entries:
                report.worst[entry.constraint] = max(report.worst.get(entry.constraint, -np.inf), entry.excess)
                if entry.violated:
                    report.violations.append(Violation(step, entry.constraint, entry.value, entry.safe))
            report.final = entries
            report.checked_steps += 1

        if report.violations:
            first = report.violations[0]
            logger.warning(
                f"[Collision] {len(report.violations)} violations, first at step {first.step} "
                f"({first.constraint}: {first.value:.6g} vs safe {first.safe:.6g})"
            )
        else:
            logger.info(f"[Collision] {report.checked_steps} configurations clear")
        return report
