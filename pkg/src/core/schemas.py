"""
Core domain schemas using Pydantic.

Scenario files are validated against these models. Defaults reference
core.config so the published gains have a single source of truth.
"""

from __future__ import annotations

from enum import Enum
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from core.config import Config
from core.geometry import (
    Cylinder,
    Line,
    Plane,
    Point,
    Sphere,
    line_through,
    metric_from_phi,
    plane_through,
)
from core.kinematics import Attachment, RevoluteJoint, SerialChain

Vec3 = tuple[float, float, float]


# ---------------------------------------------------------------------------
# Enums
# ---------------------------------------------------------------------------


class Direction(str, Enum):
    """Which side of the safe value the robot must stay on."""
    KEEP_OUT = "keep_out"
    KEEP_IN = "keep_in"


class ControllerMode(str, Enum):
    """What the controller commands."""
    VELOCITY = "velocity"
    ACCELERATION = "acceleration"
    TORQUE = "torque"


class ControllerVariant(str, Enum):
    """Task-only QP, or the constrained QP with the full VFI stack."""
    QP = "qp"
    CQP = "cqp"


class QpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITER = "max_iter"


class BoundShape(str, Enum):
    """Shape function g in the acceleration bounds."""
    VELOCITY_NORM = "velocity_norm"
    VELOCITY_AND_ERROR_NORM = "velocity_and_error_norm"


class ConstraintKind(str, Enum):
    POINT_PLANE = "point_plane"
    POINT_POINT = "point_point"
    POINT_LINE = "point_line"
    LINE_LINE = "line_line"
    CONE = "cone"
    JOINT_LIMITS = "joint_limits"
    TORSO_ARM = "torso_arm"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _nonzero(v: Vec3, what: str) -> Vec3:
    if float(np.linalg.norm(v)) <= Config.MIN_DIRECTION_NORM:
        raise ValueError(f"{what} must be nonzero")
    return v


# ---------------------------------------------------------------------------
# Static obstacles
# ---------------------------------------------------------------------------


class PointConfig(_Strict):
    type: Literal["point"] = "point"
    name: str
    position: Vec3

    def build(self) -> Point:
        return Point(np.array(self.position))


class SphereConfig(_Strict):
    type: Literal["sphere"] = "sphere"
    name: str
    center: Vec3
    radius: float = Field(..., gt=0)

    def build(self) -> Sphere:
        return Sphere(np.array(self.center), self.radius)


class LineConfig(_Strict):
    type: Literal["line"] = "line"
    name: str
    point: Vec3
    direction: Vec3

    @field_validator("direction")
    @classmethod
    def direction_nonzero(cls, v: Vec3) -> Vec3:
        return _nonzero(v, "line direction")

    def build(self) -> Line:
        return Line(line_through(self.point, self.direction))


class CylinderConfig(_Strict):
    type: Literal["cylinder"] = "cylinder"
    name: str
    point: Vec3
    direction: Vec3
    radius: float = Field(..., gt=0)

    @field_validator("direction")
    @classmethod
    def direction_nonzero(cls, v: Vec3) -> Vec3:
        return _nonzero(v, "cylinder direction")

    def build(self) -> Cylinder:
        return Cylinder(line_through(self.point, self.direction), self.radius)


class PlaneConfig(_Strict):
    type: Literal["plane"] = "plane"
    name: str
    point: Vec3
    normal: Vec3

    @field_validator("normal")
    @classmethod
    def normal_nonzero(cls, v: Vec3) -> Vec3:
        return _nonzero(v, "plane normal")

    def build(self) -> Plane:
        return plane_through(self.point, self.normal)


PrimitiveConfig = Annotated[
    Union[PointConfig, SphereConfig, LineConfig, CylinderConfig, PlaneConfig],
    Field(discriminator="type"),
]


# ---------------------------------------------------------------------------
# Robot
# ---------------------------------------------------------------------------


class JointConfig(_Strict):
    """Revolute joint: axis and origin in the parent frame."""
    name: str
    axis: Vec3
    origin: Vec3 = (0.0, 0.0, 0.0)
    lower: float = Field(..., description="Lower bound (rad)")
    upper: float = Field(..., description="Upper bound (rad)")

    @field_validator("axis")
    @classmethod
    def axis_nonzero(cls, v: Vec3) -> Vec3:
        return _nonzero(v, "joint axis")

    @model_validator(mode="after")
    def bounds_ordered(self) -> JointConfig:
        if not self.lower < self.upper:
            raise ValueError("lower must be < upper")
        if self.upper - self.lower > 2.0 * np.pi:
            raise ValueError("joint range must not exceed 2*pi")
        return self

    def build(self) -> RevoluteJoint:
        axis = np.array(self.axis)
        return RevoluteJoint(axis / np.linalg.norm(axis), np.array(self.origin), self.lower, self.upper, self.name)


class AttachmentConfig(_Strict):
    """Point (and optional axis) fixed in a chain frame; radius models a sphere/cylinder body."""
    name: str
    frame: int = Field(..., ge=0)
    point: Vec3 = (0.0, 0.0, 0.0)
    axis: Optional[Vec3] = None
    radius: float = Field(default=0.0, ge=0)

    @field_validator("axis")
    @classmethod
    def axis_nonzero(cls, v: Optional[Vec3]) -> Optional[Vec3]:
        return None if v is None else _nonzero(v, "attachment axis")

    def build(self) -> Attachment:
        return Attachment(self.frame, np.array(self.point), None if self.axis is None else np.array(self.axis))


class InertiaConfig(_Strict):
    """Uniform-rod link inertia applied to every link."""
    link_mass: float = Field(default=Config.DEFAULT_LINK_MASS, gt=0)
    rod_radius: float = Field(default=Config.DEFAULT_ROD_RADIUS, gt=0)
    tip: Vec3 = Config.DEFAULT_TIP
    gravity: Vec3 = Config.GRAVITY


class RobotConfig(_Strict):
    joints: list[JointConfig] = Field(..., min_length=1)
    attachments: list[AttachmentConfig] = Field(default_factory=list)
    base_position: Vec3 = (0.0, 0.0, 0.0)
    base_rotation: Vec3 = Field(default=(0.0, 0.0, 0.0), description="Rotation vector (rad)")
    inertia: InertiaConfig = Field(default_factory=InertiaConfig)

    @property
    def dof(self) -> int:
        return len(self.joints)

    def build_chain(self) -> SerialChain:
        from scipy.spatial.transform import Rotation

        return SerialChain(
            joints=tuple(j.build() for j in self.joints),
            attachments={a.name: a.build() for a in self.attachments},
            base_rotation=Rotation.from_rotvec(self.base_rotation).as_matrix(),
            base_position=np.array(self.base_position),
        )


# ---------------------------------------------------------------------------
# Task and constraints
# ---------------------------------------------------------------------------


class TaskSpec(_Strict):
    """Point-to-plane distance task: drive the attachment onto the target plane."""
    kind: Literal["point_plane"] = "point_plane"
    attachment: str
    target: str
    target_value: float = Field(default=0.0, description="Desired signed distance (m)")
    gain: float = Field(default=Config.TASK_GAIN, gt=0, description="eta (1/s)")
    damping: float = Field(default=Config.DAMPING, gt=0, description="lambda")
    kd: float = Field(default=Config.KD, gt=0)
    kp: float = Field(default=Config.KP, gt=0)
    bound_scale: float = Field(default=Config.BOUND_SCALE, ge=0, description="k in the acceleration bounds")
    bound_shape: BoundShape = BoundShape(Config.DEFAULT_BOUND_SHAPE)

    @model_validator(mode="after")
    def gains_overdamped(self) -> TaskSpec:
        if self.kd ** 2 - 4.0 * self.kp <= 0:
            raise ValueError("kd^2 - 4 kp must be > 0")
        return self


_LINE_REFS = {
    ConstraintKind.LINE_LINE: ("robot",),
    ConstraintKind.CONE: ("robot",),
    ConstraintKind.TORSO_ARM: ("torso", "forearm"),
}
_OBSTACLE_KINDS = {
    ConstraintKind.POINT_PLANE: ("plane",),
    ConstraintKind.POINT_POINT: ("point", "sphere"),
    ConstraintKind.POINT_LINE: ("line", "cylinder"),
    ConstraintKind.LINE_LINE: ("line", "cylinder"),
    ConstraintKind.CONE: ("line", "cylinder"),
}


class ConstraintSpec(_Strict):
    """One VFI: a robot entity against an obstacle (or the joint ranges), with gains."""
    name: str
    kind: ConstraintKind
    direction: Optional[Direction] = None
    robot: Optional[str] = Field(default=None, description="Robot attachment")
    obstacle: Optional[str] = Field(default=None, description="Static obstacle")
    torso: Optional[str] = None
    forearm: Optional[str] = None
    hand: Optional[str] = None
    elbow: Optional[str] = None
    safe_distance: float = Field(default=0.0, ge=0, description="m")
    safe_angle: Optional[float] = Field(default=None, ge=0, le=np.pi, description="rad")
    eta: float = Field(default=Config.CONSTRAINT_GAIN, ge=0)
    eta1: float = Field(default=Config.ETA1, gt=0)
    eta2: float = Field(default=Config.ETA2, gt=0)
    switch_eps: float = Field(default=Config.SWITCH_EPS, gt=0)

    @model_validator(mode="after")
    def check_kind_fields(self) -> ConstraintSpec:
        if self.eta1 ** 2 - 4.0 * self.eta2 <= 0:
            raise ValueError("eta1^2 - 4 eta2 must be > 0")
        kind = self.kind
        if self.direction is None:
            angular = kind in (ConstraintKind.CONE, ConstraintKind.JOINT_LIMITS)
            self.direction = Direction.KEEP_IN if angular else Direction.KEEP_OUT
        if kind == ConstraintKind.CONE and self.safe_angle is None:
            raise ValueError("cone constraint needs safe_angle")
        if kind == ConstraintKind.TORSO_ARM:
            missing = [f for f in ("torso", "forearm", "hand", "elbow") if getattr(self, f) is None]
            if missing:
                raise ValueError(f"torso_arm constraint needs {', '.join(missing)}")
            if self.direction != Direction.KEEP_OUT:
                raise ValueError("torso_arm constraint is keep_out")
        elif kind == ConstraintKind.JOINT_LIMITS:
            if self.direction != Direction.KEEP_IN:
                raise ValueError("joint_limits constraint is keep_in")
        else:
            if self.robot is None or self.obstacle is None:
                raise ValueError(f"{kind.value} constraint needs robot and obstacle")
        return self

    @property
    def safe_metric(self) -> float:
        """Safe value of the angle metric for cone constraints."""
        return metric_from_phi(self.safe_angle or 0.0)

    def references(self) -> list[tuple[str, str]]:
        """(field, attachment name) pairs this constraint points at."""
        fields = ("robot", "torso", "forearm", "hand", "elbow")
        return [(f, getattr(self, f)) for f in fields if getattr(self, f) is not None]


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------


class ControllerConfig(_Strict):
    mode: ControllerMode = ControllerMode.VELOCITY
    variant: ControllerVariant = ControllerVariant.CQP
    disabled: list[str] = Field(default_factory=list, description="Constraint names to drop")


class InitialState(_Strict):
    q: Optional[list[float]] = Field(default=None, description="Sampled from the seed when omitted")
    qdot: Optional[list[float]] = None


class SimulationSettings(_Strict):
    dt: Optional[float] = Field(default=None, gt=0, le=Config.MAX_DT, description="Defaults by mode")
    steps: int = Field(default=Config.DEFAULT_STEPS, ge=0)
    seed: int = 0

    def resolved_dt(self, mode: ControllerMode) -> float:
        if self.dt is not None:
            return self.dt
        return Config.VELOCITY_DT if mode == ControllerMode.VELOCITY else Config.DYNAMIC_DT


class Scenario(_Strict):
    """Full experimental setup: robot, obstacles, task, constraints, run settings."""
    version: int = Config.SCENARIO_VERSION
    name: str = "scenario"
    robot: RobotConfig
    obstacles: list[PrimitiveConfig] = Field(default_factory=list)
    task: TaskSpec
    constraints: list[ConstraintSpec] = Field(default_factory=list)
    controller: ControllerConfig = Field(default_factory=ControllerConfig)
    initial_state: InitialState = Field(default_factory=InitialState)
    simulation: SimulationSettings = Field(default_factory=SimulationSettings)

    @field_validator("version")
    @classmethod
    def supported_version(cls, v: int) -> int:
        if v != Config.SCENARIO_VERSION:
            raise ValueError(f"unsupported scenario version {v}")
        return v

    @model_validator(mode="after")
    def check_references(self) -> Scenario:
        n = self.robot.dof
        attachments = {a.name: a for a in self.robot.attachments}
        obstacles = {o.name: o for o in self.obstacles}
        _unique([a.name for a in self.robot.attachments], "robot.attachments")
        _unique([o.name for o in self.obstacles], "obstacles")
        _unique([c.name for c in self.constraints], "constraints")

        for i, att in enumerate(self.robot.attachments):
            if att.frame > n:
                raise ValueError(f"robot.attachments.{i}.frame: frame {att.frame} not in 0..{n}")

        task = self.task
        if task.attachment not in attachments:
            raise ValueError(f"task.attachment: unknown attachment {task.attachment!r}")
        target = obstacles.get(task.target)
        if target is None or target.type != "plane":
            raise ValueError(f"task.target: {task.target!r} is not a plane obstacle")

        for i, spec in enumerate(self.constraints):
            for field, ref in spec.references():
                if ref not in attachments:
                    raise ValueError(f"constraints.{i}.{field}: unknown attachment {ref!r}")
            for field in _LINE_REFS.get(spec.kind, ()):
                if attachments[getattr(spec, field)].axis is None:
                    raise ValueError(f"constraints.{i}.{field}: attachment has no axis")
            if spec.obstacle is not None:
                obstacle = obstacles.get(spec.obstacle)
                if obstacle is None:
                    raise ValueError(f"constraints.{i}.obstacle: unknown obstacle {spec.obstacle!r}")
                allowed = _OBSTACLE_KINDS.get(spec.kind, ())
                if obstacle.type not in allowed:
                    raise ValueError(
                        f"constraints.{i}.obstacle: {spec.kind.value} needs one of {allowed}, got {obstacle.type}"
                    )

        known = {c.name for c in self.constraints}
        for name in self.controller.disabled:
            if name not in known:
                raise ValueError(f"controller.disabled: unknown constraint {name!r}")

        for field in ("q", "qdot"):
            value = getattr(self.initial_state, field)
            if value is not None and len(value) != n:
                raise ValueError(f"initial_state.{field}: expected {n} values, got {len(value)}")
        return self

    def obstacle(self, name: str) -> PrimitiveConfig:
        return next(o for o in self.obstacles if o.name == name)

    def active_constraints(self) -> list[ConstraintSpec]:
        """Constraints in stack order, minus disabled ones; empty for the QP variant."""
        if self.controller.variant == ControllerVariant.QP:
            return []
        disabled = set(self.controller.disabled)
        return [c for c in self.constraints if c.name not in disabled]


def _unique(names: list[str], where: str) -> None:
    seen: set[str] = set()
    for name in names:
        if name in seen:
            raise ValueError(f"{where}: duplicate name {name!r}")
        seen.add(name)
