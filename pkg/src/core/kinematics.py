"""
Serial-chain forward kinematics and the Jacobians used by the VFI rows.

Joints are revolute, described screw-style: a unit axis and an origin offset,
both in the parent frame. Frame 0 is the base; frame j sits at joint j after
its rotation. Attachments pin points/axes to a frame.

Distance Jacobians are derived by the chain rule from the point and line
Jacobians. The "relative" variants accept two moving primitives (for
self-collision); static primitives simply carry zero Jacobians.
"""

from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass, field

import numpy as np

from core.config import Config
from core.errors import DegenerateGeometry, DimensionError, UnknownFrame
from core.geometry import Plane, PluckerLine, as_vec3, skew


def rotation_about(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for a unit axis."""
    K = skew(axis)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


# ---------------------------------------------------------------------------
# Chain description
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RevoluteJoint:
    """Revolute joint: axis and origin in the parent frame, angle bounds in rad."""
    axis: np.ndarray
    origin: np.ndarray
    lower: float
    upper: float
    name: str = ""

    def __post_init__(self):
        axis = as_vec3(self.axis, "joint axis")
        norm = float(np.linalg.norm(axis))
        if abs(norm - 1.0) > Config.NORMALIZE_BAND:
            raise DegenerateGeometry(f"joint {self.name!r} axis is not unit (norm={norm})")
        object.__setattr__(self, "axis", axis / norm)
        object.__setattr__(self, "origin", as_vec3(self.origin, "joint origin"))
        if not self.lower < self.upper:
            raise ValueError(f"joint {self.name!r}: lower bound must be < upper bound")

    @property
    def mid(self) -> float:
        return 0.5 * (self.lower + self.upper)

    @property
    def half_range(self) -> float:
        return 0.5 * (self.upper - self.lower)


@dataclass(frozen=True)
class Attachment:
    """A point (and optionally an axis) fixed in frame `frame`."""
    frame: int
    point: np.ndarray
    axis: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "point", as_vec3(self.point, "attachment point"))
        if self.axis is not None:
            axis = as_vec3(self.axis, "attachment axis")
            norm = float(np.linalg.norm(axis))
            if norm <= Config.MIN_DIRECTION_NORM:
                raise DegenerateGeometry("attachment axis has zero length")
            object.__setattr__(self, "axis", axis / norm)


@dataclass(frozen=True)
class SerialChain:
    """Ordered revolute joints on a fixed base, plus named attachments."""
    joints: tuple[RevoluteJoint, ...]
    attachments: Mapping[str, Attachment] = field(default_factory=dict)
    base_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    base_position: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if len(self.joints) < 1:
            raise ValueError("a chain needs at least one joint")
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "base_rotation", np.asarray(self.base_rotation, dtype=float))
        object.__setattr__(self, "base_position", as_vec3(self.base_position, "base position"))
        for name, att in self.attachments.items():
            self.check_frame(att.frame, name)

    @property
    def dof(self) -> int:
        return len(self.joints)

    @property
    def lower(self) -> np.ndarray:
        return np.array([j.lower for j in self.joints])

    @property
    def upper(self) -> np.ndarray:
        return np.array([j.upper for j in self.joints])

    def check_frame(self, frame: int, label: str = "") -> None:
        if not 0 <= frame <= self.dof:
            raise UnknownFrame(f"frame {frame} {label}".strip() + f" not in 0..{self.dof}")

    def attachment(self, name: str) -> Attachment:
        try:
            return self.attachments[name]
        except KeyError:
            raise UnknownFrame(f"unknown attachment {name!r}") from None

    def rebased(self, R: np.ndarray, t: np.ndarray) -> SerialChain:
        """Same chain with its base moved by the rigid transform x -> R x + t."""
        return SerialChain(
            joints=self.joints,
            attachments=self.attachments,
            base_rotation=R @ self.base_rotation,
            base_position=R @ self.base_position + t,
        )


@dataclass
class JointState:
    """Configuration q with optional velocity and acceleration."""
    q: np.ndarray
    qdot: np.ndarray | None = None
    qddot: np.ndarray | None = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        n = self.q.shape[0]
        if self.qdot is None:
            self.qdot = np.zeros(n)
        for name in ("q", "qdot", "qddot"):
            value = getattr(self, name)
            if value is None:
                continue
            value = np.asarray(value, dtype=float)
            if value.shape != (n,):
                raise DimensionError(f"{name} has shape {value.shape}, expected ({n},)")
            if not np.all(np.isfinite(value)):
                raise DimensionError(f"{name} has non-finite entries")
            setattr(self, name, value)

    def check(self, chain: SerialChain) -> None:
        if self.q.shape != (chain.dof,):
            raise DimensionError(f"state has {self.q.shape[0]} joints, chain has {chain.dof}")

    def copy(self) -> JointState:
        return JointState(
            self.q.copy(),
            None if self.qdot is None else self.qdot.copy(),
            None if self.qddot is None else self.qddot.copy(),
        )


@dataclass(frozen=True)
class JacobianMatrix:
    """rows x n Jacobian tagged with the quantity it differentiates."""
    matrix: np.ndarray
    quantity: str

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def row(self) -> np.ndarray:
        """The single row of a 1 x n Jacobian."""
        return self.matrix[0]


# ---------------------------------------------------------------------------
# Forward kinematics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainPose:
    """World rotation/position of every frame plus world joint axes."""
    rotations: np.ndarray  # (n+1, 3, 3)
    positions: np.ndarray  # (n+1, 3)
    axes: np.ndarray  # (n, 3), world axis of joint j at index j-1

    def homogeneous(self, frame: int) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotations[frame]
        T[:3, 3] = self.positions[frame]
        return T

    def point(self, frame: int, local_point: np.ndarray) -> np.ndarray:
        return self.rotations[frame] @ local_point + self.positions[frame]

    def direction(self, frame: int, local_axis: np.ndarray) -> np.ndarray:
        return self.rotations[frame] @ local_axis

    def attachment_point(self, att: Attachment) -> np.ndarray:
        return self.point(att.frame, att.point)

    def attachment_line(self, att: Attachment) -> PluckerLine:
        if att.axis is None:
            raise DegenerateGeometry("attachment has no axis")
        p = self.attachment_point(att)
        l = self.direction(att.frame, att.axis)
        return PluckerLine(l, np.cross(p, l))


def _check_q(chain: SerialChain, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (chain.dof,):
        raise DimensionError(f"q has shape {q.shape}, chain has {chain.dof} joints")
    return q


def forward_kinematics(chain: SerialChain, q) -> ChainPose:
    """World pose of the base and of every joint frame."""
    q = _check_q(chain, q)
    n = chain.dof
    rotations = np.empty((n + 1, 3, 3))
    positions = np.empty((n + 1, 3))
    axes = np.empty((n, 3))
    rotations[0] = chain.base_rotation
    positions[0] = chain.base_position
    for j, joint in enumerate(chain.joints, start=1):
        R_parent = rotations[j - 1]
        positions[j] = positions[j - 1] + R_parent @ joint.origin
        axes[j - 1] = R_parent @ joint.axis
        rotations[j] = R_parent @ rotation_about(joint.axis, q[j - 1])
    return ChainPose(rotations, positions, axes)


def _pose(chain: SerialChain, q, pose: ChainPose | None) -> ChainPose:
    return pose if pose is not None else forward_kinematics(chain, q)


# ---------------------------------------------------------------------------
# Point, angular and line Jacobians
# ---------------------------------------------------------------------------


def _point_jacobian(chain: SerialChain, pose: ChainPose, frame: int, p: np.ndarray) -> np.ndarray:
    J = np.zeros((3, chain.dof))
    if frame > 0:
        axes = pose.axes[:frame]
        J[:, :frame] = np.cross(axes, p - pose.positions[1:frame + 1]).T
    return J


def point_jacobian(chain, q, frame: int, local_point, pose: ChainPose | None = None) -> JacobianMatrix:
    """Translational Jacobian of a point fixed in `frame`: p_dot = J q_dot."""
    chain.check_frame(frame)
    pose = _pose(chain, q, pose)
    p = pose.point(frame, as_vec3(local_point, "local point"))
    return JacobianMatrix(_point_jacobian(chain, pose, frame, p), "point")


@dataclass(frozen=True)
class PointKinematics:
    """World position of an attached point with its translational Jacobian."""
    p: np.ndarray
    J_p: np.ndarray


def point_kinematics(chain, q, frame: int, local_point, pose: ChainPose | None = None) -> PointKinematics:
    chain.check_frame(frame)
    pose = _pose(chain, q, pose)
    p = pose.point(frame, as_vec3(local_point, "local point"))
    return PointKinematics(p, _point_jacobian(chain, pose, frame, p))


def attachment_point_kinematics(chain, q, name: str, pose: ChainPose | None = None) -> PointKinematics:
    att = chain.attachment(name)
    return point_kinematics(chain, q, att.frame, att.point, pose)


def angular_jacobian(chain, q, frame: int, pose: ChainPose | None = None) -> JacobianMatrix:
    """World angular velocity of `frame`: omega = J q_dot."""
    chain.check_frame(frame)
    pose = _pose(chain, q, pose)
    J = np.zeros((3, chain.dof))
    J[:, :frame] = pose.axes[:frame].T
    return JacobianMatrix(J, "angular")


@dataclass(frozen=True)
class LineKinematics:
    """A (possibly moving) line with its direction, moment and anchor-point Jacobians."""
    l: np.ndarray
    m: np.ndarray
    p: np.ndarray
    J_l: np.ndarray
    J_m: np.ndarray
    J_p: np.ndarray

    @property
    def line(self) -> PluckerLine:
        return PluckerLine(self.l, self.m)

    @classmethod
    def static(cls, line: PluckerLine, dof: int) -> LineKinematics:
        zeros = np.zeros((3, dof))
        return cls(line.l, line.m, line.point, zeros, zeros, zeros)


def line_kinematics(
    chain: SerialChain,
    q,
    frame: int,
    local_axis,
    local_point,
    pose: ChainPose | None = None,
) -> LineKinematics:
    """World line through the attached point along the attached axis, with Jacobians."""
    chain.check_frame(frame)
    axis = as_vec3(local_axis, "local axis")
    norm = float(np.linalg.norm(axis))
    if norm <= Config.MIN_DIRECTION_NORM:
        raise DegenerateGeometry("line axis has zero length")
    pose = _pose(chain, q, pose)
    l = pose.direction(frame, axis / norm)
    p = pose.point(frame, as_vec3(local_point, "local point"))
    J_p = _point_jacobian(chain, pose, frame, p)
    J_l = np.zeros((3, chain.dof))
    if frame > 0:
        J_l[:, :frame] = np.cross(pose.axes[:frame], l).T
    # m = p x l  ->  m_dot = p_dot x l + p x l_dot
    J_m = -skew(l) @ J_p + skew(p) @ J_l
    return LineKinematics(l, np.cross(p, l), p, J_l, J_m, J_p)


def attachment_line_kinematics(chain, q, name: str, pose: ChainPose | None = None) -> LineKinematics:
    att = chain.attachment(name)
    if att.axis is None:
        raise DegenerateGeometry(f"attachment {name!r} has no axis")
    return line_kinematics(chain, q, att.frame, att.axis, att.point, pose)


def line_jacobian(chain, q, frame: int, local_axis, local_point, pose: ChainPose | None = None) -> JacobianMatrix:
    """Stacked [J_l; J_m] (6 x n) of the attached line."""
    lk = line_kinematics(chain, q, frame, local_axis, local_point, pose)
    return JacobianMatrix(np.vstack([lk.J_l, lk.J_m]), "line")


# ---------------------------------------------------------------------------
# Relative distance / angle rates
# ---------------------------------------------------------------------------


def relative_angle_jacobian(a: LineKinematics, b: LineKinematics) -> np.ndarray:
    """d/dt ||l_a - l_b||^2 = 2 (l_a - l_b)^T (J_la - J_lb)."""
    return 2.0 * (a.l - b.l) @ (a.J_l - b.J_l)


def relative_point_line_jacobian(p: np.ndarray, J_p: np.ndarray, line: LineKinematics) -> np.ndarray:
    """Rate of ||p x l - m|| with p and the line both possibly moving."""
    v = np.cross(p, line.l) - line.m
    dist = float(np.linalg.norm(v))
    if dist < Config.MIN_POINT_LINE_DISTANCE:
        raise DegenerateGeometry(f"point lies on the line (distance {dist:.3g})")
    # v_dot = p_dot x l + p x l_dot - m_dot
    v_dot = -skew(line.l) @ J_p + skew(p) @ line.J_l - line.J_m
    return (v / dist) @ v_dot


def relative_line_line_jacobian(
    a: LineKinematics,
    b: LineKinematics,
    threshold: float = Config.SWITCH_EPS,
) -> np.ndarray:
    """
    Rate of the line-line distance with both lines possibly moving.

    Skew lines differentiate |s| / ||c|| with s = l_a.m_b + l_b.m_a, c = l_a x l_b.
    Parallel lines (||c|| < PARALLEL_EPS) use the anchor of `a` against `b`.
    """
    c = np.cross(a.l, b.l)
    c_norm = float(np.linalg.norm(c))
    if c_norm < Config.PARALLEL_EPS:
        v = np.cross(a.p, b.l) - b.m
        if float(np.linalg.norm(v)) < threshold:
            raise DegenerateGeometry("coincident lines")
        return relative_point_line_jacobian(a.p, a.J_p, b)
    s = float(a.l @ b.m + b.l @ a.m)
    dist = abs(s) / c_norm
    if dist < threshold:
        raise DegenerateGeometry(f"lines intersect (distance {dist:.3g} < {threshold:g})")
    s_dot = b.m @ a.J_l + a.l @ b.J_m + b.l @ a.J_m + a.m @ b.J_l
    c_dot = -skew(b.l) @ a.J_l + skew(a.l) @ b.J_l
    c_hat = c / c_norm
    return np.sign(s) * s_dot / c_norm - dist * (c_hat @ c_dot) / c_norm


# ---------------------------------------------------------------------------
# Robot-vs-static distance Jacobians
# ---------------------------------------------------------------------------


def line_angle_jacobian(
    chain, q, frame: int, local_axis, local_point, static_line: PluckerLine,
    pose: ChainPose | None = None,
) -> JacobianMatrix:
    """J_phi = 2 (l_z - l)^T J_lz, so that d/dt f(phi) = J_phi q_dot."""
    lk = line_kinematics(chain, q, frame, local_axis, local_point, pose)
    row = 2.0 * (lk.l - static_line.l) @ lk.J_l
    return JacobianMatrix(row[None, :], "line_angle")


def point_line_distance_jacobian(
    chain, q, frame: int, local_point, static_line: PluckerLine,
    pose: ChainPose | None = None,
) -> JacobianMatrix:
    """Rate of the point-static-line distance."""
    chain.check_frame(frame)
    pose = _pose(chain, q, pose)
    p = pose.point(frame, as_vec3(local_point, "local point"))
    J_p = _point_jacobian(chain, pose, frame, p)
    row = relative_point_line_jacobian(p, J_p, LineKinematics.static(static_line, chain.dof))
    return JacobianMatrix(row[None, :], "point_line_distance")


def point_plane_distance_jacobian(
    chain, q, frame: int, local_point, plane: Plane,
    pose: ChainPose | None = None,
) -> JacobianMatrix:
    """Rate of the signed point-static-plane distance: n^T J_p."""
    J_p = point_jacobian(chain, q, frame, local_point, pose).matrix
    return JacobianMatrix((plane.n @ J_p)[None, :], "point_plane_distance")


def point_point_distance_jacobian(
    chain, q, frame: int, local_point, center,
    pose: ChainPose | None = None,
) -> JacobianMatrix:
    """Rate of the distance between an attached point and a static point."""
    chain.check_frame(frame)
    pose = _pose(chain, q, pose)
    p = pose.point(frame, as_vec3(local_point, "local point"))
    diff = p - as_vec3(center, "center")
    dist = float(np.linalg.norm(diff))
    if dist < Config.MIN_POINT_LINE_DISTANCE:
        raise DegenerateGeometry("points coincide")
    row = (diff / dist) @ _point_jacobian(chain, pose, frame, p)
    return JacobianMatrix(row[None, :], "point_point_distance")


def line_line_distance_jacobian(
    chain, q, frame: int, local_axis, local_point, static_line: PluckerLine,
    threshold: float = Config.SWITCH_EPS,
    pose: ChainPose | None = None,
) -> JacobianMatrix:
    """Rate of the line-static-line distance; DegenerateGeometry below `threshold`."""
    lk = line_kinematics(chain, q, frame, local_axis, local_point, pose)
    row = relative_line_line_jacobian(lk, LineKinematics.static(static_line, chain.dof), threshold)
    return JacobianMatrix(row[None, :], "line_line_distance")


# ---------------------------------------------------------------------------
# Jacobian time derivative
# ---------------------------------------------------------------------------


def jacobian_time_derivative(
    chain: SerialChain,
    q,
    qdot,
    which: Callable[[np.ndarray], JacobianMatrix | np.ndarray],
    h: float = Config.JDOT_STEP,
) -> JacobianMatrix:
    """
    J_dot along the current velocity by a directional central difference.

    `which` maps a configuration to the Jacobian being differentiated.
    """
    q = _check_q(chain, q)
    qdot = np.asarray(qdot, dtype=float)
    if qdot.shape != q.shape:
        raise DimensionError(f"qdot has shape {qdot.shape}, expected {q.shape}")

    def _matrix(value) -> np.ndarray:
        return value.matrix if isinstance(value, JacobianMatrix) else np.asarray(value)

    forward = which(q + h * qdot)
    tag = forward.quantity if isinstance(forward, JacobianMatrix) else "jacobian"
    if not np.any(qdot):
        return JacobianMatrix(np.zeros_like(_matrix(forward)), f"d/dt {tag}")
    backward = which(q - h * qdot)
    Jdot = (_matrix(forward) - _matrix(backward)) / (2.0 * h)
    return JacobianMatrix(Jdot, f"d/dt {tag}")
