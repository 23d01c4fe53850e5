"""
Geometric primitives and closed-form distances.

Everything lives in one inertial frame. Lines are Plücker pairs (l, m) with
a unit direction l and moment m = p x l for any point p on the line.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from core.config import Config
from core.errors import DegenerateGeometry, RangeError


def as_vec3(v, name: str = "vector") -> np.ndarray:
    """Coerce to a finite float 3-vector."""
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise DegenerateGeometry(f"{name} must have 3 components, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DegenerateGeometry(f"{name} has non-finite components")
    return arr


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix: skew(a) @ b == a x b."""
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def _unit(v: np.ndarray, name: str) -> np.ndarray:
    """Normalize a vector that is supposed to be unit already."""
    norm = float(np.linalg.norm(v))
    if abs(norm - 1.0) > Config.NORMALIZE_BAND:
        raise DegenerateGeometry(f"{name} is not unit (norm={norm:.12g})")
    return v / norm


def perpendicular_unit(v) -> np.ndarray:
    """A unit vector orthogonal to v, chosen deterministically."""
    v = as_vec3(v)
    # Cross with the basis vector least aligned with v.
    basis = np.eye(3)[int(np.argmin(np.abs(v)))]
    w = np.cross(v, basis)
    norm = np.linalg.norm(w)
    if norm < Config.MIN_DIRECTION_NORM:
        raise DegenerateGeometry("cannot build a perpendicular to a zero vector")
    return w / norm


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PluckerLine:
    """Infinite line with unit direction l and moment m."""
    l: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        l = _unit(as_vec3(self.l, "line direction"), "line direction")
        m = as_vec3(self.m, "line moment")
        lm = float(l @ m)
        if abs(lm) > Config.NORMALIZE_BAND:
            raise DegenerateGeometry(f"moment not orthogonal to direction (l.m={lm:.3g})")
        m = m - lm * l
        l.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "m", m)

    @property
    def point(self) -> np.ndarray:
        """Point of the line closest to the origin."""
        return np.cross(self.l, self.m)

    def as_vector(self) -> np.ndarray:
        """Stacked 6-vector [l; m]."""
        return np.concatenate([self.l, self.m])


@dataclass(frozen=True)
class Plane:
    """Oriented plane n.x = d_off; positive side is along n."""
    n: np.ndarray
    d_off: float

    def __post_init__(self):
        n = _unit(as_vec3(self.n, "plane normal"), "plane normal")
        n.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "d_off", float(self.d_off))


@dataclass(frozen=True)
class Point:
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", as_vec3(self.p, "point"))


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_vec3(self.center, "sphere center"))
        if not self.radius > 0:
            raise DegenerateGeometry(f"sphere radius must be > 0, got {self.radius}")


@dataclass(frozen=True)
class Cylinder:
    axis: PluckerLine
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise DegenerateGeometry(f"cylinder radius must be > 0, got {self.radius}")


@dataclass(frozen=True)
class Line:
    line: PluckerLine


Primitive = Point | Sphere | Cylinder | Line | Plane


def primitive_radius(prim: Primitive) -> float:
    """Radius folded into surface distances (zero for points, lines, planes)."""
    if isinstance(prim, (Sphere, Cylinder)):
        return float(prim.radius)
    return 0.0


# ---------------------------------------------------------------------------
# Constructors and transforms
# ---------------------------------------------------------------------------


def line_through(p, direction) -> PluckerLine:
    """Line through p along direction (any nonzero length)."""
    p = as_vec3(p, "point")
    d = as_vec3(direction, "direction")
    norm = float(np.linalg.norm(d))
    if norm <= Config.MIN_DIRECTION_NORM:
        raise DegenerateGeometry("line direction has zero length")
    l = d / norm
    return PluckerLine(l, np.cross(p, l))


def plane_through(p, normal) -> Plane:
    """Plane through p with the given (nonzero) normal."""
    n = as_vec3(normal, "normal")
    norm = float(np.linalg.norm(n))
    if norm <= Config.MIN_DIRECTION_NORM:
        raise DegenerateGeometry("plane normal has zero length")
    n = n / norm
    return Plane(n, float(n @ as_vec3(p, "point")))


def transform_line(L: PluckerLine, R: np.ndarray, t: np.ndarray) -> PluckerLine:
    """Rigidly move a line: x -> R x + t."""
    l = R @ L.l
    return PluckerLine(l, R @ L.m + np.cross(t, l))


def transform_plane(plane: Plane, R: np.ndarray, t: np.ndarray) -> Plane:
    """Rigidly move a plane: x -> R x + t."""
    n = R @ plane.n
    return Plane(n, plane.d_off + float(n @ t))


# ---------------------------------------------------------------------------
# Distances
# ---------------------------------------------------------------------------


def dist_point_line(p, L: PluckerLine) -> float:
    """Euclidean distance from p to the infinite line, ||p x l - m||."""
    p = np.asarray(p, dtype=float)
    return float(np.linalg.norm(np.cross(p, L.l) - L.m))


def dist_point_plane(p, plane: Plane) -> float:
    """Signed distance, positive on the side the normal points to."""
    return float(plane.n @ np.asarray(p, dtype=float) - plane.d_off)


def dist_point_point(p, c) -> float:
    return float(np.linalg.norm(np.asarray(p, dtype=float) - np.asarray(c, dtype=float)))


def dist_line_line(L1: PluckerLine, L2: PluckerLine) -> float:
    """
    Minimum distance between two infinite lines.

    Skew/intersecting lines use the reciprocal product |l1.m2 + l2.m1| / |l1 x l2|;
    (anti)parallel lines fall back to point-line distance.
    """
    cross = np.cross(L1.l, L2.l)
    cross_norm = float(np.linalg.norm(cross))
    if cross_norm < Config.PARALLEL_EPS:
        return dist_point_line(L1.point, L2)
    reciprocal = float(L1.l @ L2.m + L2.l @ L1.m)
    return abs(reciprocal) / cross_norm


def angle_metric(l_z, l) -> float:
    """f(phi) = ||l_z - l||^2 = 2 - 2 cos(phi), in [0, 4]."""
    l_z = np.asarray(l_z, dtype=float)
    l = np.asarray(l, dtype=float)
    for name, v in (("l_z", l_z), ("l", l)):
        if abs(float(np.linalg.norm(v)) - 1.0) > Config.UNIT_TOL:
            raise DegenerateGeometry(f"{name} must be a unit vector")
    diff = l_z - l
    return float(diff @ diff)


def metric_from_phi(phi: float) -> float:
    """Inverse of phi_from_metric: 2 - 2 cos(phi)."""
    return 2.0 - 2.0 * float(np.cos(phi))


def phi_from_metric(f: float) -> float:
    """Angle in [0, pi] whose metric is f."""
    eps = Config.UNIT_TOL
    if not (-eps <= f <= 4.0 + eps):
        raise RangeError(f"angle metric must lie in [0, 4], got {f}")
    return float(np.arccos(np.clip(1.0 - f / 2.0, -1.0, 1.0)))
