"""
Rigid-body dynamics of a fixed-base revolute chain, in the world frame.

M(q) by the composite-rigid-body procedure, n(q, qdot) by recursive
Newton-Euler with zero acceleration, forward dynamics by Cholesky solve.
Link i is rigidly attached to joint frame i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from core.config import Config
from core.errors import DimensionError
from core.geometry import as_vec3
from core.kinematics import ChainPose, SerialChain, forward_kinematics


@dataclass(frozen=True)
class LinkInertia:
    """Mass, centre of mass and rotational inertia about the COM, in the link frame."""
    mass: float
    com: np.ndarray
    inertia: np.ndarray

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"link mass must be > 0, got {self.mass}")
        object.__setattr__(self, "com", as_vec3(self.com, "centre of mass"))
        inertia = np.asarray(self.inertia, dtype=float)
        if inertia.shape != (3, 3):
            raise DimensionError(f"inertia must be 3x3, got {inertia.shape}")
        if not np.allclose(inertia, inertia.T, atol=1e-9):
            raise ValueError("inertia tensor must be symmetric")
        if np.linalg.eigvalsh(inertia).min() <= 0:
            raise ValueError("inertia tensor must be positive-definite")
        object.__setattr__(self, "inertia", inertia)


def rod_inertia(
    start,
    end,
    mass: float = Config.DEFAULT_LINK_MASS,
    radius: float = Config.DEFAULT_ROD_RADIUS,
) -> LinkInertia:
    """Solid cylinder from `start` to `end` (link-frame points)."""
    start = as_vec3(start, "rod start")
    end = as_vec3(end, "rod end")
    axis = end - start
    length = float(np.linalg.norm(axis))
    u = axis / length if length > Config.MIN_DIRECTION_NORM else np.array([0.0, 0.0, 1.0])
    axial = 0.5 * mass * radius ** 2
    transverse = mass * (3.0 * radius ** 2 + length ** 2) / 12.0
    uu = np.outer(u, u)
    inertia = transverse * (np.eye(3) - uu) + axial * uu
    return LinkInertia(mass, 0.5 * (start + end), inertia)


@dataclass(frozen=True)
class RigidBodyModel:
    """A SerialChain with one LinkInertia per joint frame and a gravity vector."""
    chain: SerialChain
    links: tuple[LinkInertia, ...]
    gravity: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        if len(self.links) != self.chain.dof:
            raise DimensionError(f"{len(self.links)} links for a {self.chain.dof}-joint chain")
        object.__setattr__(self, "links", tuple(self.links))
        gravity = Config.GRAVITY if self.gravity is None else self.gravity
        object.__setattr__(self, "gravity", as_vec3(gravity, "gravity"))

    @property
    def dof(self) -> int:
        return self.chain.dof

    @classmethod
    def from_chain(
        cls,
        chain: SerialChain,
        mass: float = Config.DEFAULT_LINK_MASS,
        radius: float = Config.DEFAULT_ROD_RADIUS,
        tip=Config.DEFAULT_TIP,
        gravity=Config.GRAVITY,
    ) -> RigidBodyModel:
        """Uniform rods spanning each joint origin to the next; the last one ends at `tip`."""
        links = []
        for i in range(chain.dof):
            end = chain.joints[i + 1].origin if i + 1 < chain.dof else as_vec3(tip, "tip")
            links.append(rod_inertia(np.zeros(3), end, mass, radius))
        return cls(chain, tuple(links), np.asarray(gravity, dtype=float))

    def without_gravity(self) -> RigidBodyModel:
        return RigidBodyModel(self.chain, self.links, np.zeros(3))


@dataclass(frozen=True)
class _WorldLinks:
    """COM positions and world-frame inertias for one configuration."""
    com: np.ndarray  # (n, 3)
    inertia: np.ndarray  # (n, 3, 3)


def _world_links(model: RigidBodyModel, pose: ChainPose) -> _WorldLinks:
    n = model.dof
    com = np.empty((n, 3))
    inertia = np.empty((n, 3, 3))
    for i, link in enumerate(model.links):
        R = pose.rotations[i + 1]
        com[i] = R @ link.com + pose.positions[i + 1]
        inertia[i] = R @ link.inertia @ R.T
    return _WorldLinks(com, inertia)


def _check_vector(model: RigidBodyModel, v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (model.dof,):
        raise DimensionError(f"{name} has shape {v.shape}, expected ({model.dof},)")
    return v


def mass_matrix(model: RigidBodyModel, q) -> np.ndarray:
    """Joint-space inertia matrix by composite rigid bodies."""
    q = _check_vector(model, q, "q")
    pose = forward_kinematics(model.chain, q)
    world = _world_links(model, pose)
    n = model.dof
    origins = pose.positions[1:]
    M = np.zeros((n, n))

    # Composite body i = links i..n-1, accumulated from the tip. Inertia is
    # kept about the world origin and shifted to the composite COM.
    mass = 0.0
    first_moment = np.zeros(3)
    inertia_origin = np.zeros((3, 3))
    eye = np.eye(3)
    for i in range(n - 1, -1, -1):
        link = model.links[i]
        c_k = world.com[i]
        mass += link.mass
        first_moment += link.mass * c_k
        inertia_origin += world.inertia[i] + link.mass * (c_k @ c_k * eye - np.outer(c_k, c_k))
        c = first_moment / mass
        I_c = inertia_origin - mass * (c @ c * eye - np.outer(c, c))

        # Wrench needed to give body i unit acceleration about joint i, from rest.
        a = pose.axes[i]
        force = mass * np.cross(a, c - origins[i])
        moment = I_c @ a + np.cross(c - origins[i], force)
        about = moment + np.cross(origins[i] - origins[: i + 1], force)
        M[: i + 1, i] = np.einsum("jk,jk->j", pose.axes[: i + 1], about)
        M[i, : i + 1] = M[: i + 1, i]
    return M


def inverse_dynamics(model: RigidBodyModel, q, qdot, qddot) -> np.ndarray:
    """Joint torques for (q, qdot, qddot) by recursive Newton-Euler."""
    q = _check_vector(model, q, "q")
    qdot = _check_vector(model, qdot, "qdot")
    qddot = _check_vector(model, qddot, "qddot")
    pose = forward_kinematics(model.chain, q)
    world = _world_links(model, pose)
    n = model.dof
    origins = pose.positions

    omega = np.zeros(3)
    alpha = np.zeros(3)
    accel = -model.gravity  # fictitious base acceleration carries gravity
    forces = np.empty((n, 3))
    moments = np.empty((n, 3))
    for i in range(n):
        r = origins[i + 1] - origins[i]
        accel = accel + np.cross(alpha, r) + np.cross(omega, np.cross(omega, r))
        a = pose.axes[i]
        alpha = alpha + a * qddot[i] + np.cross(omega, a) * qdot[i]
        omega = omega + a * qdot[i]
        rc = world.com[i] - origins[i + 1]
        a_com = accel + np.cross(alpha, rc) + np.cross(omega, np.cross(omega, rc))
        I = world.inertia[i]
        forces[i] = model.links[i].mass * a_com
        moments[i] = I @ alpha + np.cross(omega, I @ omega)

    tau = np.empty(n)
    f = np.zeros(3)
    m = np.zeros(3)  # about the origin of the current frame
    for i in range(n - 1, -1, -1):
        if i + 1 < n:
            m = m + np.cross(origins[i + 2] - origins[i + 1], f)
        f = f + forces[i]
        m = m + moments[i] + np.cross(world.com[i] - origins[i + 1], forces[i])
        tau[i] = pose.axes[i] @ m
    return tau


def nonlinear_terms(model: RigidBodyModel, q, qdot) -> np.ndarray:
    """Coriolis, centrifugal and gravity torques: inverse dynamics at qddot = 0."""
    return inverse_dynamics(model, q, qdot, np.zeros(model.dof))


@dataclass(frozen=True)
class DynamicTerms:
    """M(q) and n(q, qdot) for one state, shared by the torque map and the plant."""
    mass: np.ndarray
    bias: np.ndarray


def dynamic_terms(model: RigidBodyModel, q, qdot) -> DynamicTerms:
    return DynamicTerms(mass_matrix(model, q), nonlinear_terms(model, q, qdot))


def forward_dynamics(model: RigidBodyModel, q, qdot, tau, terms: DynamicTerms | None = None) -> np.ndarray:
    """qddot = M^-1 (tau - n), by Cholesky factorisation; `terms` must belong to (q, qdot)."""
    tau = _check_vector(model, tau, "tau")
    terms = terms if terms is not None else dynamic_terms(model, q, qdot)
    return cho_solve(cho_factor(terms.mass), tau - terms.bias)


def kinetic_energy(model: RigidBodyModel, q, qdot) -> float:
    qdot = _check_vector(model, qdot, "qdot")
    return 0.5 * float(qdot @ mass_matrix(model, q) @ qdot)


def potential_energy(model: RigidBodyModel, q) -> float:
    """-sum m g.c, zero at the world origin."""
    q = _check_vector(model, q, "q")
    world = _world_links(model, forward_kinematics(model.chain, q))
    masses = np.array([link.mass for link in model.links])
    return -float(masses @ (world.com @ model.gravity))
