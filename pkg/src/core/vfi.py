"""
Vector-field-inequality rows.

Every row has the form  a' u <= rhs  where u is the joint velocity (first
order) or acceleration (second order). Distances use the error
d_tilde = d - d_safe for both directions; keep-in rows are the negation of
the keep-out rows built from the same inputs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import solve_ivp

from core.errors import DegenerateGeometry, DimensionError, HypothesisError, LemmaCondition
from core.geometry import PluckerLine, angle_metric, dist_line_line, dist_point_line, metric_from_phi
from core.kinematics import (
    LineKinematics,
    PointKinematics,
    SerialChain,
    relative_line_line_jacobian,
    relative_point_line_jacobian,
)
from core.schemas import ConstraintKind, ConstraintSpec, Direction

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConstraintRow:
    """One row of W/w (velocity) or Lambda/zeta (acceleration)."""
    jacobian: np.ndarray
    rhs: float
    tag: str
    error: float = 0.0
    branch: str = ""

    def __post_init__(self):
        jac = np.asarray(self.jacobian, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(jac)) and np.isfinite(self.rhs)):
            raise ValueError(f"row {self.tag!r} has non-finite entries")
        object.__setattr__(self, "jacobian", jac)
        object.__setattr__(self, "rhs", float(self.rhs))

    def slack(self, u: np.ndarray) -> float:
        return self.rhs - float(self.jacobian @ u)


def _oriented(direction: Direction, jacobian: np.ndarray, rhs: float, tag: str, error: float) -> ConstraintRow:
    if direction == Direction.KEEP_OUT:
        return ConstraintRow(-np.asarray(jacobian, dtype=float).reshape(-1), rhs, tag, error)
    return ConstraintRow(np.asarray(jacobian, dtype=float).reshape(-1), -rhs, tag, error)


def first_order_row(spec: ConstraintSpec, d: float, J_d, tag: str | None = None) -> ConstraintRow:
    """-J_d qdot <= eta d_tilde (keep-out) or J_d qdot <= -eta d_tilde (keep-in)."""
    d_tilde = float(d) - spec.safe_distance
    return _oriented(spec.direction, J_d, spec.eta * d_tilde, tag or spec.name, d_tilde)


def second_order_row(
    spec: ConstraintSpec, d: float, J_d, Jdot_d, qdot, tag: str | None = None,
) -> ConstraintRow:
    """Acceleration row with beta = (eta1 J_d + Jdot_d) qdot + eta2 d_tilde."""
    d_tilde = float(d) - spec.safe_distance
    beta = _beta(spec, J_d, Jdot_d, qdot, d_tilde)
    return _oriented(spec.direction, J_d, beta, tag or spec.name, d_tilde)


def _beta(spec: ConstraintSpec, J_d, Jdot_d, qdot, error: float) -> float:
    J_d = np.asarray(J_d, dtype=float).reshape(-1)
    Jdot_d = np.asarray(Jdot_d, dtype=float).reshape(-1)
    qdot = np.asarray(qdot, dtype=float)
    return float((spec.eta1 * J_d + Jdot_d) @ qdot) + spec.eta2 * error


def cone_row(
    spec: ConstraintSpec,
    l_z,
    static_line: PluckerLine,
    J_phi,
    Jdot_phi=None,
    qdot=None,
    tag: str | None = None,
) -> ConstraintRow:
    """
    Keep the attached axis l_z within safe_angle of the static line (keep-in on the
    angle metric). Second order when Jdot_phi and qdot are given.
    """
    f = angle_metric(l_z, static_line.l)
    f_tilde = f - spec.safe_metric
    if Jdot_phi is None:
        rhs = spec.eta * f_tilde
    else:
        if qdot is None:
            raise ValueError("second-order cone row needs qdot")
        rhs = _beta(spec, J_phi, Jdot_phi, qdot, f_tilde)
    return _oriented(spec.direction, J_phi, rhs, tag or spec.name, f_tilde)


# ---------------------------------------------------------------------------
# Joint limits
# ---------------------------------------------------------------------------


def _joint_limit_measures(chain: SerialChain, q) -> tuple[np.ndarray, np.ndarray]:
    """
    Angle metric of every joint-limit cone and the diagonal of its Jacobian.

    Both cone lines are perpendicular to the joint axis and the reference is
    fixed in the parent frame, so f_j = 2 - 2 cos(q_j - mid_j) exactly and
    only q_j moves it.
    """
    offset = np.asarray(q, dtype=float) - np.array([joint.mid for joint in chain.joints])
    return 2.0 - 2.0 * np.cos(offset), 2.0 * np.sin(offset)


def joint_limit_rows(
    chain: SerialChain,
    q,
    qdot=None,
    spec: ConstraintSpec | None = None,
    second_order: bool = False,
) -> list[ConstraintRow]:
    """One keep-in cone row per joint, safe angle = half the joint range."""
    if spec is None:
        spec = ConstraintSpec(name="joint_limits", kind=ConstraintKind.JOINT_LIMITS)
    q = np.asarray(q, dtype=float)
    if q.shape != (chain.dof,):
        raise DimensionError(f"q has shape {q.shape}, chain has {chain.dof} joints")
    values, slopes = _joint_limit_measures(chain, q)
    if second_order:
        if qdot is None:
            raise ValueError("second-order joint-limit rows need qdot")
        qdot = np.asarray(qdot, dtype=float)
        # d/dt of 2 sin(q_j - mid_j) e_j
        curvature = (2.0 - values) * qdot

    rows = []
    for j, joint in enumerate(chain.joints):
        f_tilde = values[j] - metric_from_phi(joint.half_range)
        jac = np.zeros(chain.dof)
        jac[j] = slopes[j]
        if second_order:
            jdot = np.zeros(chain.dof)
            jdot[j] = curvature[j]
            rhs = _beta(spec, jac, jdot, qdot, f_tilde)
        else:
            rhs = spec.eta * f_tilde
        rows.append(_oriented(Direction.KEEP_IN, jac, rhs, f"{spec.name}[{j}]", f_tilde))
    return rows


# ---------------------------------------------------------------------------
# Torso / forearm switching constraint
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TorsoArmMeasure:
    distance: float
    jacobian: np.ndarray
    branch: str  # "line_line", "point_line:hand" or "point_line:elbow"


def torso_arm_distance(
    spec: ConstraintSpec,
    torso: LineKinematics,
    forearm: LineKinematics,
    hand: PointKinematics,
    elbow: PointKinematics,
    branch: str | None = None,
) -> TorsoArmMeasure:
    """
    Distance between torso and forearm lines, or, when they (nearly) intersect,
    from the torso line to whichever of hand/elbow is closer.

    `branch` pins the choice, so derivatives can be taken on one branch.
    """
    if branch is None:
        d_ll = dist_line_line(forearm.line, torso.line)
        if d_ll > spec.switch_eps:
            branch = "line_line"
        else:
            d_hand = dist_point_line(hand.p, torso.line)
            d_elbow = dist_point_line(elbow.p, torso.line)
            branch = "point_line:elbow" if d_elbow <= d_hand else "point_line:hand"

    if branch == "line_line":
        d = dist_line_line(forearm.line, torso.line)
        try:
            jac = relative_line_line_jacobian(forearm, torso, threshold=0.0)
        except DegenerateGeometry:
            jac = np.zeros(forearm.J_l.shape[1])
        return TorsoArmMeasure(d, jac, branch)

    point = elbow if branch == "point_line:elbow" else hand
    d = dist_point_line(point.p, torso.line)
    try:
        jac = relative_point_line_jacobian(point.p, point.J_p, torso)
    except DegenerateGeometry:
        jac = np.zeros(point.J_p.shape[1])
    return TorsoArmMeasure(d, jac, branch)


def torso_arm_row(
    spec: ConstraintSpec,
    torso: LineKinematics,
    forearm: LineKinematics,
    hand: PointKinematics,
    elbow: PointKinematics,
    Jdot=None,
    qdot=None,
    radius: float = 0.0,
) -> ConstraintRow:
    """Keep-out row on the switching torso/forearm distance (minus body radii)."""
    measure = torso_arm_distance(spec, torso, forearm, hand, elbow)
    if measure.branch != "line_line":
        logger.debug(f"[VFI] {spec.name}: lines within {spec.switch_eps:g}, using {measure.branch}")
    if Jdot is None:
        row = first_order_row(spec, measure.distance - radius, measure.jacobian)
    else:
        row = second_order_row(spec, measure.distance - radius, measure.jacobian, Jdot, qdot)
    return replace(row, branch=measure.branch)


# ---------------------------------------------------------------------------
# Stacking
# ---------------------------------------------------------------------------


def stack(rows: list[ConstraintRow], n_columns: int) -> tuple[np.ndarray, np.ndarray]:
    """(W, w) in row order."""
    for row in rows:
        if row.jacobian.shape != (n_columns,):
            raise DimensionError(f"row {row.tag!r} has {row.jacobian.shape[0]} columns, expected {n_columns}")
    if not rows:
        return np.zeros((0, n_columns)), np.zeros(0)
    W = np.vstack([row.jacobian for row in rows])
    w = np.array([row.rhs for row in rows])
    return W, w


# ---------------------------------------------------------------------------
# Second-order safety oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LemmaTrace:
    """Closed-form saturated response d'' = -eta1 d' - eta2 d, sampled at dt."""
    t: np.ndarray
    distance: np.ndarray
    rate: np.ndarray
    r1: float
    r2: float
    c1: float
    c2: float
    min_distance: float
    integration_error: float


def lemma_oracle(
    eta1: float,
    eta2: float,
    d0: float,
    rate0: float,
    horizon: float = 50.0,
    dt: float = 0.01,
) -> LemmaTrace:
    """
    Check that the saturated second-order VFI keeps the distance error positive.

    Raises HypothesisError naming the first failed hypothesis.
    """
    if not (eta1 > 0 and eta2 > 0):
        raise HypothesisError(LemmaCondition.GAINS, f"eta1={eta1}, eta2={eta2}")
    disc = eta1 ** 2 - 4.0 * eta2
    if disc <= 0:
        raise HypothesisError(LemmaCondition.DISCRIMINANT, f"eta1^2 - 4 eta2 = {disc:.6g}")
    if not d0 > 0:
        raise HypothesisError(LemmaCondition.INITIAL_DISTANCE, f"d0={d0}")
    if eta1 < 2.0 * abs(rate0) / d0:
        raise HypothesisError(
            LemmaCondition.APPROACH_RATE, f"eta1={eta1} < 2|rate0|/d0 = {2.0 * abs(rate0) / d0:.6g}"
        )

    root = np.sqrt(disc)
    r1 = 0.5 * (-eta1 + root)
    r2 = 0.5 * (-eta1 - root)
    c1 = rate0 - d0 * r2
    c2 = d0 * r1 - rate0

    t = np.arange(0.0, horizon + 0.5 * dt, dt)
    e1, e2 = np.exp(r1 * t), np.exp(r2 * t)
    distance = (c1 * e1 + c2 * e2) / (r1 - r2)
    rate = (c1 * r1 * e1 + c2 * r2 * e2) / (r1 - r2)

    sol = solve_ivp(
        lambda _, y: [y[1], -eta1 * y[1] - eta2 * y[0]],
        (0.0, float(t[-1])),
        [d0, rate0],
        method="DOP853",
        t_eval=t,
        rtol=1e-12,
        atol=1e-14,
    )
    integration_error = float(np.abs(sol.y[0] - distance).max())

    return LemmaTrace(
        t=t,
        distance=distance,
        rate=rate,
        r1=float(r1),
        r2=float(r2),
        c1=float(c1),
        c2=float(c2),
        min_distance=float(distance.min()),
        integration_error=integration_error,
    )
