"""
Controller, constraint and simulation configuration.
"""

from pathlib import Path


class Config:
    """Global defaults. Scenario files override these per run."""

    # Project root (parent of src/)
    PROJECT_ROOT = Path(__file__).parent.parent.parent

    # Bundled scenarios
    SCENARIOS_DIR = PROJECT_ROOT / "src" / "data" / "scenarios"
    DEFAULT_SCENARIO = "desk_cup"
    SCENARIO_VERSION = 1

    # ---------- Task controller (published gains) ----------

    TASK_GAIN = 0.36  # eta, 1/s
    DAMPING = 0.01  # lambda
    KD = 1.5  # k_d, equal to eta_1
    KP = 0.3  # k_p, equal to eta_2
    BOUND_SCALE = 2.0  # k in the acceleration bounds; not published
    DEFAULT_BOUND_SHAPE = "velocity_norm"

    # ---------- Constraints ----------

    CONSTRAINT_GAIN = 0.36  # eta_d, shared with the task gain by default
    ETA1 = 1.5
    ETA2 = 0.3
    CUP_SAFE_ANGLE = 0.1  # rad
    TORSO_ARM_SAFE_DISTANCE = 0.07  # m
    PLANE_SAFE_DISTANCE = 0.01  # m
    SWITCH_EPS = 1e-4  # m, line-line -> point-line switch

    # ---------- Geometry tolerances ----------

    UNIT_TOL = 1e-9
    NORMALIZE_BAND = 1e-6
    MIN_DIRECTION_NORM = 1e-12
    PARALLEL_EPS = 1e-8
    MIN_POINT_LINE_DISTANCE = 1e-9

    # ---------- Numerical differentiation ----------

    JDOT_STEP = 1e-6

    # ---------- QP solver ----------

    QP_FEASIBILITY_TOL = 1e-10
    QP_REGULARIZATION_FLOOR = 1e-12
    QP_DEPENDENCE_TOL = 1e-12
    QP_ITER_FACTOR = 10  # cap = factor * (n + l)

    # ---------- Dynamics ----------

    GRAVITY = (0.0, 0.0, -9.81)
    DEFAULT_LINK_MASS = 0.3  # kg
    DEFAULT_ROD_RADIUS = 0.02  # m
    DEFAULT_TIP = (0.05, 0.0, 0.0)  # last link rod, in the last joint frame

    # ---------- Simulation ----------

    VELOCITY_DT = 1e-2
    DYNAMIC_DT = 1e-3
    MAX_DT = 0.1
    DEFAULT_STEPS = 3000
    COLLISION_TOL = 1e-6
    COLLISION_ANGLE_TOL = 1e-3  # rad, joint bound overshoot

    @classmethod
    def scenario_path(cls, name: str) -> Path:
        """Get the path of a bundled scenario file."""
        return cls.SCENARIOS_DIR / f"{name}.json"
