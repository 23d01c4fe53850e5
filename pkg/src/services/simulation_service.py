"""
Closed-loop simulation service.

Fixed-step loop around WholeBodyController:
  velocity mode      q <- q + u dt
  acceleration mode  qdot <- qdot + u dt,  q <- q + qdot dt   (semi-implicit Euler)
  torque mode        as acceleration, with qddot = forward_dynamics(tau)

Controller failures never abort a run: the step is flagged, a fallback command
is applied and the record carries the message.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from core.control import ControlOutput, WholeBodyController, evaluate_task, torque_from_acceleration
from core.dynamics import RigidBodyModel, dynamic_terms, forward_dynamics
from core.errors import ScenarioError
from core.kinematics import JointState, forward_kinematics
from core.schemas import ControllerConfig, ControllerMode, ControllerVariant, Direction, QpStatus, Scenario
from data.step_log import StepLog, StepRecord
from services.constraint_assembler import ConstraintAssembler

logger = logging.getLogger(__name__)

# Fraction of the half range used when sampling an initial configuration.
_INITIAL_SPREAD = 0.25


@dataclass
class RunSummary:
    steps: int
    final_task_error: float
    flagged_steps: int
    max_angle: dict[str, float] = field(default_factory=dict)
    min_margin: dict[str, float] = field(default_factory=dict)


class SimulationService:
    """
    One scenario, one controller, one run at a time.

    mode, variant and disabled override the scenario's controller section.
    """

    def __init__(
        self,
        scenario: Scenario,
        mode: ControllerMode | None = None,
        variant: ControllerVariant | None = None,
        disabled: list[str] | None = None,
        timing: bool = False,
    ):
        base = scenario.controller
        known = {c.name for c in scenario.constraints}
        unknown = [name for name in (disabled or []) if name not in known]
        if unknown:
            raise ScenarioError(f"unknown constraint {unknown[0]!r}", "controller.disabled")
        controller = ControllerConfig(
            mode=mode or base.mode,
            variant=variant or base.variant,
            disabled=sorted(set(base.disabled) | set(disabled or [])),
        )
        self.scenario = scenario.model_copy(update={"controller": controller})
        self.mode = controller.mode
        self.variant = controller.variant
        self.timing = timing

        self.chain = self.scenario.robot.build_chain()
        inertia = self.scenario.robot.inertia
        self.model = RigidBodyModel.from_chain(
            self.chain, inertia.link_mass, inertia.rod_radius, inertia.tip, inertia.gravity
        )
        self.assembler = ConstraintAssembler(self.scenario, self.chain)
        self.controller = WholeBodyController(
            self.scenario.task, bounded=self.variant == ControllerVariant.CQP
        )
        self.plane = self.scenario.obstacle(self.scenario.task.target).build()
        self.dt = self.scenario.simulation.resolved_dt(self.mode)
        self.final_state: JointState | None = None

    # ------------------------------------------------------------------
    # State
    # ------------------------------------------------------------------

    def initial_state(self) -> JointState:
        """Scenario state, or a seeded sample around the joint mid-ranges."""
        init = self.scenario.initial_state
        if init.q is not None:
            q = np.array(init.q, dtype=float)
        else:
            rng = np.random.default_rng(self.scenario.simulation.seed)
            mid = np.array([j.mid for j in self.chain.joints])
            half = np.array([j.half_range for j in self.chain.joints])
            q = mid + rng.uniform(-_INITIAL_SPREAD, _INITIAL_SPREAD, self.chain.dof) * half
        qdot = None if init.qdot is None else np.array(init.qdot, dtype=float)
        return JointState(q, qdot)

    # ------------------------------------------------------------------
    # Stepping
    # ------------------------------------------------------------------

    def _fallback(self, state: JointState, message: str) -> ControlOutput:
        n = self.chain.dof
        if self.mode == ControllerMode.VELOCITY:
            command = np.zeros(n)
        elif self.controller.bounded:
            command = -self.controller.task.bound_scale * state.qdot
        else:
            command = np.zeros(n)
        acceleration = None if self.mode == ControllerMode.VELOCITY else command
        terms = None
        if self.mode == ControllerMode.TORQUE:
            terms = dynamic_terms(self.model, state.q, state.qdot)
            command = torque_from_acceleration(self.model, state, command, terms)
        return ControlOutput(
            command, self.mode, QpStatus.INFEASIBLE, True,
            acceleration=acceleration, message=message, dynamics=terms,
        )

    def _control(self, state: JointState, pose):
        dynamic = self.mode != ControllerMode.VELOCITY
        evaluation = evaluate_task(self.scenario.task, self.chain, state, self.plane, dynamic, pose)
        assembled = self.assembler.assemble(state, second_order=dynamic, pose=pose)
        if self.mode == ControllerMode.VELOCITY:
            out = self.controller.velocity_step(evaluation, assembled.W, assembled.w, state)
        elif self.mode == ControllerMode.ACCELERATION:
            out = self.controller.acceleration_step(evaluation, assembled.W, assembled.w, state)
        else:
            out = self.controller.torque_step(evaluation, assembled.W, assembled.w, state, self.model)
        return evaluation, assembled, out

    def integrate(self, state: JointState, out: ControlOutput) -> JointState:
        dt = self.dt
        if self.mode == ControllerMode.VELOCITY:
            return JointState(state.q + out.command * dt, out.command.copy())
        if self.mode == ControllerMode.ACCELERATION:
            qddot = out.command
        else:
            qddot = forward_dynamics(self.model, state.q, state.qdot, out.command, out.dynamics)
        qdot = state.qdot + qddot * dt
        return JointState(state.q + qdot * dt, qdot, qddot)

    def step(self, state: JointState, index: int = 0) -> tuple[JointState, StepRecord]:
        """
        Advance one step.

        Args:
            state: state at the start of the step
            index: step number, sets the record time t = index * dt

        Returns:
            (next state, record of the pre-step state and the applied command)
        """
        task_error = float("nan")
        errors: dict[str, float] = {}
        angles: dict[str, float] = {}
        try:
            pose = forward_kinematics(self.chain, state.q)
            evaluation, assembled, out = self._control(state, pose)
            task_error = evaluation.error_norm
            errors, angles = assembled.errors, assembled.angles
        except (ValueError, np.linalg.LinAlgError) as exc:
            logger.warning(f"[Simulation] step {index}: {exc}, holding command")
            out = self._fallback(state, str(exc))
        else:
            if out.flagged:
                logger.warning(f"[Simulation] step {index}: {out.message}, holding command")

        try:
            next_state = self.integrate(state, out)
        except (ValueError, np.linalg.LinAlgError) as exc:
            logger.warning(f"[Simulation] step {index}: plant integration failed ({exc})")
            out = self._fallback(state, str(exc))
            next_state = JointState(state.q.copy(), np.zeros(self.chain.dof))

        logger.debug(f"[Simulation] step {index}: |x~|={task_error:.3e} |u|={np.linalg.norm(out.command):.3e}")
        record = StepRecord(
            t=index * self.dt,
            q=state.q.copy(),
            qdot=state.qdot.copy(),
            command=np.asarray(out.command, dtype=float).copy(),
            task_error=task_error,
            status=out.status.value,
            flagged=out.flagged,
            errors=dict(errors),
            angles=dict(angles),
            solve_time=out.solve_time,
            message=out.message,
        )
        return next_state, record

    def run(self, steps: int | None = None) -> StepLog:
        """Execute the configured number of steps (or `steps`)."""
        steps = self.scenario.simulation.steps if steps is None else steps
        log = StepLog(timing=self.timing)
        state = self.initial_state()
        logger.info(
            f"[Simulation] {self.scenario.name}: {self.variant.value}-{self.mode.value}, "
            f"{steps} steps at dt={self.dt:g}, {sum(self.assembler.census().values())} constraint rows"
        )
        for index in range(steps):
            state, record = self.step(state, index)
            log.append(record)
        self.final_state = state
        summary = self.summary(log)
        logger.info(
            f"[Simulation] finished: final |x~|={summary.final_task_error:.3e}, "
            f"{summary.flagged_steps} flagged steps"
        )
        return log

    def trajectory(self, log: StepLog) -> list[np.ndarray]:
        """Every recorded configuration plus the final one."""
        qs = [r.q for r in log]
        if self.final_state is not None and len(log):
            qs.append(self.final_state.q)
        return qs

    def summary(self, log: StepLog) -> RunSummary:
        result = RunSummary(
            steps=len(log),
            final_task_error=log[-1].task_error if len(log) else float("nan"),
            flagged_steps=log.flagged_steps,
        )
        for record in log:
            for name, phi in record.angles.items():
                result.max_angle[name] = max(result.max_angle.get(name, -np.inf), phi)
            for tag, error in record.errors.items():
                margin = error if self.assembler.directions[tag] == Direction.KEEP_OUT else -error
                result.min_margin[tag] = min(result.min_margin.get(tag, np.inf), margin)
        return result
