"""
VFI whole-body control - command-line entry point.

    vfi-sim run --scenario desk_cup --mode cqp-velocity --out log.csv
    vfi-sim validate --scenario desk_cup

Exit codes: 0 clean run, 1 usage or scenario error, 2 collision detected.
"""

import argparse
import logging
import sys
from pathlib import Path

# Add src to path for imports
src_path = Path(__file__).parent.parent
if str(src_path) not in sys.path:
    sys.path.insert(0, str(src_path))

from core.config import Config  # noqa: E402
from core.errors import ScenarioError  # noqa: E402
from core.schemas import ControllerMode, ControllerVariant  # noqa: E402

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_COLLISION = 2

MODES = [f"{v.value}-{m.value}" for v in ControllerVariant for m in ControllerMode]


def _parse_mode(text: str) -> tuple[ControllerVariant, ControllerMode]:
    variant, _, mode = text.partition("-")
    return ControllerVariant(variant), ControllerMode(mode)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vfi-sim", description="Constrained whole-body control simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Simulate a scenario and write the step log")
    run.add_argument("--scenario", default=Config.DEFAULT_SCENARIO, help="Scenario file or bundled name")
    run.add_argument("--mode", choices=MODES, default=None, help="Controller variant and level")
    run.add_argument("--out", required=True, help="Step log (CSV)")
    run.add_argument("--disable", nargs="*", default=[], metavar="NAME", help="Constraint names to drop")
    run.add_argument("--steps", type=int, default=None, help="Override the scenario step count")
    run.add_argument("--timing", action="store_true", help="Add a solve_time column")
    run.add_argument("--verbose", action="store_true", help="Per-step debug logging")

    validate = sub.add_parser("validate", help="Load a scenario and print its constraint census")
    validate.add_argument("--scenario", default=Config.DEFAULT_SCENARIO)
    validate.add_argument("--verbose", action="store_true")
    return parser


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def _validate(args) -> int:
    from data.scenario_store import ScenarioStore
    from services.constraint_assembler import ConstraintAssembler

    scenario = ScenarioStore.load(args.scenario)
    census = ConstraintAssembler(scenario).census()
    print(f"{scenario.name}: {scenario.robot.dof} joints, {sum(census.values())} constraint rows")
    for name, rows in census.items():
        print(f"  {name}: {rows}")
    return EXIT_OK


def _run(args) -> int:
    from data.scenario_store import ScenarioStore
    from services.collision_checker import CollisionChecker
    from services.simulation_service import SimulationService

    if args.steps is not None and args.steps < 0:
        print("error: --steps must be >= 0", file=sys.stderr)
        return EXIT_USAGE

    scenario = ScenarioStore.load(args.scenario)
    variant, mode = _parse_mode(args.mode) if args.mode else (None, None)
    service = SimulationService(scenario, mode, variant, args.disable, timing=args.timing)
    log = service.run(args.steps)
    path = log.write_csv(args.out)

    summary = service.summary(log)
    print(f"[Main] wrote {len(log)} steps to {path}")
    print(f"[Main] final task error {summary.final_task_error:.3e}, {summary.flagged_steps} flagged steps")
    for name, phi in summary.max_angle.items():
        print(f"[Main] max angle {name}: {phi:.4f} rad")

    report = CollisionChecker(service.scenario, service.chain).check(service.trajectory(log))
    if not report.ok:
        first = report.violations[0]
        print(
            f"[Main] collision: {len(report.violations)} violations, first {first.constraint} at step {first.step}",
            file=sys.stderr,
        )
        return EXIT_COLLISION
    return EXIT_OK


def cli(argv: list[str] | None = None) -> int:
    """Parse argv, dispatch, and map failures to exit codes."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE

    _configure_logging(args.verbose)
    try:
        if args.command == "validate":
            return _validate(args)
        return _run(args)
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main():
    """Console-script entry point."""
    return cli(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
