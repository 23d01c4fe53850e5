"""
Scenario text <-> Scenario model.

Scenario files are JSON documents validated by core.schemas.Scenario.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

from pydantic import ValidationError

from core.config import Config
from core.errors import ScenarioError
from core.schemas import Scenario

logger = logging.getLogger(__name__)


def _error_path(loc: tuple) -> str:
    return ".".join(str(part) for part in loc)


def _semantic_error(exc: ValidationError) -> ScenarioError:
    first = exc.errors()[0]
    loc = tuple(first.get("loc", ()))
    message = first.get("msg", "invalid value")
    if first.get("type") == "missing":
        message = f"missing required section {loc[-1]!r}" if loc else "missing required section"
    elif message.startswith("Value error, "):
        message = message[len("Value error, "):]
        # Model validators report their own dotted path in front of the message.
        head, sep, rest = message.partition(": ")
        if sep and " " not in head:
            return ScenarioError(rest, ".".join(p for p in (_error_path(loc), head) if p))
    return ScenarioError(message, _error_path(loc))


class ScenarioStore:
    """Load and save scenario files."""

    @staticmethod
    def loads(text: str) -> Scenario:
        """
        Parse scenario text.

        Args:
            text: JSON scenario document

        Returns:
            Validated Scenario with defaults applied

        Raises:
            ScenarioError: parse errors carry "line L, column C"; semantic
                errors carry the dotted field path
        """
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(exc.msg, f"line {exc.lineno}, column {exc.colno}") from exc
        if not isinstance(raw, dict):
            raise ScenarioError("scenario must be a JSON object")
        try:
            return Scenario.model_validate(raw)
        except ValidationError as exc:
            raise _semantic_error(exc) from exc

    @staticmethod
    def load(path: Path | str) -> Scenario:
        """
        Load a scenario file.

        Args:
            path: File path, or the name of a bundled scenario

        Returns:
            Validated Scenario
        """
        path = Path(path)
        if not path.exists() and path.suffix == "":
            path = Config.scenario_path(str(path))
        if not path.exists():
            raise ScenarioError("file not found", str(path))
        scenario = ScenarioStore.loads(path.read_text(encoding="utf-8"))
        logger.info(f"[Scenario] loaded {scenario.name!r} from {path}")
        return scenario

    @staticmethod
    def dumps(scenario: Scenario) -> str:
        """Serialise with every default written out."""
        return scenario.model_dump_json(indent=2)

    @staticmethod
    def save(scenario: Scenario, path: Path | str) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(ScenarioStore.dumps(scenario), encoding="utf-8")
