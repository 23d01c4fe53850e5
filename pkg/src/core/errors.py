"""
Domain exceptions.

Every error here is a ValueError: callers that only care about "bad input"
can keep catching ValueError.
"""

from __future__ import annotations

from enum import Enum


class DegenerateGeometry(ValueError):
    """Zero direction, non-unit vector, or a distance Jacobian at its singular point."""


class RangeError(ValueError):
    """A scalar lies outside the domain of the requested map."""


class DimensionError(ValueError):
    """Vector or matrix shape does not match the kinematic chain."""


class LemmaCondition(str, Enum):
    """Which hypothesis of the second-order safety result failed."""
    GAINS = "gains_positive"
    DISCRIMINANT = "discriminant_positive"
    INITIAL_DISTANCE = "initial_distance_positive"
    APPROACH_RATE = "approach_rate_bounded"


class HypothesisError(ValueError):
    """Second-order VFI safety hypotheses are violated."""

    def __init__(self, condition: LemmaCondition, message: str):
        super().__init__(f"{condition.value}: {message}")
        self.condition = condition


class ScenarioError(ValueError):
    """Scenario text failed to parse or validate."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class UnknownFrame(ValueError):
    """Frame index or attachment name is not part of the chain."""
