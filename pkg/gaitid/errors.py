"""
Errors - Exception hierarchy for gaitid

Every error derives from ValueError so callers that only know the builtin
keep working; the CLI maps ConfigError to exit code 2 and the rest to 1.
"""
from typing import Optional


class GaitIdError(ValueError):
    """Base class for all gaitid failures."""


class ParseError(GaitIdError):
    """
    Malformed input file.

    Attributes:
        path: File being parsed
        line: 1-based line number of the offending row
    """

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        elif line is not None:
            location = f"line {line}: "
        super().__init__(f"{location}{message}")


class EmptyInputError(GaitIdError):
    """Input file or sequence holds no data."""


class InvalidParameterError(GaitIdError):
    """A numeric or enumerated parameter is outside its allowed range."""


class InvalidInputError(GaitIdError):
    """Input data violates a precondition (too short, wrong length...)."""


class ShapeError(GaitIdError):
    """Array dimensions do not line up."""


class DegenerateInputError(GaitIdError):
    """Input carries no usable variation (e.g. all rows identical)."""


class TrainingError(GaitIdError):
    """
    Linear solve failed during model fitting.

    Attributes:
        condition_number: 2-norm condition number of the system, if computed
    """

    def __init__(self, message: str, condition_number: Optional[float] = None):
        self.condition_number = condition_number
        if condition_number is not None:
            message = f"{message} (condition number {condition_number:.3e})"
        super().__init__(message)


class InvalidLabelError(GaitIdError):
    """Label vector unusable for training (too few rows or classes)."""


class StratificationError(GaitIdError):
    """A class has fewer members than the requested number of folds."""

    def __init__(self, message: str, label=None):
        self.label = label
        super().__init__(message)


class OptimizationError(GaitIdError):
    """Particle swarm produced no finite fitness value."""


class ConfigError(GaitIdError):
    """Inconsistent or invalid pipeline configuration."""
