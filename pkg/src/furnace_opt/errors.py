"""Exception hierarchy.

Every error carries an ``exit_code`` used by the CLI, and an optional
``stage`` tag filled in by the pipeline when the error crosses a stage
boundary.
"""

from __future__ import annotations


class FurnaceOptError(Exception):
    exit_code = 1
    stage: str | None = None

    def __str__(self) -> str:
        msg = super().__str__()
        return f"[{self.stage}] {msg}" if self.stage else msg


class ConfigError(FurnaceOptError, ValueError):
    exit_code = 2


class SchemaError(ConfigError):
    def __init__(self, message: str, column: str | None = None):
        super().__init__(message)
        self.column = column


class ParseError(ConfigError):
    def __init__(self, message: str, row: int, column: str):
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyInputError(ConfigError):
    pass


class DataValidationError(ConfigError):
    pass


class BoundsError(ConfigError):
    pass


class InsufficientDataError(FurnaceOptError, ValueError):
    pass


class DegenerateVarianceError(FurnaceOptError, ValueError):
    def __init__(self, message: str, column: str | None = None):
        super().__init__(message)
        self.column = column


class DegenerateR2Error(FurnaceOptError, ValueError):
    """R² undefined because the evaluation target is constant.

    ``metrics`` still holds MSE/RMSE (R² fields are NaN).
    """

    def __init__(self, message: str, metrics=None):
        super().__init__(message)
        self.metrics = metrics


class DegenerateRangeError(FurnaceOptError, ValueError):
    pass


class DimensionError(FurnaceOptError, ValueError):
    pass


class DomainError(FurnaceOptError, ValueError):
    pass


class StateError(FurnaceOptError, RuntimeError):
    pass


class EvaluationError(FurnaceOptError, RuntimeError):
    def __init__(self, message: str, genome=None):
        super().__init__(message)
        self.genome = genome


class InfeasibleError(FurnaceOptError, RuntimeError):
    exit_code = 4

    def __init__(self, message: str, genome=None, violation: float | None = None):
        super().__init__(message)
        self.genome = genome
        self.violation = violation


class ModelQualityError(FurnaceOptError, RuntimeError):
    exit_code = 3

    def __init__(self, message: str, test_r2: dict[str, float] | None = None):
        super().__init__(message)
        self.test_r2 = dict(test_r2 or {})


class GridSizeError(FurnaceOptError, ValueError):
    pass
