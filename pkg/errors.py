"""
Exception hierarchy for travagen.

Library code raises these; only cli.py turns them into exit codes.
"""


class TravagenError(Exception):
    """Base class for all travagen errors."""

    exit_code = 1


class LogFormatError(TravagenError, ValueError):
    """Malformed event CSV: missing column, bad row or unparsable timestamp."""

    exit_code = 2

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyLogError(TravagenError, ValueError):
    exit_code = 2

    def __init__(self, message: str = "empty log"):
        super().__init__(message)


class NonFiniteOutputError(TravagenError, ValueError):
    exit_code = 4

    def __init__(self, message: str = "non-finite generator output"):
        super().__init__(message)


class ShapeError(TravagenError, ValueError):
    """Dimension mismatch, unknown loss tag or invalid layer/embedding size."""

    exit_code = 2


class EmptyBatchError(TravagenError):
    exit_code = 4

    def __init__(self, message: str = "empty Poisson batch: skip step"):
        super().__init__(message)


class NonPrivateError(TravagenError, ValueError):
    exit_code = 2

    def __init__(self, message: str = "non-private: noise multiplier zero"):
        super().__init__(message)


class PrivacyBudgetError(TravagenError, ValueError):
    exit_code = 2

    def __init__(self, message: str = "budget exhausted"):
        super().__init__(message)


class InfeasibleTargetError(TravagenError):
    exit_code = 3

    def __init__(self, message: str = "infeasible target"):
        super().__init__(message)


class TrainingDivergedError(TravagenError, RuntimeError):
    exit_code = 4

    def __init__(self, message: str = "training diverged: reduce η or raise Φ"):
        super().__init__(message)


class ModelFormatError(TravagenError, ValueError):
    exit_code = 2


class UnbalancedNetworkError(TravagenError, ValueError):
    exit_code = 4
