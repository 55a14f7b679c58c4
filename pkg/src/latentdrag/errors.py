"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument violates its documented domain (probability out of range, n < 1, ...)."""


class ShapeError(ValueError):
    """Tensor shapes are inconsistent with each other or with a model."""


class UndefinedRatioError(ParameterError):
    """A ratio metric was requested with a zero denominator."""


class NoCorrespondenceError(RuntimeError):
    """A requested point has no material correspondence (e.g. handle off the object)."""


class TrainingDivergenceError(RuntimeError):
    """Training loss diverged; the last good checkpoint is retained when possible."""

    def __init__(self, message: str, last_good_path: str | None = None):
        super().__init__(message)
        self.last_good_path = last_good_path


class CheckpointError(RuntimeError):
    """A checkpoint file is missing, corrupt, or of the wrong kind/version."""


class StateError(RuntimeError):
    """An operation was invoked before its required state was loaded."""


class PointsFileError(ValueError):
    """A points text file failed to parse; carries the offending line number."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number
