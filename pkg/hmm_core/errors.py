"""Exception hierarchy shared by the numerical core and the CLI."""

from typing import Optional


class HmmError(Exception):
    """Base class for every error raised by the estimator package."""


class ModelValidationError(HmmError, ValueError):
    """Input data violates a structural requirement."""


class ModelFileError(ModelValidationError):
    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        prefix = f"line {line_number}: " if line_number is not None else ""
        super().__init__(f"{prefix}{message}")


class NumericalError(HmmError, RuntimeError):
    """A computation could not produce a certified result."""


class NoStationaryDistributionError(NumericalError):
    pass


class MomentMatchingError(NumericalError):
    pass


class DegenerateMassError(NumericalError):
    pass


class InfeasibleThetaError(NumericalError):
    def __init__(self, message: str, row: int):
        self.row = row
        super().__init__(f"{message} (row {row})")


class ImpossibleObservationError(NumericalError):
    def __init__(self, step: int):
        self.step = step
        super().__init__(f"observation at step {step} has zero likelihood")


class StarvedStateError(NumericalError):
    def __init__(self, state: int):
        self.state = state
        super().__init__(f"state starved: state {state} has zero expected visits")


class PerturbationTooLargeError(NumericalError):
    pass


class RandomSystemError(NumericalError):
    pass
