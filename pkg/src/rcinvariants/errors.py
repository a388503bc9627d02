"""Exception hierarchy shared by all modules."""


class RcInvariantsError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgumentError(RcInvariantsError, ValueError):
    pass


class DivergenceError(RcInvariantsError, ArithmeticError):
    """A trajectory or forecast blew up or went non-finite."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class ConditioningError(RcInvariantsError, ArithmeticError):
    """Tangent vectors collapsed during re-orthonormalization."""


class IllConditionedError(RcInvariantsError, ArithmeticError):
    """Readout normal equations are singular."""


class DegenerateDataError(RcInvariantsError, ValueError):
    pass


class ConfigError(RcInvariantsError, ValueError):
    pass


class StageError(RcInvariantsError):
    """Wraps a failure inside one pipeline stage of an experiment."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
