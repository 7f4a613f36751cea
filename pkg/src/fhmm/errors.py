"""Exception types shared across the package."""


class FhmmError(Exception):
    """Base class for all package errors."""


class DomainError(FhmmError, ValueError):
    """An input violates a documented precondition (bad symbol, shape, range)."""


class DegenerateSequenceError(FhmmError):
    """A forward-pass scale denominator underflowed to zero.

    Carries the offending time step so callers can locate the impossible
    observation.
    """

    def __init__(self, time_step: int, message: str | None = None):
        self.time_step = time_step
        super().__init__(
            message or f"zero-probability sequence at time step {time_step}"
        )


class EstimationError(FhmmError):
    """A model cannot be estimated from the data given (e.g. no transitions)."""


class SelectionError(FhmmError):
    """Partition selection cannot satisfy the request.

    Carries the number of eligible groups actually available.
    """

    def __init__(self, requested: int, eligible: int):
        self.requested = requested
        self.eligible = eligible
        super().__init__(
            f"requested {requested} groups but only {eligible} are eligible"
        )


class TrainingDivergedError(FhmmError):
    """Fusion training produced a non-finite loss.  Carries the epoch index."""

    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"non-finite training loss at epoch {epoch}")


class ConfigError(FhmmError):
    """A run-configuration file contains an unknown key or invalid value."""
