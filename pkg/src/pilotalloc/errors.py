"""Exception types shared across the package."""


class PilotAllocError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(PilotAllocError, ValueError):
    """A parameter is outside its admissible range."""


class InsufficientPilotError(InvalidParameterError):
    """A pilot arm has too few observations for variance estimation."""


class DegenerateDataError(PilotAllocError):
    """Data too degenerate (zero-variance resamples etc.) to produce an estimate."""


class NotApplicableError(PilotAllocError):
    """A requested approximation's hypotheses are violated (e.g. infinite kurtosis)."""


class DataInputError(PilotAllocError, ValueError):
    """Malformed or inconsistent user-supplied data."""
