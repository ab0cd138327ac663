"""Exception types raised across the identification toolkit."""


class IdentificationError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(IdentificationError):
    """An array has a shape inconsistent with the model or data dimensions."""


class DataError(IdentificationError):
    """Input data violates a basic requirement (length, finiteness, overlap)."""


class DataFormatError(IdentificationError):
    """A data file could not be parsed.

    Carries the 1-based line number when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)
        self.line = line


class IllConditionedError(IdentificationError):
    """A regression problem is too ill-conditioned to solve reliably."""


class UnstableModelError(IdentificationError):
    """A linear model estimate remained unstable after projection."""


class SingularSystemError(IdentificationError):
    """The state-trajectory normal equations are singular."""


class DegenerateDataError(IdentificationError):
    """A regressor sample carries no variation to place neurons on."""


class DivergenceError(IdentificationError):
    """A simulated state trajectory exceeded the divergence bound.

    ``step`` is the 0-based time index at which the bound was crossed.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class NonFiniteError(IdentificationError):
    """A fit produced a non-finite loss; ``iteration`` is the LM iteration."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class ConfigError(IdentificationError):
    """A pipeline configuration failed validation."""
