"""Exception hierarchy shared by all modules."""


class RandwaveError(Exception):
    """Base class for every error raised by the package."""


class InvalidInputError(RandwaveError, ValueError):
    """Malformed or non-finite data handed to an operation."""


class AliasingError(InvalidInputError):
    """Grid too coarse to represent the requested band-limited field."""


class ConfigError(RandwaveError, ValueError):
    """Run configuration violates a domain constraint."""


class InstabilityError(RandwaveError, RuntimeError):
    """Time integration left its accuracy envelope.

    ``diagnostics`` carries whatever the integrator knew when it gave up
    (time, energy drift, guard value).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ContractionError(RandwaveError, RuntimeError):
    """Picard iteration of the Duhamel map failed to contract."""
