"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad user input: malformed specs, shape mismatches, out-of-range params."""


class SingularSystemError(ValidationError):
    """Unpenalized least-squares system is singular; retry with penalty > 0."""


class NoOracleError(ValidationError):
    """No closed-form limiting kernel exists for the requested feature law."""


class NonConvergenceError(RuntimeError):
    """Iterative fit hit its iteration cap. Carries the last iterate."""

    def __init__(self, message, last_fit=None):
        super().__init__(message)
        self.last_fit = last_fit
