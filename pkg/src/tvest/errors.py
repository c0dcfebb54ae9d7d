"""Exception types shared by every module.

Each error carries a short machine-readable ``code`` so the CLI can report
failures on a single parseable line.
"""


class TvestError(Exception):
    code = "error"


class ParameterError(TvestError, ValueError):
    """An argument is outside the operation's domain."""

    code = "parameter"


class SizeError(TvestError):
    """An enumeration guard was exceeded."""

    code = "size_guard"

    def __init__(self, message, bits=None, limit=None):
        super().__init__(message)
        self.bits = bits
        self.limit = limit


class EstimationError(TvestError):
    """A randomized estimator failed its own diagnostics."""

    code = "estimation"


class PreconditionError(TvestError):
    """A modelling assumption required downstream does not hold."""

    code = "precondition"


class FamilyMismatchError(TvestError):
    code = "family_mismatch"
