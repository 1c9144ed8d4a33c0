"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: input problems exit 1,
insufficient truncations exit 2, undetermined classifications exit 3.
"""


class NeumannLabError(Exception):
    """Base class for all package errors."""


class InputError(NeumannLabError):
    """Malformed graph data, bad parameters, unparsable expressions."""


class OverflowCapError(NeumannLabError):
    """Edge weights or degrees exceed the float-representable cap.

    Carries the largest usable truncation index when known.
    """

    def __init__(self, message, usable_cap=None):
        super().__init__(message)
        self.usable_cap = usable_cap


class TruncationInsufficientError(NeumannLabError):
    """An exhaustion ran out before a reference converged.

    ``last_increment`` holds the final observed increment so callers can
    judge how far the run was from the requested tolerance.
    """

    def __init__(self, message, last_increment=None):
        super().__init__(message)
        self.last_increment = last_increment


class UndeterminedClassificationError(NeumannLabError):
    """A series verdict was required but no certificate was supplied."""
