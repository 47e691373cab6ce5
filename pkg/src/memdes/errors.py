"""Exception hierarchy shared across the package."""


class MemdesError(Exception):
    """Base class for all package errors."""


class ConfigurationError(MemdesError):
    """Bad parameters, missing objective prerequisites, or mismatched inputs."""


class ValidationError(MemdesError):
    """An operator bundle violates one of its invariants.

    `check` names the failed invariant (e.g. "Z symmetry"); the message
    carries the offending norm or value.
    """

    def __init__(self, check: str, message: str):
        self.check = check
        super().__init__(f"{check}: {message}")


class FormatError(MemdesError):
    """Malformed OPB1 container (bad magic, version, or section layout)."""


class InfeasibleWordError(MemdesError):
    """The reduced system for a word is singular or empty; treat f as +inf."""


class InvalidMoveError(MemdesError):
    """A structural move was committed without a feasible batch entry."""


class SolverError(MemdesError):
    """A bound solver failed to converge; message carries the residual report."""
