"""Exception hierarchy shared across the package.

The CLI maps these onto scriptable exit codes: ConfigError -> 2,
NumericsError -> 3, AssumptionError -> 4.
"""


class MracError(Exception):
    """Base class for all package errors."""


class ConfigError(MracError):
    """Scenario file missing, unparseable, or violating the key schema."""


class AssumptionError(MracError):
    """A plant/reference-model assumption required by the design fails."""


class MatchingError(MracError):
    """The ideal-controller matching system is singular or ill-conditioned."""


class NumericsError(MracError):
    """Non-finite state, alarm limit exceeded, or safety abort during a run."""

    def __init__(self, message, step=None, values=None):
        super().__init__(message)
        self.step = step
        self.values = values
