"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: schema/validation/config problems are
exit code 2, everything else unexpected is 3.
"""


class PumpschedError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(PumpschedError):
    """A configuration file or parameter set is inconsistent or out of range."""


class SchemaError(PumpschedError):
    """An input file does not match the documented column schema."""


class ValidationError(PumpschedError):
    """Input data violates an invariant (e.g. non-monotonic timestamps).

    ``lines`` carries 1-based line numbers of the offending rows when known.
    """

    def __init__(self, message: str, lines: list[int] | None = None):
        super().__init__(message)
        self.lines = lines or []


class StateError(PumpschedError):
    """An operation was called in an invalid order (e.g. step before reset)."""
