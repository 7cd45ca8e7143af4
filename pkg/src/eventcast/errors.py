"""Exception hierarchy shared across the toolkit."""


class EventcastError(Exception):
    """Base class for all toolkit errors."""


class ParseError(EventcastError):
    """A log line could not be parsed.

    Carries the 1-based line number when the caller supplied one.
    """

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class SchemaError(ParseError):
    """A parsed record is missing a mandatory field."""


class ConfigurationError(EventcastError):
    """A configuration value is inconsistent with the data or with itself."""


class FitError(EventcastError):
    """A model or table could not be fitted (empty or too-short input)."""


class ShapeError(EventcastError):
    """Array arguments have mutually inconsistent shapes or out-of-range ids."""


class ContractError(EventcastError):
    """A documented precondition was violated by the caller."""


class ValidationError(EventcastError):
    """A grammar or generator argument failed validation."""


class TrainingError(EventcastError):
    """Training was invoked with no usable data."""


class MetricError(EventcastError):
    """A metric is undefined for the given (empty) input."""


class CompatibilityError(EventcastError):
    """Persisted artifacts do not belong together (e.g. vocabulary mismatch)."""
