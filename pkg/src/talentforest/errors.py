"""Exception types raised across the package."""


class TalentForestError(Exception):
    """Base class for every error this package raises on purpose."""


class ParameterError(TalentForestError, ValueError):
    pass


class SchemaError(TalentForestError, ValueError):
    pass


class DataError(TalentForestError, ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateDataError(TalentForestError, ValueError):
    pass


class ConsistencyError(TalentForestError, ValueError):
    """Model and data do not belong together."""


class UndefinedMetricError(TalentForestError, ValueError):
    pass


class RulesError(DataError):
    pass
