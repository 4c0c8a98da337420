"""Exception hierarchy.

The CLI maps these onto exit codes: :class:`DataError` subclasses exit
with 2, :class:`ScaleError` subclasses with 3.
"""


class XViewGeoError(Exception):
    pass


class DataError(XViewGeoError):
    pass


class ScaleError(XViewGeoError):
    pass


class InvalidCoordinateError(DataError, ValueError):
    pass


class EmptySelectionError(DataError, ValueError):
    pass


class DegenerateVectorError(DataError, ValueError):
    pass


class ContractError(XViewGeoError, ValueError):
    """An argument violates a documented precondition."""


class InsufficientDataError(DataError, ValueError):
    pass


class UndefinedMetricError(DataError, ValueError):
    pass


class IngestionError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None, field=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
        self.field = field


class RetrievalError(DataError):
    pass


class GraphConstructionError(DataError):
    pass


class ZeroPayoffError(XViewGeoError, ArithmeticError):
    pass


class NoEdgesError(XViewGeoError, ValueError):
    pass


class OracleScaleError(ScaleError):
    pass


class BudgetExceededError(ScaleError):
    pass


class ConfigError(DataError, ValueError):
    pass


class EvalError(DataError, ValueError):
    pass
