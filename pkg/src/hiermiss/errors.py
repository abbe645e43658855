"""Exception types raised by the estimators and the command line front end."""


class HiermissError(ValueError):
    """Base class for all package errors."""


class DataError(HiermissError):
    """Input data is empty, ragged, or contains unusable cells."""

    def __init__(self, message, row=None, column=None, line=None):
        self.row = row
        self.column = column
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ParameterError(HiermissError):
    """A parameter definition is invalid for the data at hand."""


class EstimationError(HiermissError):
    """An estimate cannot be formed from the supplied subsample."""


class NoCompleteCasesError(EstimationError):
    """The complete-case (root) pattern is empty."""


class NoEventsError(EstimationError):
    """A censored sample contains no observed events."""
