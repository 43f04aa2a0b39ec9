"""Exception hierarchy shared by every pufbench module."""


class PufBenchError(Exception):
    """Base class for all errors raised by pufbench."""


class InvalidParameterError(PufBenchError, ValueError):
    """A parameter is outside its documented domain (bad n, empty topology, ...)."""


class UndefinedCorrelationError(PufBenchError, ValueError):
    """Pearson correlation requested for a constant (zero-variance) input."""


class DivergedError(PufBenchError, ArithmeticError):
    """An optimizer produced a non-finite loss."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class DatasetError(PufBenchError):
    """Base class for CRPB1 load failures."""


class MalformedHeaderError(DatasetError):
    pass


class UnsupportedVersionError(DatasetError):
    pass


class TruncatedDatasetError(DatasetError):
    pass


class ChecksumMismatchError(DatasetError):
    pass


class MalformedRecordError(DatasetError):
    pass
