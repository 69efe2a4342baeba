"""Exception types raised across the package."""


class TdnnError(Exception):
    """Base class for every error raised by tdnn."""


class SolverError(TdnnError):
    """Numerical failure while assembling or solving."""


class NotSPDError(SolverError):
    pass


class NoConvergenceError(SolverError):
    pass


class SingularDiffusivityError(SolverError):
    pass


class MeshParseError(TdnnError, ValueError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class TopologyError(TdnnError, ValueError):
    pass


class UnsupportedElementError(TdnnError, ValueError):
    pass


class InvalidElementError(TdnnError, ValueError):
    pass


class DomainMismatchError(TdnnError, ValueError):
    pass


class DimensionTooLargeError(TdnnError, ValueError):
    pass
