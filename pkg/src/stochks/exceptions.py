"""Exception types raised across the package."""


class InvalidParameterError(ValueError):
    """A parameter violates a documented precondition."""


class AliasingError(InvalidParameterError):
    """Grid too coarse for the requested modal resolution."""


class TraceClassError(InvalidParameterError):
    """Noise spectrum would not be summable in the infinite-mode limit."""


class GridMismatchError(InvalidParameterError):
    """Two objects that must share a grid or time axis do not."""


class NonContractionError(RuntimeError):
    """Picard iteration failed to converge within the iteration cap."""

    def __init__(self, message, last_ratio=None, iterations=None):
        super().__init__(message)
        self.last_ratio = last_ratio
        self.iterations = iterations


class DivergedPathError(FloatingPointError):
    """A path produced non-finite values; carries the blow-up time."""

    def __init__(self, message, time=None, path_index=None):
        super().__init__(message)
        self.time = time
        self.path_index = path_index


class TruncationCapExceeded(RuntimeError):
    """The truncation-level schedule ran out while the norm kept growing."""

    def __init__(self, message, level=None, time=None):
        super().__init__(message)
        self.level = level
        self.time = time


class IllConditionedFitError(RuntimeError):
    """A log-log fit on the requested window is too poor to report a rate."""

    def __init__(self, message, r2=None):
        super().__init__(message)
        self.r2 = r2
