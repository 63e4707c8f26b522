"""Exception hierarchy shared by all modules."""


class RisLocateError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(RisLocateError, ValueError):
    """An argument violates a documented precondition."""


class SolverError(RisLocateError, RuntimeError):
    """The interior-point solver stopped before reaching the requested gap.

    Attributes
    ----------
    best : object
        Best iterate reached (an ``SdpSolution``), or None.
    gap : float
        Relative duality gap of ``best``.
    """

    def __init__(self, message, best=None, gap=float("nan")):
        super().__init__(message)
        self.best = best
        self.gap = gap


class EstimationError(RisLocateError, RuntimeError):
    """A DoA or ToA estimate could not be formed from the data."""


class AlgorithmError(RisLocateError, RuntimeError):
    """The iterative localization could not continue.

    ``history`` carries the iteration records collected before the failure.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class ConfigError(RisLocateError, ValueError):
    """Bad configuration value; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
