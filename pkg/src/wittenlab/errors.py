"""Exception hierarchy shared by all modules."""


class WittenLabError(Exception):
    """Base class for every error raised by the package."""


class InputError(WittenLabError, ValueError):
    """An argument violates a documented precondition."""


class GeometryError(WittenLabError):
    """The geometry degenerates (non-positive warp or conductance)."""


class UnsupportedFlowError(WittenLabError):
    """The requested operation needs flow data the flow does not supply."""


class SolverError(WittenLabError):
    """A linear solve failed."""


class ConfigError(WittenLabError):
    """A scenario configuration is invalid."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
