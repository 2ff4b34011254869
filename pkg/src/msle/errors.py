"""Exception hierarchy shared by every module."""


class MsleError(Exception):
    pass


class ConfigurationError(MsleError, ValueError):
    """Bad parameters: too few trials, empty grids, out-of-range beta, ..."""


class InvalidDimensionError(ConfigurationError):
    pass


class HalfPlaneError(MsleError, ValueError):
    """A point that must lie strictly in the upper half-plane does not."""


class ConvergenceError(MsleError, RuntimeError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class BranchSelectionError(ConvergenceError):
    pass


class CollisionError(MsleError, RuntimeError):
    """Two SDE particles met despite step refinement."""

    def __init__(self, message, step=None, pair=None):
        super().__init__(message)
        self.step = step
        self.pair = pair


class FitUndefinedError(MsleError, ValueError):
    pass


class RegionTooCloseError(MsleError, RuntimeError):
    """Too many evaluation points were swallowed by the hull."""


class IntegrationError(MsleError, RuntimeError):
    """An accepted integration step broke a flow invariant."""
