"""Exception types shared across the toolkit."""


class LuqError(Exception):
    """Base class for toolkit errors."""


class CapabilityError(LuqError, ValueError):
    """The chosen generator lacks a property the operation needs (e.g. a second derivative)."""


class GridMismatchError(LuqError, ValueError):
    """Two densities were compared on different grids or supports."""


class InfiniteDivergenceError(LuqError, ArithmeticError):
    """A divergence required to be finite hit the +inf sentinel."""


class SimulationError(LuqError, ArithmeticError):
    """An SDE trajectory became non-finite."""


class StabilityError(LuqError, ValueError):
    """An explicit time step exceeds the solver's stability bound."""

    def __init__(self, message, required_dt):
        super().__init__(message)
        self.required_dt = required_dt
