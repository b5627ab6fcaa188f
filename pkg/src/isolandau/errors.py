class LandauError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(LandauError, ValueError):
    """An argument lies outside the admissible domain of an operation."""


class StabilityError(LandauError, ValueError):
    """A time step violates the explicit stability limit."""

    def __init__(self, dt, dt_max):
        self.dt = dt
        self.dt_max = dt_max
        super().__init__(f"dt={dt:.6g} exceeds the stability limit; admissible dt <= {dt_max:.17g}")


class ResolutionError(LandauError, ValueError):
    """The grid is too coarse for the requested quantity."""


class ChecksumError(LandauError):
    """A checkpoint failed its CRC-32 validation."""
