"""Exception types shared across the solver."""


class FPSIError(Exception):
    """Base class for all solver errors."""


class StructuralError(FPSIError, ValueError):
    """Field dimensions do not match their grid."""


class OutOfDomain(FPSIError):
    """A point left the container by more than the allowed clamp distance."""

    def __init__(self, point, message=None):
        self.point = tuple(float(p) for p in point)
        super().__init__(message or f"point {self.point} lies outside the container")


class InfiniteEnergy(FPSIError):
    """The deformation is outside the domain of the stored energy (det <= 0)."""


class InversionFailure(FPSIError):
    """Newton inversion of a flow map did not converge."""

    def __init__(self, n_failed, residual):
        self.n_failed = int(n_failed)
        self.residual = float(residual)
        super().__init__(
            f"flow-map inversion failed at {self.n_failed} node(s), max residual {self.residual:.3e}"
        )


class CollisionDetected(FPSIError):
    """The solid touched itself or the container wall."""

    def __init__(self, time, report=None):
        self.time = float(time)
        self.report = report
        super().__init__(f"collision detected at T* = {self.time:.6g}")


class ConfigError(FPSIError):
    """Run configuration failed to parse or validate; carries every violation."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("\n".join(self.violations))
