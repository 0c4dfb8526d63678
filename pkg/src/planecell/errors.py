"""Exception types shared across the package."""


class PlanecellError(Exception):
    """Base class for numerical failures (CLI exit code 1)."""


class CompatibilityError(PlanecellError):
    """A Poisson right-hand side has nonzero mean, so no periodic solution exists."""

    def __init__(self, message, mean=None):
        super().__init__(message)
        self.mean = mean


class MisalignmentError(ValueError):
    """An integer translate does not land on grid nodes."""


class NonConvergence(PlanecellError):
    """Descent stopped before reaching the residual tolerance."""

    def __init__(self, message, z=None, residual=None, trace=None, tag=None):
        super().__init__(message)
        self.z = z
        self.residual = residual
        self.trace = trace or []
        self.tag = tag


class NoRootError(PlanecellError):
    def __init__(self, message, fmin=None, fmax=None):
        super().__init__(message)
        self.fmin = fmin
        self.fmax = fmax


class DegenerateTwist(PlanecellError):
    def __init__(self, message, alpha=None, twist=None):
        super().__init__(message)
        self.alpha = alpha
        self.twist = twist


class LinearSolveStall(PlanecellError):
    """Krylov solve of the linearised operator failed to converge."""

    def __init__(self, message, ritz_min=None, residuals=None):
        super().__init__(message)
        self.ritz_min = ritz_min
        self.residuals = residuals or []


class TailError(PlanecellError):
    """Integrand has not decayed at the ends of the quadrature strip."""

    def __init__(self, message, tail=None):
        super().__init__(message)
        self.tail = tail
