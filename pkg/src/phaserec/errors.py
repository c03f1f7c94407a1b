"""Exception types shared across the package."""


class DomainError(ValueError):
    """A point lies outside the computational domain."""


class SpaceMismatchError(ValueError):
    """Two fields that must share a spline space do not."""


class ConfigError(ValueError):
    """Invalid or incomplete run configuration. Carries the offending key."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class PreconditionerError(RuntimeError):
    """Diagonal preconditioner cannot be built (zero diagonal on an active row)."""


class SolverError(RuntimeError):
    """A linear or nonlinear solve failed."""


class StepError(SolverError):
    """A time step failed to converge. Carries the failing time."""

    def __init__(self, message, time=None, residuals=None):
        super().__init__(message)
        self.time = time
        self.residuals = residuals


class StepSizeSingularityError(SolverError):
    """Steepest-descent step size is 0/0-degenerate (zero linearised image,
    nonzero gradient)."""


class DegenerateMeasurementError(ValueError):
    """Measurement field carries no tumour mass; centre of mass undefined."""
