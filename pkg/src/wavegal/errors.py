"""Exception hierarchy shared by all wavegal modules."""


class WavegalError(Exception):
    """Base class for every error raised by the package."""


class DomainError(WavegalError, ValueError):
    """A point lies outside the closed unit square."""


class ValidationError(WavegalError, ValueError):
    """Input data violate a documented invariant."""


class ConstructionError(WavegalError):
    """A basis table could not be built."""


class ResourceError(WavegalError):
    """A request would exceed the configured memory budget."""

    def __init__(self, message, cardinality=None):
        super().__init__(message)
        self.cardinality = cardinality


class DimensionError(WavegalError, ValueError):
    """Vector and index-set sizes disagree."""


class StructuralError(WavegalError):
    """Active sets derive from different full index sets."""


class ConvergenceError(WavegalError):
    """PCG hit its iteration cap."""

    def __init__(self, message, residuals=()):
        super().__init__(message)
        self.residuals = list(residuals)


class MatrixError(WavegalError):
    """The system matrix is not positive definite."""


class ResolutionError(WavegalError, ValueError):
    """A reference grid is too coarse for the requested comparison."""


class OracleError(WavegalError):
    """The finite-difference reference solve failed."""


class StepError(WavegalError):
    """A time step failed; carries the step index."""

    def __init__(self, message, step):
        super().__init__(f"step {step}: {message}")
        self.step = step


class ConfigError(WavegalError, ValueError):
    """A scenario configuration failed to parse or validate."""

    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key
