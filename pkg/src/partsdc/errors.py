"""Exception types shared across the package."""


class PartSdcError(Exception):
    """Base class for all library errors."""


class DimensionMismatchError(PartSdcError):
    """A vector's length does not match the subsystem it is meant for."""

    def __init__(self, subsystem: int, expected: int, got: int):
        self.subsystem = subsystem
        self.expected = expected
        self.got = got
        super().__init__(
            f"subsystem {subsystem}: expected dimension {expected}, got {got}"
        )


class SingularMatrixError(PartSdcError):
    """Pivot below threshold during dense factorization."""


class NewtonDivergenceError(PartSdcError):
    """Newton iteration exhausted its budget without converging."""

    def __init__(self, message: str, residual_norm: float, iterations: int):
        self.residual_norm = residual_norm
        self.iterations = iterations
        super().__init__(message)


class SweepDivergenceError(PartSdcError):
    """A stage solve failed inside an SDC sweep.

    Carries the stage coordinates (sweep, node, subsystem) of the failure.
    """

    def __init__(self, sweep: int, node: int, subsystem: int, cause: Exception):
        self.sweep = sweep
        self.node = node
        self.subsystem = subsystem
        self.cause = cause
        super().__init__(
            f"stage solve diverged at sweep={sweep}, node={node}, "
            f"subsystem={subsystem}: {cause}"
        )


class CollocationConvergenceError(PartSdcError):
    """Sweep iteration did not reach the collocation fixed point."""

    def __init__(self, message: str, last_defect: float):
        self.last_defect = last_defect
        super().__init__(message)


class BracketError(PartSdcError):
    """Invalid bracket handed to the stability bisection."""


class ConfigError(PartSdcError):
    """Malformed or inconsistent study configuration."""
