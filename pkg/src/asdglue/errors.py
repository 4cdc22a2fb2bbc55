"""Exception types. Each failure family maps to its own CLI exit code."""


class AsdGlueError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(AsdGlueError, ValueError):
    """Invalid input or parameter combination."""

    exit_code = 2


class SingularMetricError(ValidationError):
    def __init__(self, msg, node=None):
        super().__init__(msg)
        self.node = node


class GridMismatchError(ValidationError):
    pass


class FrameDegeneracyError(ValidationError):
    pass


class ComplementarityError(ValidationError):
    """Bodies cannot be attached (quotient or orientation mismatch)."""


class HypothesisError(AsdGlueError):
    """A standing hypothesis of the gluing construction fails (for instance J_i != 0)."""

    exit_code = 5


class InconclusiveRankError(AsdGlueError):
    """No reliable singular-value gap."""

    exit_code = 3

    def __init__(self, msg, singular_values=None):
        super().__init__(msg)
        self.singular_values = singular_values


class UnmeasurableError(AsdGlueError):
    """A decay rate or slope is below the floating-point floor."""

    exit_code = 3


class SpectrumCutoffError(AsdGlueError):
    """Mode cutoff cannot be certified for the requested strip."""

    exit_code = 3


class DivergenceError(AsdGlueError):
    """Newton iteration failed (damping floor, positivity loss, stagnation)."""

    exit_code = 4

    def __init__(self, msg, log=None):
        super().__init__(msg)
        self.log = log
