"""Exception hierarchy shared by all engines.

Each class carries the CLI exit code it maps to.
"""


class GameHedgeError(Exception):
    exit_code = 1


class ArgumentError(GameHedgeError, ValueError):
    """Malformed input: wrong shapes, non-positive prices, unknown nodes."""

    exit_code = 2


class ValidationError(ArgumentError):
    """A model or config violates a stated invariant."""

    exit_code = 2


class DegeneracyError(GameHedgeError):
    """Some d vectors of the jump family are linearly dependent."""

    exit_code = 3


class InfeasibleError(GameHedgeError):
    """The origin is not interior to the convex hull of the jumps."""

    exit_code = 3


class UnboundedError(InfeasibleError):
    """The minmax value is minus infinity (jumps lie in a half-space)."""


class ConvergenceError(GameHedgeError):
    exit_code = 3


class NumericError(GameHedgeError):
    exit_code = 3


class ConsistencyError(GameHedgeError):
    """Two evaluation routes that must agree did not."""

    exit_code = 3


class PreconditionError(GameHedgeError):
    """A required condition (Lipschitz bound, cost bound, kappa sign) is not met."""

    exit_code = 4


class ResourceError(GameHedgeError):
    """The requested computation exceeds the configured budget."""

    exit_code = 4
