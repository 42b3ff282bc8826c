"""Exception hierarchy shared by all modules.

The CLI maps each class to a distinct exit code (see ``nlhodge.cli``).
"""


class NLHodgeError(Exception):
    """Base class for all package errors."""


class DensityDomainError(NLHodgeError, ValueError):
    """Q outside the admissible interval [0, q_cavitation)."""


class DegreeError(NLHodgeError, ValueError):
    """Operator applied to a form of the wrong degree."""


class ShapeMismatchError(NLHodgeError, ValueError):
    """Fields live on different complexes or have incompatible layouts."""


class GeometryError(NLHodgeError, ValueError):
    """A ball, annulus or cutoff support leaves the computational domain."""


class DimensionError(NLHodgeError, ValueError):
    """The hypothesis n > 2q of the monotonicity statements is violated."""


class ConvergenceError(NLHodgeError, RuntimeError):
    """Iteration stopped at max_iter without reaching the residual target."""

    def __init__(self, message, final_residual=None, iterations=None):
        super().__init__(message)
        self.final_residual = final_residual
        self.iterations = iterations


class SubsonicViolationError(NLHodgeError, RuntimeError):
    """Damping could not keep max Q below the subsonic safety margin."""


class TransportError(NLHodgeError, RuntimeError):
    """Radial transport drifted off SO(3) or received a non-rotation."""


class SnapshotError(NLHodgeError, OSError):
    """A snapshot file is missing, truncated or of the wrong kind."""
