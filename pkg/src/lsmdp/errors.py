"""Exception taxonomy shared across the package.

Construction-time problems (bad shapes, non-stochastic columns, invalid domain
specs) are distinguished from numerical failures (singular systems, degenerate
bases) so the CLI can map them to distinct exit codes.
"""


class LmdpError(Exception):
    """Base class for all errors raised by this package."""


# -- construction / configuration -------------------------------------------

class DimensionMismatch(LmdpError):
    pass


class NotStochastic(LmdpError):
    pass


class NoAbsorption(LmdpError):
    """Some interior state cannot reach the boundary under the passive dynamics."""


class RewardOverflow(LmdpError):
    """exp(r / lambda) is not finite for some reward entry."""


class InvalidSpec(LmdpError):
    pass


class BlockedCell(LmdpError):
    pass


class EmptyTarget(LmdpError):
    pass


class CannotTerminateBase(LmdpError):
    pass


class AlreadyTerminated(LmdpError):
    pass


class NoTaskSet(LmdpError):
    """Episode requested before the stack was given a task to pursue."""


# -- numerical ----------------------------------------------------------------

class SingularSystem(LmdpError):
    pass


class SingularFundamentalMatrix(LmdpError):
    pass


class ZeroNormalizer(LmdpError):
    """A policy column has zero total desirability mass under the passive support."""


class NonPositiveDesirability(LmdpError):
    pass


class InvalidTrajectory(LmdpError):
    """Trajectory does not end at a boundary state or uses a zero-probability step."""


class DegenerateBasis(LmdpError):
    """Task basis contains an all-zero column."""


class NonPositiveComposite(LmdpError):
    """Blended desirability has a non-positive entry."""


class AllZeroColumn(LmdpError):
    """A stacked passive column has no mass at all."""


# -- warnings -----------------------------------------------------------------

class UnreachableSubtasks(UserWarning):
    """Subtask states carry zero transition mass and can never be entered."""


class ConvergenceWarning(UserWarning):
    """Iterative solve hit max_iter before reaching tolerance."""
