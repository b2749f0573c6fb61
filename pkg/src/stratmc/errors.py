"""Exception types raised by the sampler and the oracle."""


class StratMCError(Exception):
    """Base class for all package errors."""


class NonFiniteStateError(StratMCError, FloatingPointError):
    pass


class NonConvergenceError(StratMCError):
    pass


class ReducibleChainError(NonConvergenceError):
    pass


class ReducibleMatrixError(NonConvergenceError):
    """Strata transition matrix splits into disconnected blocks."""

    def __init__(self, message, blocks=None):
        super().__init__(message)
        self.blocks = blocks or []


class UncoveredPointError(StratMCError):
    pass


class InconsistentGeometryError(StratMCError):
    pass


class TrajectoryCapError(StratMCError):
    """A trajectory hit ``max_steps`` without exiting its stratum."""

    def __init__(self, message, replica=None, partial=None):
        super().__init__(message)
        self.replica = replica
        self.partial = partial


class StarvedStratumError(StratMCError):
    def __init__(self, stratum):
        super().__init__(f"stratum {stratum} has an empty exit batch")
        self.stratum = stratum


class VanishingWeightError(StratMCError):
    def __init__(self, strata):
        super().__init__(f"strata {list(strata)} received zero weight")
        self.strata = list(strata)


class GridMismatchError(StratMCError, ValueError):
    pass


class EmptyHistogramError(StratMCError, ValueError):
    pass


class NoExitStratumError(StratMCError):
    """(I - P_hat_j) is singular: some states of the stratum can never leave."""


class AssumptionViolation(StratMCError):
    pass


class ConfigError(StratMCError, ValueError):
    pass
