"""Exception and warning classes raised by covsel."""


class CovselError(Exception):
    """Base class for all covsel errors."""


class NotPositiveDefinite(CovselError, ValueError):
    """A matrix expected to be symmetric positive definite is not."""


class InvalidInput(CovselError, ValueError):
    """Arguments violate a documented precondition."""


class DimensionMismatch(InvalidInput):
    """Inputs that must share a dimension do not."""


class ZeroVariance(CovselError, ValueError):
    """A column has zero variance where unit variance was requested."""


class EmptyGraph(CovselError, ValueError):
    """The graph has no edges."""


class EmptySubset(CovselError, ValueError):
    pass


class OverlappingSubsets(CovselError, ValueError):
    pass


class InvalidSpec(InvalidInput):
    """A synthetic cohort specification is not realizable."""


class NotConverged(CovselError, RuntimeError):
    """Raised only when a solver is asked to be strict about convergence."""


class ConvergenceWarning(UserWarning):
    """The iteration budget was exhausted before the duality gap target."""
