"""Exception types raised by mrof."""


class MrofError(Exception):
    """Base class for all library errors."""


class DomainError(MrofError, ValueError):
    """An argument lies outside the domain of an operation."""


class CutLocusReached(DomainError):
    """A logarithm was requested at or beyond the cut locus."""


class RangeViolation(DomainError):
    """Input values do not fit inside the required geodesic ball."""


class ParseError(MrofError, ValueError):
    """A manifold, grid, or schedule specification could not be parsed."""


class GridMismatch(MrofError, ValueError):
    """Fields live on different grids or manifolds."""


class RequiresPositiveEps(DomainError):
    """The smooth (gradient) path was called with eps == 0."""


class NoConvergence(MrofError, RuntimeError):
    """An iteration hit its budget before reaching tolerance."""


class BudgetExceeded(MrofError, ValueError):
    """A brute-force enumeration would exceed its evaluation budget."""
