"""Cost-function prediction markets with exponential-utility traders.

Equilibria, trade dynamics as randomized block-coordinate descent, and the
sampling / market-maker bias / convergence error decomposition.
"""

__version__ = "0.1.0"


class MarketError(Exception):
    """Base class for the package's numerical failures."""


class NotInteriorError(MarketError, ValueError):
    """A price vector touches the boundary where an interior point is required."""


class MaxIterationsError(MarketError):
    """An iterative solver ran out of iterations before reaching tolerance."""


class BracketFailure(MarketError):
    """No sign change of a 1-D derivative was found inside the search bound."""


class ZeroMatrixError(MarketError, ValueError):
    """A PSD matrix has no strictly positive eigenvalue."""


class DegenerateUniformError(MarketError, ValueError):
    """The bias ratio is 0/0 because the clearing price is uniform."""


class NonPositiveGapError(MarketError, ValueError):
    """An empirical rate was requested from a non-positive suboptimality gap."""


class PreconditionViolation(MarketError, ValueError):
    """Inputs violate the ordering or difference conditions of a check."""
