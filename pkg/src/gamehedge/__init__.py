"""Guaranteed hedge prices for rainbow options in interval markets.

Prices are computed as games against the market: at each period the
hedger picks stock holdings and the market picks a jump from a finite
vertex set.  The value of each one-period game is the largest expectation
over the extreme risk-neutral laws of the jump family.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ArgumentError,
    ConsistencyError,
    ConvergenceError,
    DegeneracyError,
    GameHedgeError,
    InfeasibleError,
    NumericError,
    PreconditionError,
    ResourceError,
    UnboundedError,
    ValidationError,
)
from .lattice import (  # noqa: E402
    CostModel,
    HedgeResult,
    MarketSpec,
    bellman_step,
    extract_strategy,
    price_american,
    price_european,
    price_fixed_costs,
    price_interval,
    price_lower,
    price_nonlinear_jumps,
    price_path_dependent,
    price_with_costs,
    proportional_costs,
    replay_capital,
    transaction_cost_gate,
)
from .minmax import VertexValuation, lower_minmax, upper_minmax  # noqa: E402
from .payoffs import make_payoff  # noqa: E402

__all__ = [
    "ArgumentError",
    "ConsistencyError",
    "ConvergenceError",
    "CostModel",
    "DegeneracyError",
    "GameHedgeError",
    "HedgeResult",
    "InfeasibleError",
    "MarketSpec",
    "NumericError",
    "PreconditionError",
    "ResourceError",
    "UnboundedError",
    "ValidationError",
    "VertexValuation",
    "bellman_step",
    "extract_strategy",
    "lower_minmax",
    "make_payoff",
    "price_american",
    "price_european",
    "price_fixed_costs",
    "price_interval",
    "price_lower",
    "price_nonlinear_jumps",
    "price_path_dependent",
    "price_with_costs",
    "proportional_costs",
    "replay_capital",
    "transaction_cost_gate",
    "upper_minmax",
]
