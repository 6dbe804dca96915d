"""Backward induction over interval and jump markets."""

from .costs import price_fixed_costs, price_with_costs, transaction_cost_gate
from .engines import (
    price_american,
    price_european,
    price_interval,
    price_lower,
    price_nonlinear_jumps,
    price_path_dependent,
)
from .market import CostModel, HedgeResult, MarketSpec, proportional_costs, vertex_bits
from .operator import VertexOperator, apply_operator, bellman_step
from .strategy import extract_strategy, replay_capital

__all__ = [
    "CostModel",
    "HedgeResult",
    "MarketSpec",
    "VertexOperator",
    "apply_operator",
    "bellman_step",
    "extract_strategy",
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
    "vertex_bits",
]
