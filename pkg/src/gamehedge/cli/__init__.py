"""Command-line front end and job configuration."""

from .config import ConfigError, JobConfig, load_config, parse_config
from .expr import ExpressionError, parse_payoff_expression

__all__ = ["ConfigError", "ExpressionError", "JobConfig", "load_config", "parse_config", "parse_payoff_expression"]
