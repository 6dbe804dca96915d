"""Payoff expressions over ``S1..SJ``.

Grammar: numbers, variables ``S1``..``SJ``, binary ``+ - *``, unary minus
and the functions ``max(...)`` and ``min(...)`` with at least two
arguments.  Expressions of a recognised shape map to named payoff kinds
and inherit their structural flags; everything else is ``custom`` with
flags left unknown.
"""

from __future__ import annotations

import ast
import re
from typing import Callable

import numpy as np

from ..errors import ValidationError
from ..payoffs import Payoff, make_payoff

_VAR = re.compile(r"S([1-9][0-9]*)$")
_FUNCS = {"max": np.maximum, "min": np.minimum}


class ExpressionError(ValidationError):
    """Malformed payoff expression; ``position`` is a 1-based column."""

    def __init__(self, message: str, position: int | None = None):
        self.position = position
        where = f" at column {position}" if position is not None else ""
        super().__init__(f"{message}{where}")


def _col(node) -> int | None:
    offset = getattr(node, "col_offset", None)
    return None if offset is None else offset + 1


def _parse(text: str) -> ast.expr:
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse payoff expression ({exc.msg})", exc.offset) from None
    return tree.body


def _compile(node, n_assets: int) -> tuple[Callable[[np.ndarray], np.ndarray], int]:
    """Evaluator of ``node`` and the largest asset index it uses."""
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        c = float(node.value)
        return (lambda z: np.full(z.shape[:-1], c)), 0
    if isinstance(node, ast.Name):
        m = _VAR.match(node.id)
        if not m:
            raise ExpressionError(f"unknown identifier '{node.id}'", _col(node))
        j = int(m.group(1))
        if n_assets is not None and j > n_assets:
            raise ExpressionError(f"'{node.id}' exceeds the {n_assets} assets of the model", _col(node))
        return (lambda z: z[..., j - 1]), j
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        f, top = _compile(node.operand, n_assets)
        if isinstance(node.op, ast.USub):
            return (lambda z: -f(z)), top
        return f, top
    if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.Add, ast.Sub, ast.Mult)):
        a, ta = _compile(node.left, n_assets)
        b, tb = _compile(node.right, n_assets)
        ops = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply}
        op = ops[type(node.op)]
        return (lambda z: op(a(z), b(z))), max(ta, tb)
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            name = node.func.id if isinstance(node.func, ast.Name) else "call"
            raise ExpressionError(f"unknown function '{name}'", _col(node))
        if node.keywords or len(node.args) < 2:
            raise ExpressionError(f"{node.func.id}() takes two or more positional arguments", _col(node))
        parts = [_compile(arg, n_assets) for arg in node.args]
        reduce = _FUNCS[node.func.id].reduce
        fns = [p[0] for p in parts]
        return (lambda z: reduce([f(z) for f in fns])), max(p[1] for p in parts)
    if isinstance(node, ast.BinOp):
        raise ExpressionError(f"operator '{type(node.op).__name__}' is not allowed", _col(node))
    raise ExpressionError(f"unsupported syntax '{type(node).__name__}'", _col(node))


# shape recognition ----------------------------------------------------------


def _const(node) -> float | None:
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return float(node.value)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        c = _const(node.operand)
        return None if c is None else -c
    return None


def _var(node) -> int | None:
    if isinstance(node, ast.Name):
        m = _VAR.match(node.id)
        return int(m.group(1)) if m else None
    return None


def _is_max(node) -> bool:
    return isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id == "max"


def _shifted(node) -> tuple[object, float] | None:
    """Split ``x - K`` into ``(x, K)``; a bare ``x`` gives ``(x, 0)``."""
    if isinstance(node, ast.BinOp) and isinstance(node.op, ast.Sub):
        k = _const(node.right)
        if k is not None:
            return node.left, k
    return node, 0.0


def _all_vars(nodes, n_assets) -> list[int] | None:
    idx = [_var(n) for n in nodes]
    if any(i is None for i in idx) or sorted(idx) != list(range(1, n_assets + 1)):
        return None
    return idx


def recognize(node, n_assets: int) -> tuple[str, dict] | None:
    """Named kind and parameters of ``node``, or None."""
    if not _is_max(node):
        return None
    args = list(node.args)
    consts = [a for a in args if _const(a) is not None]
    terms = [a for a in args if _const(a) is None]
    if len(consts) == 1 and _all_vars(terms, n_assets):
        return "best_of", {"K": _const(consts[0])}
    if len(consts) == 1 and _const(consts[0]) == 0.0:
        if len(terms) == 1:
            inner, k = _shifted(terms[0])
            if _is_max(inner) and not any(_const(a) is not None for a in inner.args) and _all_vars(inner.args, n_assets):
                return "call_on_max", {"K": k}
            if n_assets == 2 and isinstance(inner, ast.BinOp) and isinstance(inner.op, ast.Sub):
                if _var(inner.left) == 2 and _var(inner.right) == 1:
                    return "spread", {"K": k}
        split = [_shifted(t) for t in terms]
        order = _all_vars([s[0] for s in split], n_assets)
        if order:
            strikes = [0.0] * n_assets
            for (_, k), j in zip(split, order):
                strikes[j - 1] = k
            if len(set(strikes)) == 1:
                return "call_on_max", {"K": strikes[0]}
            return "multi_strike", {"strikes": strikes}
    return None


def parse_payoff_expression(text: str, n_assets: int | None = None) -> Payoff:
    """Compile ``text`` into a payoff.

    Parameters
    ----------
    text : str
        Expression such as ``"max(S1, S2, 1.0)"``.
    n_assets : int, optional
        Number of model assets; variables beyond it are rejected.  When
        omitted the largest index used is taken.

    Raises
    ------
    ExpressionError
        Syntax errors (with column) or identifiers outside the grammar.
    """
    node = _parse(text)
    fn, top = _compile(node, n_assets)
    J = n_assets if n_assets is not None else top
    named = recognize(node, J) if J else None
    if named is not None:
        kind, params = named
        base = make_payoff(kind, params)
        return Payoff(kind, base.fn, n_assets=J, strikes=base.strikes, convex=base.convex,
                      submodular=base.submodular, expression=text)
    return Payoff("custom", fn, n_assets=J or None, expression=text)
