"""Hedge vectors along a realized path and capital replay."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ArgumentError
from ..payoffs import PathPayoff
from .market import HedgeResult, vertex_bits


def _vertex_index(step, J: int, n_maps: int | None) -> int:
    if n_maps is not None:
        b = int(step)
        if not 0 <= b < n_maps:
            raise ArgumentError(f"jump index {b} outside 0..{n_maps - 1}")
        return b
    if isinstance(step, (tuple, list, np.ndarray)):
        flags = [int(x) for x in step]
        if len(flags) != J or any(x not in (0, 1) for x in flags):
            raise ArgumentError(f"vertex {tuple(flags)} is not a tuple of {J} up(1)/down(0) flags")
        return sum(x << j for j, x in enumerate(flags))
    b = int(step)
    if not 0 <= b < 2 ** J:
        raise ArgumentError(f"vertex index {b} outside 0..{2 ** J - 1}")
    return b


def _walk(h: HedgeResult, path):
    """Yield ``(period, vertex, node)`` along the path."""
    J, n = h.market.J, h.market.n
    steps = list(path)
    if len(steps) != n:
        raise ArgumentError(f"path has {len(steps)} periods, the result has {n}")
    n_maps = len(h.market.jump_maps) if h.layout == "nodes" else None
    bits = vertex_bits(J)
    node = np.zeros(J, dtype=int) if h.layout in ("lattice", "costed") else 0
    for m, step in enumerate(steps):
        b = _vertex_index(step, J, n_maps)
        yield m, b, node
        if h.layout in ("lattice", "costed"):
            node = node + bits[b]
        elif h.layout == "tree":
            node = node * 2 ** J + b
        else:
            node = int(h.state["links"][m][node, b])


def extract_strategy(h: HedgeResult, path) -> list[np.ndarray]:
    """Hedge vectors (stock holdings) chosen at each period along ``path``.

    ``path`` lists one vertex per period: an index ``0..2**J-1`` or a tuple
    of up(1)/down(0) flags (jump-map indices for nonlinear jump markets).
    """
    if h.layout == "costed":
        return [g for g, _ in _costed_walk(h, path)]
    if h.gammas is None:
        raise ArgumentError("result was computed without storing hedge vectors")
    out = []
    for m, _, node in _walk(h, path):
        table = h.gammas[m]
        out.append(np.array(table[tuple(node)] if h.layout == "lattice" else table[node], dtype=float))
    return out


def _costed_walk(h: HedgeResult, path):
    cost = h.state["cost"]
    v = np.asarray(h.state["v0"], dtype=float)
    d, u = h.market.down, h.market.up
    out = []
    for m, _, node in _walk(h, path):
        A = h.state["A"][m][tuple(node)]
        G = h.state["G"][m][tuple(node)]
        z = h.z0 * u ** node * d ** (m - node)
        o = int(np.argmax(A + cost(G - v, z)))
        out.append((G[o].copy(), z))
        v = G[o]
    return out


@dataclass
class Replay:
    """Capital ``X_m`` and prices ``S_m`` along one path."""

    capital: np.ndarray
    prices: np.ndarray
    payoff: float

    @property
    def surplus(self) -> float:
        return float(self.capital[-1] - self.payoff)


def replay_capital(h: HedgeResult, path, payoff, x0: float | None = None) -> Replay:
    """Run the self-financing capital recursion from ``x0`` (default: the price).

    ``X_{m+1} = rho X_m + (gamma, keep * xi * S_m - rho S_m) - cost``.
    """
    gammas = extract_strategy(h, path)
    market = h.market
    rho = market.rho
    x = h.price if x0 is None else float(x0)
    s = np.asarray(h.z0, dtype=float).copy()
    caps, prices = [x], [s.copy()]
    v = np.asarray(h.state.get("v0", np.zeros(market.J)), dtype=float)
    cost = h.state.get("cost")
    n_maps = len(market.jump_maps) if h.layout == "nodes" else None
    for m, (gamma, step) in enumerate(zip(gammas, path)):
        b = _vertex_index(step, market.J, n_maps)
        if h.layout == "nodes":
            s_next = np.asarray(market.jump_maps[b](s), dtype=float)
            gain = gamma @ (s_next - rho * s)
        else:
            xi = market.vertices(m)[b]
            s_next = xi * s
            gain = gamma @ ((h.trade_factor * xi - rho) * s)
        x = rho * x + gain
        if cost is not None:
            x -= float(cost(gamma - v, s))
            v = gamma
        s = s_next
        caps.append(x)
        prices.append(s.copy())
    if isinstance(payoff, PathPayoff):
        final = float(payoff(np.array(prices)))
    else:
        final = float(payoff(s))
    return Replay(capital=np.array(caps), prices=np.array(prices), payoff=final)
