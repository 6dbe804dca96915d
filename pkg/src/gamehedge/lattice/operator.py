"""One-period Bellman operators on vertex jump families.

The operator ``(B f)(z) = max_Omega E_Omega f(xi * z)`` is evaluated for many
nodes at once: extreme laws do not change under coordinate-wise scaling by
``z``, and the hedge vector at ``z`` is the unscaled solution divided by ``z``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ArgumentError
from ..geometry import SimplexMeasure
from ..minmax import ExtremeMeasures, hedge_from_lp
from .market import MarketSpec, check_z0

#: dominance slack (relative) accepted before falling back to the LP hedge
DOMINANCE_RTOL = 1e-9


@dataclass
class StepResult:
    value: float
    gamma: np.ndarray
    measure: SimplexMeasure


@dataclass
class SliceResult:
    """Operator applied to a batch of nodes (leading axes of the inputs)."""

    values: np.ndarray
    active: np.ndarray
    gammas: np.ndarray | None


class VertexOperator:
    """Vectorized Bellman operator for one period of a vertex market.

    Parameters
    ----------
    measures : ExtremeMeasures
        Laws of the unscaled centered family ``trade_factor * xi - rho``.
    """

    def __init__(self, measures: ExtremeMeasures):
        self.measures = measures
        k, d = measures.vectors.shape
        m = len(measures.supports)
        mats = np.zeros((m, d, k))
        for i in range(m):
            if measures.full[i]:
                mats[i] = measures.gamma_solver(i).matrix
        self._solvers = mats

    @classmethod
    def for_market(cls, market: MarketSpec, step: int = 0, trade_factor: float = 1.0) -> "VertexOperator":
        return cls(market.measures(step, trade_factor))

    def apply(self, vertex_values, z=None, lower: bool = False, with_gamma: bool = False) -> SliceResult:
        """Apply to values at the ``2**J`` children of each node.

        Parameters
        ----------
        vertex_values : array (..., 2**J)
            Values at ``xi_b * z`` for every vertex ``b``.
        z : array (..., J), optional
            Node prices; required for hedge vectors.
        """
        vals = np.asarray(vertex_values, dtype=float)
        best, idx = self.measures.select(vals, lower=lower)
        gammas = None
        if with_gamma:
            if z is None:
                raise ArgumentError("node prices are needed to compute hedge vectors")
            gammas = self._hedges(vals, best, idx, np.asarray(z, dtype=float), lower)
        return SliceResult(values=best, active=idx, gammas=gammas)

    def _hedges(self, vals, best, idx, z, lower):
        em = self.measures
        c = em.vectors
        scaled = np.einsum("...dk,...k->...d", self._solvers[idx], vals)
        resid = vals - scaled @ c.T
        gap = (resid.max(axis=-1) - best) if not lower else (best - resid.min(axis=-1))
        scale = 1.0 + np.abs(vals).max(axis=-1)
        redo = (~em.full[idx]) | (gap > DOMINANCE_RTOL * scale)
        if np.any(redo):
            flat_vals = vals.reshape(-1, vals.shape[-1])
            flat_idx = idx.reshape(-1)
            flat_best = best.reshape(-1)
            flat_scaled = scaled.reshape(-1, c.shape[1])
            for node in np.flatnonzero(redo.reshape(-1)):
                flat_scaled[node] = hedge_from_lp(c, flat_vals[node], em.supports[flat_idx[node]],
                                                  flat_best[node], lower)
            scaled = flat_scaled.reshape(scaled.shape)
        return scaled / z


def bellman_step(f, z, market: MarketSpec, step: int = 0, lower: bool = False,
                 trade_factor: float = 1.0) -> StepResult:
    """``(B f)(z)`` with its hedge vector and active extreme law.

    ``f`` is a vectorized callable on price vectors (last axis).
    """
    z = check_z0(z, market.J)
    op = VertexOperator.for_market(market, step, trade_factor)
    vals = np.asarray(f(market.vertices(step) * z), dtype=float)
    res = op.apply(vals, z, lower=lower, with_gamma=True)
    idx = int(res.active)
    sup = op.measures.supports[idx]
    gamma = np.asarray(res.gammas, dtype=float)
    measure = SimplexMeasure(indices=sup, weights=op.measures.weights[idx, list(sup)].copy(), gamma=gamma)
    return StepResult(value=float(res.values), gamma=gamma, measure=measure)


def apply_operator(f, zs, market: MarketSpec, step: int = 0, lower: bool = False) -> np.ndarray:
    """``(B f)`` at many prices ``zs`` of shape ``(..., J)``."""
    zs = np.asarray(zs, dtype=float)
    op = VertexOperator.for_market(market, step)
    verts = market.vertices(step)
    vals = np.asarray(f(zs[..., None, :] * verts), dtype=float)
    return op.apply(vals, lower=lower).values
