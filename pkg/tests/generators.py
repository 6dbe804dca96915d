"""Random instances shared by the property and acceptance tests."""

from __future__ import annotations

import numpy as np

from gamehedge.geometry import is_degenerate_subset
from gamehedge.lattice import MarketSpec


def interior_simplex(rng, d: int) -> tuple[np.ndarray, np.ndarray]:
    """``d+1`` vectors in R^d with the origin strictly inside, and the weights that show it."""
    while True:
        vecs = rng.normal(size=(d, d))
        p = rng.dirichlet(np.ones(d + 1))
        last = -(p[:d] @ vecs) / p[d]
        fam = np.vstack([vecs, last])
        scale = np.linalg.norm(fam, axis=1)
        if np.any(scale < 1e-3):
            continue
        if any(is_degenerate_subset(np.delete(fam, i, axis=0)) for i in range(d + 1)):
            continue
        return fam, p


def interior_family(rng, d: int, k: int) -> np.ndarray:
    """``k >= d+1`` vectors whose hull contains the origin in its interior."""
    fam, _ = interior_simplex(rng, d)
    extra = rng.normal(size=(k - d - 1, d))
    out = np.vstack([fam, extra])
    return out[rng.permutation(k)]


def market_from_q(q, rho: float = 1.0, widths=None, n: int = 1) -> MarketSpec:
    """Market with prescribed down weights ``q_j = (u_j - rho) / (u_j - d_j)``."""
    q = np.asarray(q, dtype=float)
    widths = np.full(q.shape, 0.3) if widths is None else np.asarray(widths, dtype=float)
    up = rho + q * widths
    down = up - widths
    return MarketSpec(down, up, rho, n)


def random_market(rng, J: int, n: int = 1) -> MarketSpec:
    rho = rng.uniform(1.0, 1.06)
    q = rng.uniform(0.1, 0.9, size=J)
    widths = rng.uniform(0.15, 0.5, size=J)
    return market_from_q(q, rho, widths, n)


def kappa_zero_market(rng, n: int) -> MarketSpec:
    """J=2 market with ``p_1 + p_2 = 1`` (the anti-diagonal law is risk neutral)."""
    while True:
        rho = rng.uniform(1.0, 1.06)
        p1 = rng.uniform(0.2, 0.8)
        widths = rng.uniform(0.15, 0.45, size=2)
        p = np.array([p1, 1.0 - p1])
        down = rho - p * widths
        up = down + widths
        if np.all(down > 0):
            return MarketSpec(down, up, rho, n)
