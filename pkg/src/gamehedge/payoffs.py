"""Rainbow payoffs, structural checks and power-function fits.

Payoffs act on the last axis: ``payoff(z)`` with ``z`` of shape ``(..., J)``
returns an array of shape ``(...)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Callable

import numpy as np
from scipy.optimize import linprog

from .errors import ArgumentError

KINDS = ("best_of", "call_on_max", "multi_strike", "portfolio", "spread", "custom")


@dataclass(frozen=True)
class Payoff:
    """Terminal payoff of a rainbow option.

    Attributes
    ----------
    kind : str
        One of ``KINDS``.
    fn : callable
        Vectorized evaluator on arrays of shape ``(..., J)``.
    n_assets : int or None
        Number of underlyings when fixed by the kind.
    strikes, weights : tuple of float
        Parameters of the named kinds.
    convex, submodular : bool or None
        Declared structure; ``None`` means unknown.
    """

    kind: str
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    n_assets: int | None = None
    strikes: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()
    convex: bool | None = None
    submodular: bool | None = None
    expression: str | None = None

    def __call__(self, z) -> np.ndarray:
        arr = np.asarray(z, dtype=float)
        if self.n_assets is not None and arr.shape[-1] != self.n_assets:
            raise ArgumentError(f"{self.kind} payoff takes {self.n_assets} prices, got {arr.shape[-1]}")
        return np.asarray(self.fn(arr), dtype=float)


def _strike(params: dict, key: str = "K") -> float:
    if key not in params:
        raise ArgumentError(f"payoff parameter '{key}' is required")
    return float(params[key])


def make_payoff(kind: str, params: dict | None = None, fn=None) -> Payoff:
    """Build a named payoff.

    Parameters
    ----------
    kind : str
        ``best_of`` (``K``), ``call_on_max`` (``K``), ``multi_strike``
        (``strikes``), ``portfolio`` (``weights``, ``K``), ``spread`` (``K``;
        long the second asset, short the first) or ``custom`` (``fn``).
    params : dict
        Kind parameters.
    """
    params = dict(params or {})
    if kind == "best_of":
        k = _strike(params)
        return Payoff(kind, lambda z: np.maximum(z.max(axis=-1), k), strikes=(k,),
                      convex=True, submodular=True)
    if kind == "call_on_max":
        k = _strike(params)
        return Payoff(kind, lambda z: np.maximum(z.max(axis=-1) - k, 0.0), strikes=(k,),
                      convex=True, submodular=True)
    if kind == "multi_strike":
        if "strikes" not in params:
            raise ArgumentError("payoff parameter 'strikes' is required")
        ks = np.asarray(params["strikes"], dtype=float).ravel()
        return Payoff(kind, lambda z: np.maximum((z - ks).max(axis=-1), 0.0), n_assets=ks.size,
                      strikes=tuple(ks.tolist()), convex=True, submodular=True)
    if kind == "portfolio":
        if "weights" not in params:
            raise ArgumentError("payoff parameter 'weights' is required")
        k = _strike(params)
        w = np.asarray(params["weights"], dtype=float).ravel()
        return Payoff(kind, lambda z: np.maximum(z @ w - k, 0.0), n_assets=w.size, strikes=(k,),
                      weights=tuple(w.tolist()), convex=True)
    if kind == "spread":
        k = _strike(params)
        # h(z2 - z1) with h convex has a non-positive mixed derivative
        return Payoff(kind, lambda z: np.maximum(z[..., 1] - z[..., 0] - k, 0.0), n_assets=2,
                      strikes=(k,), convex=True, submodular=True)
    if kind == "custom":
        if fn is None and "fn" not in params:
            raise ArgumentError("custom payoff needs an evaluator 'fn'")
        func = fn if fn is not None else params["fn"]
        return Payoff(kind, func, n_assets=params.get("n_assets"),
                      convex=params.get("convex"), submodular=params.get("submodular"),
                      expression=params.get("expression"))
    raise ArgumentError(f"unknown payoff kind '{kind}'; expected one of {', '.join(KINDS)}")


def power_payoff(exponents, coeff: float = 1.0, offset: float = 0.0) -> Payoff:
    """``offset + coeff * prod_j z_j ** exponents_j``."""
    e = np.asarray(exponents, dtype=float).ravel()
    return Payoff("custom", lambda z: offset + coeff * np.prod(z ** e, axis=-1), n_assets=e.size)


@dataclass(frozen=True)
class PathPayoff:
    """Payoff of a whole price path.

    ``fn`` receives an array of shape ``(N, n+1, J)`` (``N`` paths, times
    ``0..n``) and returns ``N`` values.
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)

    def __call__(self, paths) -> np.ndarray:
        arr = np.asarray(paths, dtype=float)
        if arr.ndim == 2:
            return np.asarray(self.fn(arr[None]), dtype=float)[0]
        return np.asarray(self.fn(arr), dtype=float)


def terminal_path_payoff(p: Payoff) -> PathPayoff:
    """Lift a terminal payoff to paths."""
    return PathPayoff(f"terminal:{p.kind}", lambda paths: p(paths[:, -1, :]))


def lookback_payoff(asset: int = 0) -> PathPayoff:
    """Floating-strike lookback put ``max_m S_m - S_n`` on one asset."""
    return PathPayoff("lookback", lambda paths: np.maximum(paths[:, :, asset].max(axis=1) - paths[:, -1, asset], 0.0))


@dataclass
class SubmodularReport:
    passed: bool
    worst_violation: float
    worst_pair: tuple[int, int] | None = None
    worst_point: np.ndarray | None = None


def _grid(box, grid: int) -> list[np.ndarray]:
    lo, hi = (np.asarray(b, dtype=float).ravel() for b in box)
    if lo.shape != hi.shape:
        raise ArgumentError("box bounds must have equal length")
    if np.any(lo <= 0) or np.any(hi < lo):
        raise ArgumentError("box must be strictly positive with lo <= hi")
    return [np.linspace(a, b, grid) for a, b in zip(lo, hi)]


def check_submodular(p: Payoff, box, grid: int = 9, rtol: float = 1e-12) -> SubmodularReport:
    """Rectangle inequality ``f(x & y) + f(x | y) <= f(x) + f(y)`` on a grid.

    On a product grid it suffices to check the mixed second difference of
    every adjacent cell and coordinate pair; larger rectangles telescope.
    """
    axes = _grid(box, grid)
    J = len(axes)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    vals = p(mesh)
    scale = 1.0 + float(np.max(np.abs(vals)))
    worst, where = -np.inf, (None, None)
    for i in range(J):
        for j in range(i + 1, J):
            mixed = np.diff(np.diff(vals, axis=i), axis=j)
            if mixed.size == 0:
                continue
            pos = np.unravel_index(int(np.argmax(mixed)), mixed.shape)
            if mixed[pos] > worst:
                worst, where = float(mixed[pos]), ((i, j), mesh[pos])
    if worst == -np.inf:
        worst = 0.0
    worst = max(worst, 0.0)
    return SubmodularReport(passed=worst <= rtol * scale, worst_violation=worst,
                            worst_pair=where[0], worst_point=where[1])


def check_convex_midpoint(p: Payoff, box, n_samples: int = 2000, seed: int = 0) -> float:
    """Largest midpoint-convexity violation over random pairs in the box (0 when convex)."""
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    rng = np.random.default_rng(seed)
    x = rng.uniform(lo, hi, size=(n_samples, lo.size))
    y = rng.uniform(lo, hi, size=(n_samples, lo.size))
    gap = p(0.5 * (x + y)) - 0.5 * (p(x) + p(y))
    return float(max(gap.max(), 0.0))


@dataclass(frozen=True)
class PowerFit:
    """Best fit ``offset + coeff * prod z_j ** exponents_j`` on a box.

    ``sup_error`` is the largest absolute error on a refined sample grid of
    the box (twice as dense as the one used for fitting).
    """

    exponents: tuple[int, ...]
    offset: float
    coeff: float
    sup_error: float
    box: tuple[tuple[float, ...], tuple[float, ...]]

    def __call__(self, z) -> np.ndarray:
        e = np.asarray(self.exponents, dtype=float)
        return self.offset + self.coeff * np.prod(np.asarray(z, dtype=float) ** e, axis=-1)

    def as_payoff(self) -> Payoff:
        return power_payoff(self.exponents, self.coeff, self.offset)


def _chebyshev_fit(basis: np.ndarray, target: np.ndarray) -> tuple[float, float, float]:
    # min t  s.t.  |a + c*basis - target| <= t
    ones = np.ones_like(basis)
    a_ub = np.vstack([
        np.column_stack([ones, basis, -ones]),
        np.column_stack([-ones, -basis, -ones]),
    ])
    b_ub = np.concatenate([target, -target])
    res = linprog([0.0, 0.0, 1.0], A_ub=a_ub, b_ub=b_ub,
                  bounds=[(None, None), (None, None), (0, None)], method="highs")
    if res.status != 0:
        return 0.0, 0.0, np.inf
    a, c, _ = res.x
    err = float(np.max(np.abs(a + c * basis - target)))
    return float(a), float(c), err


def power_fit(p: Payoff, box, max_exponent: int = 3, grid: int = 9) -> PowerFit:
    """Least-max fit of ``offset + coeff * prod z^i`` over integer exponents ``0..max_exponent``.

    All-zero exponents give a constant; it is reported with ``offset = 0``
    and ``coeff`` equal to the midrange.  Among equally good exponent vectors
    the first in lexicographic order wins.
    """
    axes = _grid(box, grid)
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    target = p(pts)
    scale = 1.0 + float(np.max(np.abs(target)))
    best = None
    for exps in product(range(max_exponent + 1), repeat=len(axes)):
        if not any(exps):
            lo, hi = float(target.min()), float(target.max())
            fit = (0.0, 0.5 * (lo + hi), 0.5 * (hi - lo))
        else:
            basis = np.prod(pts ** np.asarray(exps, dtype=float), axis=1)
            fit = _chebyshev_fit(basis, target)
        if best is None or fit[2] < best[1][2] - 1e-12 * scale:
            best = (exps, fit)
    exps, (a, c, err) = best
    # certify on a refined grid that contains the fitting grid
    fine = _grid(box, 2 * grid - 1)
    fpts = np.stack(np.meshgrid(*fine, indexing="ij"), axis=-1).reshape(-1, len(fine))
    approx = a + c * np.prod(fpts ** np.asarray(exps, dtype=float), axis=1)
    err = max(err, float(np.max(np.abs(approx - p(fpts)))))
    lo, hi = (tuple(float(x) for x in np.asarray(b, dtype=float).ravel()) for b in box)
    return PowerFit(exponents=tuple(int(e) for e in exps), offset=a, coeff=c, sup_error=err, box=(lo, hi))


def reachable_box(z0, down, up, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Coordinate-wise range of prices reachable in ``n`` steps."""
    z = np.asarray(z0, dtype=float)
    return z * np.asarray(down, dtype=float) ** n, z * np.asarray(up, dtype=float) ** n
