"""Finite minmax functionals over jump families.

For centered jump vectors ``xi_1..xi_k`` in R^d with the origin interior to
their hull, the one-step game value

    min_gamma max_i [ f_i - (gamma, xi_i) ]

equals the largest expectation of ``f`` under an extreme risk-neutral law.
Those laws are enumerated once per family (:class:`ExtremeMeasures`) and then
evaluated against any number of value vectors at once, which is what the
lattice engines rely on.

Families in general position only have extreme laws on d+1 points.  When
some d vectors are dependent (symmetric markets, for instance) extreme laws
may live on fewer points; those are enumerated exactly as well.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable

import numpy as np
from scipy.optimize import linprog

from .errors import (
    ArgumentError,
    ConvergenceError,
    DegeneracyError,
    NumericError,
    PreconditionError,
    UnboundedError,
)
from .geometry import SimplexMeasure, is_degenerate_subset, origin_interior, spread_characteristics

#: relative rank cut-off for support matrices
RANK_RTOL = 1e-10
#: residual tolerance of the risk-neutral system on normalized vectors
RESIDUAL_TOL = 1e-10
#: weights at or below this are treated as absent from the support
WEIGHT_FLOOR = 1e-12
#: candidates within this relative gap of the best are ties
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class ExtremeMeasures:
    """All extreme risk-neutral laws of a centered jump family.

    Attributes
    ----------
    vectors : (k, d) array
        Centered jump vectors.
    supports : tuple of index tuples
        Supports, sorted lexicographically.
    weights : (m, k) array
        Dense weight rows, zero off the support.
    full : (m,) bool array
        True where the support has d+1 points.
    """

    vectors: np.ndarray
    supports: tuple[tuple[int, ...], ...]
    weights: np.ndarray
    full: np.ndarray

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def degenerate(self) -> bool:
        return not bool(np.all(self.full))

    @classmethod
    def from_vectors(cls, vectors, allow_degenerate: bool = True) -> "ExtremeMeasures":
        arr = np.asarray(vectors, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise ArgumentError(f"jump family must be a (k, d) array, got shape {arr.shape}")
        k, d = arr.shape
        if k < d + 1:
            raise ArgumentError(f"need at least d+1={d + 1} jump vectors, got {k}")
        norms = np.linalg.norm(arr, axis=1)
        if np.any(norms == 0):
            raise ArgumentError("jump vectors must be non-vanishing")
        interior, omega = origin_interior(arr)
        if not interior:
            raise UnboundedError(
                "origin is not interior to the hull of the jump family; the game value is "
                f"unbounded below (separating direction {np.round(omega, 6).tolist()})"
            )
        if not allow_degenerate:
            for sub in combinations(range(k), d):
                if is_degenerate_subset(arr[list(sub)]):
                    raise DegeneracyError(f"jump vectors {sub} are linearly dependent")
        unit = arr / norms.max()
        supports: list[tuple[int, ...]] = []
        rows: list[np.ndarray] = []
        sizes = range(2, d + 2) if allow_degenerate else (d + 1,)
        for size in sizes:
            subsets = np.array(list(combinations(range(k), size)), dtype=int)
            if subsets.size == 0:
                continue
            # (N, d+1, size): coordinates stacked over a row of ones
            mats = np.concatenate(
                [np.transpose(unit[subsets], (0, 2, 1)), np.ones((len(subsets), 1, size))], axis=1
            )
            sv = np.linalg.svd(mats, compute_uv=False)
            full_rank = sv[:, -1] > RANK_RTOL * sv[:, 0]
            rhs = np.zeros(d + 1)
            rhs[-1] = 1.0
            p = np.einsum("nij,j->ni", np.linalg.pinv(mats), rhs)
            resid = np.linalg.norm(np.einsum("nij,nj->ni", mats, p) - rhs, axis=1)
            ok = full_rank & (resid < RESIDUAL_TOL) & np.all(p > WEIGHT_FLOOR, axis=1)
            for sub, w in zip(subsets[ok], p[ok]):
                supports.append(tuple(int(i) for i in sub))
                row = np.zeros(k)
                row[sub] = w / w.sum()
                rows.append(row)
        if not supports:
            raise NumericError("no extreme risk-neutral law found for an interior family")
        order = sorted(range(len(supports)), key=lambda i: supports[i])
        supports = [supports[i] for i in order]
        weights = np.array([rows[i] for i in order])
        full = np.array([len(s) == d + 1 for s in supports])
        return cls(vectors=arr, supports=tuple(supports), weights=weights, full=full)

    def expectations(self, values) -> np.ndarray:
        """Expectation of ``values`` (shape ``(..., k)``) under every law, shape ``(..., m)``."""
        return np.asarray(values, dtype=float) @ self.weights.T

    def select(self, values, lower: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Best expectation and the index of the law attaining it.

        Ties within a relative 1e-12 go to the lexicographically smallest
        support, which is the first one in storage order.
        """
        ev = self.expectations(values)
        best = ev.min(axis=-1) if lower else ev.max(axis=-1)
        tol = TIE_RTOL * (1.0 + np.abs(best))
        if lower:
            mask = ev <= (best + tol)[..., None]
        else:
            mask = ev >= (best - tol)[..., None]
        idx = np.argmax(mask, axis=-1)
        return np.take_along_axis(ev, idx[..., None], axis=-1)[..., 0], idx

    def gamma_solver(self, index: int) -> "SupportSolver":
        return SupportSolver.build(self, index)


@dataclass(frozen=True)
class SupportSolver:
    """Linear map from vertex values to the hedge vector of one full support.

    Solves ``(xi_i - xi_s, gamma) = f_i - f_s`` on the support, written as a
    precomputed matrix so that many value rows can be processed at once.
    """

    support: tuple[int, ...]
    matrix: np.ndarray  # (d, k)

    @classmethod
    def build(cls, em: ExtremeMeasures, index: int) -> "SupportSolver":
        sup = em.supports[index]
        if len(sup) != em.dim + 1:
            raise DegeneracyError(f"support {sup} is lower-dimensional; hedge vector not unique")
        base, rest = sup[0], list(sup[1:])
        diffs = em.vectors[rest] - em.vectors[base]
        inv = np.linalg.inv(diffs)
        mat = np.zeros((em.dim, em.vectors.shape[0]))
        mat[:, rest] = inv
        mat[:, base] = -inv.sum(axis=1)
        return cls(support=sup, matrix=mat)

    def __call__(self, values) -> np.ndarray:
        return np.asarray(values, dtype=float) @ self.matrix.T


@dataclass
class VertexValuation:
    """Jump vectors with payoff values at their end points.

    ``value_fn(i, gamma)`` is the value at vertex ``i`` when it depends on
    the hedge vector (nonlinear case); ``values`` then holds its values at
    ``gamma = 0``.
    """

    vectors: np.ndarray
    values: np.ndarray
    value_fn: Callable[[int, np.ndarray], float] | None = None

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float)
        if self.vectors.ndim == 1:
            self.vectors = self.vectors[:, None]
        k, d = self.vectors.shape
        if self.value_fn is not None and (self.values is None or len(np.atleast_1d(self.values)) == 0):
            self.values = np.array([self.value_fn(i, np.zeros(d)) for i in range(k)])
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.shape[0] != k:
            raise ArgumentError(f"{k} jump vectors but {self.values.shape[0]} values")
        if k < d + 1:
            raise ArgumentError(f"need at least d+1={d + 1} jump vectors, got {k}")
        if np.any(np.linalg.norm(self.vectors, axis=1) == 0):
            raise ArgumentError("jump vectors must be non-vanishing")


@dataclass
class MinmaxResult:
    value: float
    gamma: np.ndarray
    active_measure: SimplexMeasure
    all_candidates: list[tuple[tuple[int, ...], float]]
    diagnostics: dict = field(default_factory=dict)


def _support_measure(em: ExtremeMeasures, index: int, gamma: np.ndarray) -> SimplexMeasure:
    sup = em.supports[index]
    return SimplexMeasure(indices=sup, weights=em.weights[index, list(sup)].copy(), gamma=gamma)


def dominance_gap(vectors, values, gamma, value, lower: bool = False) -> float:
    """Largest violation of ``f_r - (gamma, xi_r) <= value`` (``>=`` when lower)."""
    resid = np.asarray(values) - np.asarray(vectors) @ np.asarray(gamma)
    return float(np.max(resid - value)) if not lower else float(np.max(value - resid))


def hedge_from_lp(vectors, values, support, value, lower: bool = False) -> np.ndarray:
    """A hedge vector for a (possibly lower-dimensional) optimal support.

    Equalities on the support, dominance elsewhere; the smallest l1 norm
    among them is returned so the choice is deterministic.
    """
    arr = np.asarray(vectors, dtype=float)
    vals = np.asarray(values, dtype=float)
    k, d = arr.shape
    sup = list(support)
    off = [i for i in range(k) if i not in support]
    # gamma = plus - minus, both >= 0
    c = np.ones(2 * d)
    a_eq = np.hstack([arr[sup], -arr[sup]])
    b_eq = vals[sup] - value
    scale = 1.0 + float(np.max(np.abs(vals)))
    slack = 1e-11 * scale
    a_ub = b_ub = None
    if off:
        sign = -1.0 if not lower else 1.0
        # upper: (xi_r, gamma) >= f_r - value ; lower: (xi_r, gamma) <= f_r - value
        a_ub = sign * np.hstack([arr[off], -arr[off]])
        b_ub = sign * (vals[off] - value) + slack
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=[(0, None)] * (2 * d), method="highs")
    if res.status != 0:
        raise NumericError(f"hedge vector LP failed on support {tuple(support)}: {res.message}")
    return res.x[:d] - res.x[d:]


def _evaluate(v: VertexValuation, em: ExtremeMeasures, lower: bool) -> MinmaxResult:
    value, idx = em.select(v.values, lower=lower)
    value, idx = float(value), int(idx)
    ev = em.expectations(v.values)
    scale = 1.0 + float(np.max(np.abs(v.values)))
    route = "linear"
    if em.full[idx]:
        gamma = em.gamma_solver(idx)(v.values)
        if dominance_gap(v.vectors, v.values, gamma, value, lower) > 1e-9 * scale:
            route = "lp"
            gamma = hedge_from_lp(v.vectors, v.values, em.supports[idx], value, lower)
    else:
        route = "lp"
        gamma = hedge_from_lp(v.vectors, v.values, em.supports[idx], value, lower)
    return MinmaxResult(
        value=value,
        gamma=gamma,
        active_measure=_support_measure(em, idx, gamma),
        all_candidates=[(s, float(e)) for s, e in zip(em.supports, ev)],
        diagnostics={"n_candidates": len(em.supports), "degenerate": em.degenerate, "gamma_route": route},
    )


def upper_minmax(v: VertexValuation, measures: ExtremeMeasures | None = None,
                 allow_degenerate: bool = True) -> MinmaxResult:
    """``min_gamma max_i [f_i - (gamma, xi_i)]`` as the best extreme expectation.

    Raises
    ------
    UnboundedError
        The origin is not interior to the hull (value is minus infinity).
    DegeneracyError
        Some d vectors are dependent and ``allow_degenerate`` is False.
    """
    em = measures or ExtremeMeasures.from_vectors(v.vectors, allow_degenerate=allow_degenerate)
    return _evaluate(v, em, lower=False)


def lower_minmax(v: VertexValuation, measures: ExtremeMeasures | None = None,
                 allow_degenerate: bool = True) -> MinmaxResult:
    """``max_gamma min_i [f_i - (gamma, xi_i)]``: the smallest extreme expectation."""
    em = measures or ExtremeMeasures.from_vectors(v.vectors, allow_degenerate=allow_degenerate)
    return _evaluate(v, em, lower=True)


def _require_full(em: ExtremeMeasures, what: str) -> None:
    if em.degenerate:
        raise DegeneracyError(f"{what} needs a jump family in general position")


def costed_minmax(v: VertexValuation, g: Callable[[np.ndarray], float],
                  lipschitz: float | None = None,
                  measures: ExtremeMeasures | None = None) -> MinmaxResult:
    """Game value with an additive cost ``g(gamma)`` on the hedge vector.

    Each full support contributes ``E_I f + g(gamma_I)`` with the cost-free
    hedge vector ``gamma_I``.  When ``lipschitz`` is given it must stay below
    the half-space spread kappa1 of the family, which bounds every directional
    derivative of ``g`` as required.
    """
    em = measures or ExtremeMeasures.from_vectors(v.vectors)
    _require_full(em, "costed minmax")
    spread = None
    if lipschitz is not None:
        spread = spread_characteristics(v.vectors)
        if not lipschitz < spread.kappa1:
            raise PreconditionError(
                f"cost Lipschitz constant {lipschitz:.6g} must be below kappa1={spread.kappa1:.6g}"
            )
    ev = em.expectations(v.values)
    gammas = [em.gamma_solver(i)(v.values) for i in range(len(em.supports))]
    totals = np.array([e + float(g(gm)) for e, gm in zip(ev, gammas)])
    best = totals.max()
    idx = int(np.argmax(totals >= best - TIE_RTOL * (1.0 + abs(best))))
    return MinmaxResult(
        value=float(totals[idx]),
        gamma=gammas[idx],
        active_measure=_support_measure(em, idx, gammas[idx]),
        all_candidates=[(s, float(t)) for s, t in zip(em.supports, totals)],
        diagnostics={
            "n_candidates": len(em.supports),
            "cost_term": float(totals[idx] - ev[idx]),
            "kappa1": None if spread is None else spread.kappa1,
        },
    )


def support_fixed_point(solver: SupportSolver, value_fn: Callable[[int, np.ndarray], float],
                        k: int, start: np.ndarray, max_iter: int = 200,
                        tol: float = 1e-12) -> tuple[np.ndarray, list[float]]:
    """Iterate ``gamma <- solve(f(xi_i, gamma))`` on one support to its fixed point."""
    gamma = np.asarray(start, dtype=float).copy()
    history: list[float] = []
    idx = list(solver.support)
    vals = np.zeros(k)
    for _ in range(max_iter):
        for i in idx:
            vals[i] = value_fn(i, gamma)
        new = solver(vals)
        step = float(np.linalg.norm(new - gamma))
        history.append(step)
        gamma = new
        if step < tol * (1.0 + np.linalg.norm(gamma)):
            return gamma, history
    raise ConvergenceError(
        f"hedge fixed point on support {solver.support} not converged after {max_iter} iterations "
        f"(last step {history[-1]:.3e})"
    )


def nonlinear_minmax(v: VertexValuation, lipschitz: float | None = None,
                     measures: ExtremeMeasures | None = None, max_iter: int = 200) -> MinmaxResult:
    """Game value when vertex values depend on the hedge vector.

    For every full support the hedge vector is the fixed point of the
    support's linear solve; the value is the largest resulting expectation.
    ``lipschitz`` (in gamma) must stay below ``min(kappa1, kappa2)``.
    """
    if v.value_fn is None:
        raise ArgumentError("nonlinear_minmax needs a valuation with value_fn")
    em = measures or ExtremeMeasures.from_vectors(v.vectors)
    _require_full(em, "nonlinear minmax")
    k = v.vectors.shape[0]
    spread = None
    if lipschitz is not None:
        spread = spread_characteristics(v.vectors)
        bound = min(spread.kappa1, spread.kappa2)
        if not lipschitz < bound:
            raise PreconditionError(
                f"Lipschitz constant {lipschitz:.6g} in gamma must be below min(kappa1, kappa2)={bound:.6g}"
            )
    totals = np.empty(len(em.supports))
    gammas, histories = [], []
    for i in range(len(em.supports)):
        solver = em.gamma_solver(i)
        gamma, hist = support_fixed_point(solver, v.value_fn, k, solver(v.values), max_iter=max_iter)
        vals = np.array([v.value_fn(j, gamma) if em.weights[i, j] > 0 else 0.0 for j in range(k)])
        totals[i] = float(em.weights[i] @ vals)
        gammas.append(gamma)
        histories.append(hist)
    best = totals.max()
    idx = int(np.argmax(totals >= best - TIE_RTOL * (1.0 + abs(best))))
    return MinmaxResult(
        value=float(totals[idx]),
        gamma=gammas[idx],
        active_measure=_support_measure(em, idx, gammas[idx]),
        all_candidates=[(s, float(t)) for s, t in zip(em.supports, totals)],
        diagnostics={
            "n_candidates": len(em.supports),
            "residual_history": histories[idx],
            "iterations": len(histories[idx]),
        },
    )
