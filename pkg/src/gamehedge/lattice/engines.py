"""Backward induction engines.

Recombining lattices key nodes by up-count vectors ``k`` in ``{0..m}^J``;
the child of node ``k`` through vertex ``b`` is ``k + bits(b)``.  Path
dependent payoffs and period-dependent factors do not recombine and use the
full tree of ``(2**J)**n`` paths instead.
"""

from __future__ import annotations

import time
import warnings

import numpy as np

from ..errors import ArgumentError, InfeasibleError, PreconditionError, ResourceError
from ..minmax import VertexValuation, upper_minmax
from ..payoffs import PathPayoff, Payoff, terminal_path_payoff
from .market import HedgeResult, MarketSpec, check_z0, lattice_prices, vertex_bits
from .operator import VertexOperator

#: largest n * J handled by the path tree
TREE_BUDGET = 24
FAST_PATH_MODES = ("auto", "on", "off")


def _children(values: np.ndarray, bits: np.ndarray, m: int) -> np.ndarray:
    """Stack the values of the ``2**J`` children of every node of period ``m``."""
    slices = [values[tuple(slice(b, b + m + 1) for b in row)] for row in bits]
    return np.stack(slices, axis=-1)


def _fast_weights(payoff, market: MarketSpec, fast_path: str):
    """Closed-form vertex weights for sub-modular payoffs, or None."""
    from .. import submodular

    if fast_path not in FAST_PATH_MODES:
        raise ArgumentError(f"fast_path must be one of {FAST_PATH_MODES}, got {fast_path!r}")
    if fast_path == "off":
        return None
    reason = None
    if not getattr(payoff, "submodular", None) or not getattr(payoff, "convex", None):
        reason = "payoff is not declared convex and sub-modular"
    elif market.time_dependent:
        reason = "period-dependent factors"
    else:
        weights = submodular.iterable_vertex_weights(market)
        if weights is None:
            reason = f"no iterable closed form for J={market.J} with these factors"
        else:
            return weights
    if fast_path == "on":
        raise PreconditionError(f"sub-modular fast path unavailable: {reason}")
    warnings.warn(f"sub-modular fast path disabled: {reason}", stacklevel=3)
    return None


def _match_support(op: VertexOperator, weights: np.ndarray) -> int:
    em = op.measures
    diff = np.abs(em.weights - weights).max(axis=1)
    idx = int(np.argmin(diff))
    if diff[idx] > 1e-9:
        raise PreconditionError("closed-form law is not an extreme law of this market")
    return idx


def _lattice(payoff, z0, market: MarketSpec, mode: str, store: bool, fast_path: str = "off",
             trade_factor: float = 1.0) -> HedgeResult:
    t0 = time.perf_counter()
    J, n, rho = market.J, market.n, market.rho
    bits = vertex_bits(J)
    op = VertexOperator.for_market(market, 0, trade_factor)
    fast = _fast_weights(payoff, market, fast_path) if mode == "upper" and trade_factor == 1.0 else None
    if mode != "upper" and fast_path == "on":
        raise PreconditionError("the sub-modular fast path only covers upper European prices")
    fast_idx = _match_support(op, fast) if fast is not None else None
    value = np.asarray(payoff(lattice_prices(z0, market.down, market.up, n)), dtype=float)
    values = [None] * (n + 1)
    values[n] = value
    gammas = [None] * n if store else None
    active = [None] * n if store else None
    exercise = [None] * (n + 1) if mode == "american" else None
    if exercise is not None:
        exercise[n] = np.ones(value.shape, dtype=bool)
    for m in range(n - 1, -1, -1):
        child = _children(value, bits, m)
        z = lattice_prices(z0, market.down, market.up, m)
        if fast is not None:
            best = child @ fast
            idx = np.full(best.shape, fast_idx)
            g = op._hedges(child, best, idx, z, False) if store else None
        else:
            res = op.apply(child, z, lower=(mode == "lower"), with_gamma=store)
            best, idx, g = res.values, res.active, res.gammas
        cont = best / rho
        if mode == "american":
            now = np.asarray(payoff(z), dtype=float)
            tol = 1e-12 * (1.0 + np.abs(cont))
            exercise[m] = now > cont + tol
            value = np.maximum(now, cont)
        else:
            value = cont
        values[m] = value
        if store:
            gammas[m], active[m] = g, idx
    meta = {
        "nodes": int(sum((m + 1) ** J for m in range(n + 1))),
        "n_candidates": len(op.measures.supports),
        "degenerate_geometry": op.measures.degenerate,
        "fast_path": fast is not None,
        "seconds": time.perf_counter() - t0,
    }
    if isinstance(payoff, Payoff) and payoff.convex is not True:
        meta["warning"] = "payoff not declared convex; price is for the finite-jump (vertex) model"
    return HedgeResult(price=float(np.ravel(values[0])[0]), variant={"upper": "european"}.get(mode, mode), market=market,
                       z0=np.asarray(z0, dtype=float), values=values, gammas=gammas, active=active,
                       exercise=exercise, supports=op.measures.supports, trade_factor=trade_factor,
                       metadata=meta)


def price_european(payoff, z0, market: MarketSpec, fast_path: str = "off", store_strategy: bool = True,
                   trade_factor: float = 1.0) -> HedgeResult:
    """Upper hedge price ``rho**-n (B**n f)(z0)`` of a European payoff.

    Parameters
    ----------
    payoff : callable
        Vectorized terminal payoff.
    fast_path : {"auto", "on", "off"}
        Use the sub-modular closed form when it applies (``on`` insists).
    store_strategy : bool
        Keep hedge vectors for every node.
    trade_factor : float
        Fraction of stock proceeds kept after each period (1 means frictionless).
    """
    z0 = check_z0(z0, market.J)
    if market.jump_maps is not None:
        return price_nonlinear_jumps(payoff, z0, market)
    if market.time_dependent:
        if fast_path == "on":
            raise PreconditionError("sub-modular fast path unavailable: period-dependent factors")
        return price_path_dependent(terminal_path_payoff(payoff), z0, market, store_strategy=store_strategy,
                                    trade_factor=trade_factor)
    return _lattice(payoff, z0, market, "upper", store_strategy, fast_path, trade_factor)


def price_lower(payoff, z0, market: MarketSpec, store_strategy: bool = True) -> HedgeResult:
    """Lower hedge price: the same recursion with the smallest extreme expectation."""
    z0 = check_z0(z0, market.J)
    if market.time_dependent:
        return price_path_dependent(terminal_path_payoff(payoff), z0, market, store_strategy=store_strategy,
                                    lower=True)
    return _lattice(payoff, z0, market, "lower", store_strategy)


def price_american(payoff, z0, market: MarketSpec, store_strategy: bool = True) -> HedgeResult:
    """Upper price of an option exercisable at any period.

    ``V_m = max(f(z), (B V_{m+1})(z) / rho)``; ``exercise[m]`` flags nodes
    where immediate exercise is strictly better than holding.
    """
    z0 = check_z0(z0, market.J)
    if market.time_dependent:
        raise ArgumentError("American pricing needs period-independent factors")
    return _lattice(payoff, z0, market, "american", store_strategy)


def price_interval(payoff, z0, market: MarketSpec, store_strategy: bool = False) -> dict:
    """Upper and lower prices and their gap (intrinsic risk)."""
    up = price_european(payoff, z0, market, store_strategy=store_strategy)
    lo = price_lower(payoff, z0, market, store_strategy=store_strategy)
    return {"upper": up.price, "lower": lo.price, "intrinsic_risk": up.price - lo.price,
            "upper_result": up, "lower_result": lo}


def _tree_prices(z0, market: MarketSpec) -> list[np.ndarray]:
    levels = [np.asarray(z0, dtype=float)[None, :]]
    for m in range(market.n):
        verts = market.vertices(m)
        levels.append((levels[-1][:, None, :] * verts[None, :, :]).reshape(-1, market.J))
    return levels


def price_path_dependent(payoff: PathPayoff, z0, market: MarketSpec, budget: int = TREE_BUDGET,
                         store_strategy: bool = True, lower: bool = False, trade_factor: float = 1.0,
                         chunk: int = 1 << 16) -> HedgeResult:
    """Upper (or lower) price of a path payoff over the full vertex tree.

    Node ``i`` of period ``m`` has children ``i * 2**J + b``.
    """
    t0 = time.perf_counter()
    z0 = check_z0(z0, market.J)
    J, n, rho = market.J, market.n, market.rho
    if n * J > budget:
        raise ResourceError(f"path tree needs (2**{J})**{n} leaves; n*J={n * J} exceeds the budget {budget}")
    if not isinstance(payoff, PathPayoff):
        payoff = PathPayoff("path", payoff)
    K = 2 ** J
    prices = _tree_prices(z0, market)
    n_leaves = K ** n
    value = np.empty(n_leaves)
    for start in range(0, n_leaves, chunk):
        leaves = np.arange(start, min(start + chunk, n_leaves))
        paths = np.stack([prices[m][leaves // K ** (n - m)] for m in range(n + 1)], axis=1)
        value[leaves] = payoff(paths)
    values = [None] * (n + 1)
    values[n] = value
    gammas = [None] * n if store_strategy else None
    active = [None] * n if store_strategy else None
    n_cand = 0
    for m in range(n - 1, -1, -1):
        op = VertexOperator.for_market(market, m, trade_factor)
        n_cand = max(n_cand, len(op.measures.supports))
        child = value.reshape(-1, K)
        res = op.apply(child, prices[m], lower=lower, with_gamma=store_strategy)
        value = res.values / rho
        values[m] = value
        if store_strategy:
            gammas[m], active[m] = res.gammas, res.active
    meta = {"nodes": int(sum(K ** m for m in range(n + 1))), "n_candidates": n_cand,
            "seconds": time.perf_counter() - t0}
    return HedgeResult(price=float(values[0][0]), variant="path_dependent_lower" if lower else "path_dependent",
                       market=market, z0=z0, layout="tree", values=values, gammas=gammas, active=active,
                       trade_factor=trade_factor, metadata=meta)


def _node_key(z: np.ndarray) -> tuple:
    return tuple(float(f"{x:.12e}") for x in z)


def price_nonlinear_jumps(payoff, z0, market: MarketSpec, store_strategy: bool = True) -> HedgeResult:
    """Upper price when jumps are given by maps ``z -> g_i(z)``.

    Nodes are merged when their prices agree to 12 significant digits.
    Every node solves its own minmax over ``g_i(z) - rho z``.
    """
    t0 = time.perf_counter()
    z0 = check_z0(z0, market.J)
    maps = market.jump_maps
    if maps is None:
        raise ArgumentError("market has no jump maps")
    n, rho = market.n, market.rho
    levels = [z0[None, :]]
    links = []
    for m in range(n):
        index: dict[tuple, int] = {}
        nxt: list[np.ndarray] = []
        link = np.empty((levels[-1].shape[0], len(maps)), dtype=int)
        for a, z in enumerate(levels[-1]):
            for i, g in enumerate(maps):
                w = np.asarray(g(z), dtype=float)
                if w.shape != z.shape or np.any(w <= 0) or np.any(~np.isfinite(w)):
                    raise InfeasibleError(f"jump map {i} leaves the positive orthant at period {m}, z={z.tolist()}")
                key = _node_key(w)
                if key not in index:
                    index[key] = len(nxt)
                    nxt.append(w)
                link[a, i] = index[key]
        levels.append(np.array(nxt))
        links.append(link)
    value = np.asarray(payoff(levels[n]), dtype=float)
    values = [None] * (n + 1)
    values[n] = value
    gammas = [None] * n if store_strategy else None
    for m in range(n - 1, -1, -1):
        out = np.empty(levels[m].shape[0])
        gam = np.empty_like(levels[m])
        for a, z in enumerate(levels[m]):
            vecs = levels[m + 1][links[m][a]] - rho * z
            try:
                res = upper_minmax(VertexValuation(vecs, value[links[m][a]]))
            except InfeasibleError as exc:
                raise InfeasibleError(f"jump family not complete at period {m}, z={z.tolist()}: {exc}") from exc
            out[a] = res.value / rho
            gam[a] = res.gamma
        value = out
        values[m] = value
        if store_strategy:
            gammas[m] = gam
    meta = {"nodes": int(sum(len(lv) for lv in levels)), "seconds": time.perf_counter() - t0}
    return HedgeResult(price=float(values[0][0]), variant="nonlinear_jumps", market=market, z0=z0,
                       layout="nodes", values=values, gammas=gammas, metadata=meta,
                       state={"levels": levels, "links": links})

