"""Hedging with transaction costs.

State at a node is ``(z, v)`` with ``v`` the position held before trading.
With capital measured at time ``m``,

    W_m(z, v) = (1/rho) max_Omega [ E_Omega W_{m+1}(xi * z, gamma_Omega) + g(gamma_Omega - v, z) ],

where ``gamma_Omega`` is the fixed point of the support's linear solve and
does not depend on ``v``.  Each node therefore stores, per extreme law, the
pair ``(A_Omega, gamma_Omega)`` with ``A_Omega = E_Omega W_{m+1}``, and
``W_m(z, .)`` is evaluated on demand for any ``v``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..errors import ConsistencyError, ConvergenceError, DegeneracyError, PreconditionError
from ..geometry import coordinate_ratio, spread_characteristics
from .engines import price_european
from .market import CostModel, HedgeResult, MarketSpec, check_z0, lattice_prices, vertex_bits


@dataclass(frozen=True)
class CostGate:
    """Spread of the unscaled vertex family and the largest admissible cost constant."""

    kappa1: float
    kappa2: float
    delta_n: float
    beta_max: float


def transaction_cost_gate(market: MarketSpec, z0) -> CostGate:
    """``beta_max = min(kappa1, kappa2) / (J * delta_n(z0))``.

    ``delta_n(z) = delta(z) * (max_j u_j / min_j d_j)**n`` bounds the
    coordinate ratio of every price reachable in ``n`` periods.
    """
    z0 = check_z0(z0, market.J)
    spread = spread_characteristics(market.centered(), allow_degenerate=True)
    delta_n = coordinate_ratio(z0) * (market.up.max() / market.down.min()) ** market.n
    beta_max = min(spread.kappa1, spread.kappa2) / (market.J * delta_n)
    return CostGate(kappa1=spread.kappa1, kappa2=spread.kappa2, delta_n=float(delta_n), beta_max=float(beta_max))


def _continuation(cost: CostModel, rho, nxt, child, gamma):
    """``W_{m+1}(child, gamma)`` for flat child indices and trial positions."""
    if nxt["terminal"] is not None:
        return nxt["terminal"][child]
    A = nxt["A"][child]  # (N, M)
    G = nxt["G"][child]  # (N, M, J)
    z = nxt["z"][child]  # (N, J)
    c = cost(G - gamma[:, None, :], z[:, None, :])
    return (A + c).max(axis=-1) / rho


def price_with_costs(payoff, z0, market: MarketSpec, cost: CostModel, v0=None, max_iter: int = 200,
                     tol: float = 1e-12, enforce_gate: bool = True) -> HedgeResult:
    """Upper hedge price with transaction costs ``g(gamma_m - gamma_{m-1}, S_{m-1})``.

    Parameters
    ----------
    v0 : array (J,), optional
        Stock position held before the first trade (default: none).
    enforce_gate : bool
        Refuse ``beta`` at or above the admissible bound.

    Raises
    ------
    PreconditionError
        ``beta`` violates the gate; the message reports ``beta_max``.
    ConvergenceError
        A hedge fixed point did not settle within ``max_iter`` iterations.
    """
    t0 = time.perf_counter()
    z0 = check_z0(z0, market.J)
    J, n, rho = market.J, market.n, market.rho
    v0 = np.zeros(J) if v0 is None else np.asarray(v0, dtype=float).reshape(J)
    gate = transaction_cost_gate(market, z0)
    if enforce_gate and cost.beta > 0 and not cost.beta < gate.beta_max:
        raise PreconditionError(
            f"cost constant beta={cost.beta:.6g} violates the gate; maximal admissible beta is "
            f"{gate.beta_max:.6g} (kappa1={gate.kappa1:.6g}, kappa2={gate.kappa2:.6g}, delta_n={gate.delta_n:.6g})"
        )
    em = market.measures()
    if em.degenerate:
        if cost.beta > 0:
            raise DegeneracyError("costed pricing needs vertex geometry in general position")
        res = price_european(payoff, z0, market)
        res.variant = "costed"
        res.metadata.update(gate=gate.__dict__, beta=0.0, frictionless_route=True)
        return res
    bits = vertex_bits(J)
    M = len(em.supports)
    solvers = np.stack([em.gamma_solver(i).matrix for i in range(M)])  # (M, J, K)
    weights = em.weights  # (M, K)
    supports = [list(s) for s in em.supports]
    terminal = np.asarray(payoff(lattice_prices(z0, market.down, market.up, n)), dtype=float).reshape(-1)
    nxt = {"terminal": terminal, "A": None, "G": None, "z": None}
    levels_A, levels_G = [None] * n, [None] * n
    iters = 0
    for m in range(n - 1, -1, -1):
        shape = (m + 1,) * J
        z = lattice_prices(z0, market.down, market.up, m).reshape(-1, J)
        N = z.shape[0]
        ks = np.stack(np.unravel_index(np.arange(N), shape), axis=-1)
        child = np.stack([np.ravel_multi_index(tuple((ks + b).T), (m + 2,) * J) for b in bits], axis=-1)
        A = np.empty((N, M))
        G = np.empty((N, M, J))
        for o in range(M):
            sup = supports[o]
            vals = np.zeros((N, len(bits)))
            for b in sup:
                vals[:, b] = _continuation(cost, rho, nxt, child[:, b], np.zeros((N, J)))
            gamma = (vals @ solvers[o].T) / z
            for it in range(max_iter):
                for b in sup:
                    vals[:, b] = _continuation(cost, rho, nxt, child[:, b], gamma)
                new = (vals @ solvers[o].T) / z
                step = np.linalg.norm(new - gamma, axis=-1)
                gamma = new
                iters = max(iters, it + 1)
                if np.all(step <= tol * (1.0 + np.linalg.norm(gamma, axis=-1))):
                    break
            else:
                worst = int(np.argmax(step))
                raise ConvergenceError(
                    f"hedge fixed point not converged at period {m}, z={z[worst].tolist()}, support {em.supports[o]} "
                    f"(last step {step[worst]:.3e}); beta is likely too large for a contraction"
                )
            for b in sup:
                vals[:, b] = _continuation(cost, rho, nxt, child[:, b], gamma)
            A[:, o] = vals @ weights[o]
            G[:, o] = gamma
        levels_A[m] = A.reshape(shape + (M,))
        levels_G[m] = G.reshape(shape + (M, J))
        nxt = {"terminal": None, "A": A, "G": G, "z": z}
    totals = levels_A[0].reshape(M) + cost(levels_G[0].reshape(M, J) - v0, z0)
    price = float(totals.max() / rho)
    meta = {
        "gate": gate.__dict__,
        "beta": cost.beta,
        "cost_model": cost.name,
        "v0": v0.tolist(),
        "max_fixed_point_iterations": iters,
        "seconds": time.perf_counter() - t0,
    }
    return HedgeResult(price=price, variant="costed", market=market, z0=z0, layout="costed",
                       values=[np.array(price)], supports=em.supports, metadata=meta,
                       state={"A": levels_A, "G": levels_G, "cost": cost, "v0": v0})


def price_fixed_costs(payoff, z0, market: MarketSpec, keep: float, rtol: float = 1e-10) -> HedgeResult:
    """Price when a fraction ``1 - keep`` of stock proceeds is lost every period.

    Computed directly on the jump family ``keep * xi - rho`` and, as a
    cross-check, as ``keep**-n`` times the frictionless price with bond factor
    ``rho / keep``.  The two must agree.
    """
    if not 0 < keep <= 1:
        raise PreconditionError(f"kept fraction must lie in (0, 1], got {keep}")
    direct = price_european(payoff, z0, market, trade_factor=keep)
    shifted = market.with_rho(market.rho / keep)
    rescaled = keep ** (-market.n) * price_european(payoff, z0, shifted, store_strategy=False).price
    if abs(direct.price - rescaled) > rtol * (1.0 + abs(rescaled)):
        raise ConsistencyError(f"fixed-cost routes disagree: direct {direct.price!r} vs rescaled {rescaled!r}")
    direct.variant = "fixed_costs"
    direct.metadata.update(keep=keep, rescaled_price=rescaled)
    return direct
