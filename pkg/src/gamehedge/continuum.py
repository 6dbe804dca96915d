"""Continuous-time limits of the interval-market hedge prices.

With ``u_i = 1 + sigma_i sqrt(tau)``, ``d_i = 1 - sigma_i sqrt(tau)`` and
``rho = 1 + r tau`` the upper price of a J=2 convex sub-modular payoff solves
a degenerate Black-Scholes equation whose diffusion is driven by a single
Brownian motion with opposite signs on the two assets; the lower price uses
the same sign.  Their transition kernels are concentrated on a line in
log-price space, so each price is a one-dimensional Gaussian integral:

    f(t, z) = e^{-r s} E f_T(z_1 e^{(r - sigma_1^2/2) s + sigma_1 sqrt(s) X},
                             z_2 e^{(r - sigma_2^2/2) s -/+ sigma_2 sqrt(s) X}),

``s = T - t`` and ``X`` standard normal.  The kernel mass is ``e^{-r s}``
and discounted prices are martingales.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import ArgumentError, NumericError, PreconditionError, ValidationError
from .lattice.engines import price_european
from .lattice.market import MarketSpec

#: standard-normal integration range; the tail mass beyond is below 1e-32
TAIL = 12.0


@dataclass(frozen=True)
class ContinuumSpec:
    """Volatilities, rate, maturity and jump-size exponent of the limit.

    Attributes
    ----------
    sigma : (J,) array
        Volatilities; ``u_i = 1 + sigma_i sqrt(tau)``.
    r : float
        Continuous rate; ``rho = 1 + r tau``.
    T : float
        Maturity.
    alpha : float
        Jumps scale like ``tau**alpha``; ``1/2`` is the diffusive regime.
    """

    sigma: np.ndarray
    r: float
    T: float
    alpha: float = 0.5

    def __post_init__(self):
        sig = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        object.__setattr__(self, "sigma", sig)
        if sig.ndim != 1 or sig.size == 0 or np.any(sig <= 0) or np.any(~np.isfinite(sig)):
            raise ValidationError(f"volatilities must be positive, got {sig.tolist()}")
        if not np.isfinite(self.r) or self.r < 0:
            raise ValidationError(f"rate must be non-negative, got {self.r}")
        if not self.T > 0:
            raise ValidationError(f"maturity must be positive, got {self.T}")
        if not 0.5 <= self.alpha <= 1.0:
            raise ValidationError(f"jump exponent alpha must lie in [1/2, 1], got {self.alpha}")

    @property
    def J(self) -> int:
        return self.sigma.size

    def market(self, n: int) -> MarketSpec:
        """Discrete market with ``n`` periods of length ``T/n`` (diffusive scaling)."""
        tau = self.T / n
        step = self.sigma * np.sqrt(tau)
        if np.any(step >= 1):
            raise ArgumentError(f"n={n} gives non-positive down factors; use more periods")
        return MarketSpec(1.0 - step, 1.0 + step, 1.0 + self.r * tau, n)


@dataclass(frozen=True)
class GreenFunctionQuery:
    """Price request for the J=2 degenerate equations.

    ``which`` is ``"upper"`` (assets driven in opposite directions) or
    ``"lower"`` (same direction).
    """

    which: str
    t: float
    z: np.ndarray
    payoff: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def __post_init__(self):
        if self.which not in ("upper", "lower"):
            raise ArgumentError(f"which must be 'upper' or 'lower', got {self.which!r}")
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float))


def _time_left(spec: ContinuumSpec, t: float) -> float:
    s = spec.T - float(t)
    if not 0 < s <= spec.T:
        raise ArgumentError(f"time t={t} must satisfy 0 <= t < T={spec.T}")
    return s


def first_order_price(payoff, z, t: float, spec: ContinuumSpec) -> np.ndarray:
    """Solution ``e^{-r s} f_T(e^{r s} z)`` of the first-order limit (``alpha > 1/2``)."""
    if not spec.alpha > 0.5:
        raise PreconditionError("the first-order limit needs alpha > 1/2")
    s = spec.T - float(t)
    if s < 0:
        raise ArgumentError(f"time t={t} is past maturity {spec.T}")
    z = np.asarray(z, dtype=float)
    return np.exp(-spec.r * s) * np.asarray(payoff(np.exp(spec.r * s) * z), dtype=float)


def _terminal_points(z, x, spec: ContinuumSpec, s: float, signs: Sequence[float]):
    """Terminal prices for standard-normal draws ``x``; shapes broadcast as ``z[..., None, :]``."""
    drift = (spec.r - 0.5 * spec.sigma ** 2) * s
    shock = np.asarray(signs) * spec.sigma * np.sqrt(s)
    return z[..., None, :] * np.exp(drift + shock * np.asarray(x)[..., None])


def lognormal_line_price(payoff, z, s: float, spec: ContinuumSpec, signs, epsrel: float = 1e-10,
                         epsabs: float = 1e-13) -> np.ndarray:
    """``e^{-r s} E f(z e^{(r - sigma^2/2) s + signs * sigma sqrt(s) X})`` by adaptive quadrature.

    ``z`` may carry leading axes; all points are integrated together.
    """
    z = np.asarray(z, dtype=float)
    lead = z.shape[:-1]
    flat = z.reshape(-1, z.shape[-1])

    def integrand(x):
        pts = _terminal_points(flat, np.array([x]), spec, s, signs)[:, 0, :]
        return np.asarray(payoff(pts), dtype=float) * np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi)

    val, err = integrate.quad_vec(integrand, -TAIL, TAIL, epsrel=epsrel, epsabs=epsabs, limit=2000)
    scale = np.maximum(np.abs(val), 1.0)
    if np.any(err > 1e-6 * scale):
        raise NumericError(f"quadrature did not converge (error estimate {np.max(err):.3e})")
    return (np.exp(-spec.r * s) * val).reshape(lead)


def green_price(q: GreenFunctionQuery, spec: ContinuumSpec, epsrel: float = 1e-10) -> np.ndarray:
    """Upper or lower continuum price of a J=2 payoff.

    The kernel's delta factor pins one combination of log-prices; the
    surviving direction is integrated against the standard normal density.
    """
    if spec.J != 2:
        raise ArgumentError("green_price needs two assets")
    s = _time_left(spec, q.t)
    signs = (1.0, -1.0) if q.which == "upper" else (1.0, 1.0)
    return lognormal_line_price(q.payoff, q.z, s, spec, signs, epsrel=epsrel)


def complete_market_price(payoff, z, t: float, spec: ContinuumSpec, epsrel: float = 1e-9) -> np.ndarray:
    """Black-Scholes price with independent Brownian motions (J=2), nested adaptive quadrature."""
    if spec.J != 2:
        raise ArgumentError("complete_market_price needs two assets")
    s = _time_left(spec, t)
    z = np.asarray(z, dtype=float)
    lead = z.shape[:-1]
    flat = z.reshape(-1, 2)
    drift = (spec.r - 0.5 * spec.sigma ** 2) * s
    vol = spec.sigma * np.sqrt(s)
    dens = lambda x: np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi)  # noqa: E731

    def inner(x1):
        z1 = flat[:, 0] * np.exp(drift[0] + vol[0] * x1)

        def f2(x2):
            z2 = flat[:, 1] * np.exp(drift[1] + vol[1] * x2)
            return np.asarray(payoff(np.stack([z1, z2], axis=-1)), dtype=float) * dens(x2)

        return integrate.quad_vec(f2, -TAIL, TAIL, epsrel=epsrel, epsabs=1e-13, limit=2000)[0] * dens(x1)

    val, err = integrate.quad_vec(inner, -TAIL, TAIL, epsrel=epsrel, epsabs=1e-12, limit=2000)
    if np.any(err > 1e-6 * np.maximum(np.abs(val), 1.0)):
        raise NumericError(f"quadrature did not converge (error estimate {np.max(err):.3e})")
    return (np.exp(-spec.r * s) * val).reshape(lead)


def black_scholes_price(payoff, z, t: float, spec: ContinuumSpec) -> np.ndarray:
    """One-asset Black-Scholes price by quadrature (the J=1 limit)."""
    if spec.J != 1:
        raise ArgumentError("black_scholes_price needs one asset")
    return lognormal_line_price(payoff, z, _time_left(spec, t), spec, (1.0,))


# ---------------------------------------------------------------------------
# nonlinear limit equation on a log-price grid


def limit_laws(spec: ContinuumSpec, s0: float = 1e-4):
    """Limits of the extreme vertex laws as ``tau -> 0``.

    Weights are evaluated at ``sqrt(tau) = s0`` and ``2 s0`` and linearly
    extrapolated to zero; only supports present at both scales are kept.
    Returns a list of ``(signs (k, J), weights (k,))`` with ``signs`` the
    up(+1)/down(-1) pattern of every support vertex.
    """
    J = spec.J
    out = {}
    for factor in (1.0, 2.0):
        s = factor * s0
        m = MarketSpec(1.0 - spec.sigma * s, 1.0 + spec.sigma * s, 1.0 + spec.r * s * s, 1)
        em = m.measures()
        bits = 2 * ((np.arange(2 ** J)[:, None] >> np.arange(J)) & 1) - 1
        for sup, w in zip(em.supports, em.weights):
            out.setdefault(sup, {})[factor] = (bits[list(sup)], w[list(sup)])
    laws = []
    for sup, byscale in sorted(out.items()):
        if len(byscale) == 2:
            signs, w1 = byscale[1.0]
            _, w2 = byscale[2.0]
            w0 = np.clip(2.0 * w1 - w2, 0.0, None)
            laws.append((signs, w0 / w0.sum()))
    if not laws:
        raise NumericError("no extreme law persists in the small-step limit")
    return laws


def limit_covariances(spec: ContinuumSpec) -> np.ndarray:
    """Candidate matrices ``C_jk = sigma_j sigma_k sum_i p_i s_ij s_ik`` of the limit laws."""
    mats = []
    for signs, w in limit_laws(spec):
        c = np.einsum("i,ij,ik->jk", w, signs, signs) * np.outer(spec.sigma, spec.sigma)
        mats.append(c)
    return np.unique(np.round(np.array(mats), 12), axis=0)


@dataclass
class LogGrid:
    """Uniform grid in ``y = log z`` per asset."""

    axes: list[np.ndarray]

    @classmethod
    def around(cls, z0, width: float, points: int) -> "LogGrid":
        z0 = np.atleast_1d(np.asarray(z0, dtype=float))
        return cls([np.linspace(np.log(z) - width, np.log(z) + width, points) for z in z0])

    @property
    def steps(self) -> np.ndarray:
        return np.array([a[1] - a[0] for a in self.axes])

    def prices(self) -> np.ndarray:
        mesh = np.meshgrid(*[np.exp(a) for a in self.axes], indexing="ij")
        return np.stack(mesh, axis=-1)


def _d1(f, axis, h, forward):
    out = np.zeros_like(f)
    sl = [slice(1, -1)] * f.ndim
    hi, lo = list(sl), list(sl)
    if forward:
        hi[axis] = slice(2, None)
        lo[axis] = slice(1, -1)
    else:
        hi[axis] = slice(1, -1)
        lo[axis] = slice(0, -2)
    out[tuple(sl)] = (f[tuple(hi)] - f[tuple(lo)]) / h
    return out


def _d2(f, axis, h):
    out = np.zeros_like(f)
    sl = [slice(1, -1)] * f.ndim
    up, dn = list(sl), list(sl)
    up[axis], dn[axis] = slice(2, None), slice(0, -2)
    out[tuple(sl)] = (f[tuple(up)] - 2 * f[tuple(sl)] + f[tuple(dn)]) / h ** 2
    return out


def _dmixed(f, h1, h2):
    out = np.zeros_like(f)
    out[1:-1, 1:-1] = (f[2:, 2:] - f[2:, :-2] - f[:-2, 2:] + f[:-2, :-2]) / (4 * h1 * h2)
    return out


def _extrapolate_edges(f):
    for axis in range(f.ndim):
        f = np.moveaxis(f, axis, 0)
        f[0] = 2 * f[1] - f[2]
        f[-1] = 2 * f[-2] - f[-3]
        f = np.moveaxis(f, 0, axis)
    return f


def stable_time_step(grid: LogGrid, spec: ContinuumSpec) -> float:
    """Largest explicit step: ``0.4 * min(dy)**2 / max(sigma)**2``."""
    return 0.4 * float(np.min(grid.steps)) ** 2 / float(np.max(spec.sigma)) ** 2


def nonlinear_pde_step(f, grid: LogGrid, spec: ContinuumSpec, dt: float, lower: bool = False,
                       covariances: np.ndarray | None = None) -> np.ndarray:
    """One explicit backward step of ``r f = f_t + r z f_z + 1/2 max_I tr(C_I z z f_zz)``.

    In log-prices the drift is ``r - sigma_j^2/2`` (upwinded), second
    differences are central and the mixed term is maximized (minimized when
    ``lower``) over the limit laws node by node.  Edge values are linearly
    extrapolated.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim != spec.J or f.ndim != len(grid.axes):
        raise ArgumentError("grid dimension must equal the number of assets")
    if dt > stable_time_step(grid, spec) * (1 + 1e-12):
        raise ValidationError(f"time step {dt:.3e} exceeds the explicit stability bound {stable_time_step(grid, spec):.3e}")
    h = grid.steps
    cov = limit_covariances(spec) if covariances is None else covariances
    gen = -spec.r * f
    for j in range(spec.J):
        b = spec.r - 0.5 * spec.sigma[j] ** 2
        gen = gen + b * _d1(f, j, h[j], forward=b >= 0)
        gen = gen + 0.5 * spec.sigma[j] ** 2 * _d2(f, j, h[j])
    if spec.J == 2:
        fxy = _dmixed(f, h[0], h[1])
        cands = np.stack([c[0, 1] * fxy for c in cov])
        gen = gen + (cands.min(axis=0) if lower else cands.max(axis=0))
    elif spec.J > 2:
        raise ArgumentError("the grid solver covers one or two assets")
    out = f + dt * gen
    return _extrapolate_edges(out)


def solve_pde(payoff, spec: ContinuumSpec, grid: LogGrid, t: float = 0.0, lower: bool = False,
              dt: float | None = None) -> np.ndarray:
    """March the limit equation from ``T`` back to ``t`` on ``grid``."""
    s = _time_left(spec, t)
    dt_max = stable_time_step(grid, spec)
    steps = int(np.ceil(s / (dt if dt else dt_max)))
    step = s / steps
    cov = limit_covariances(spec)
    f = np.asarray(payoff(grid.prices()), dtype=float)
    for _ in range(steps):
        f = nonlinear_pde_step(f, grid, spec, step, lower=lower, covariances=cov)
    return f


# ---------------------------------------------------------------------------
# transaction costs with tau-sized jumps


def duhamel_cost_price(payoff, z, t: float, spec: ContinuumSpec, source=None, epsrel: float = 1e-12) -> float:
    """``e^{-r s} f_T(e^{r s} z) + int_t^T e^{-r(u-t)} psi(e^{r(u-t)} z) du``.

    ``source`` is the cost term ``psi`` (see :func:`cost_source`); ``None``
    means no costs.
    """
    if spec.alpha != 1.0:
        raise PreconditionError("the cost limit is only available for alpha = 1")
    z = np.asarray(z, dtype=float)
    base = float(np.asarray(first_order_price(payoff, z, t, spec)))
    if source is None:
        return base
    s = spec.T - float(t)
    val, err = integrate.quad(lambda u: np.exp(-spec.r * u) * float(source(np.exp(spec.r * u) * z)), 0.0, s,
                              epsrel=epsrel, epsabs=1e-14, limit=200)
    return base + val


def cost_source(grad_g: Callable, gamma_field: Callable, jump_fields: Sequence[Callable],
                laws: Sequence[tuple[Sequence[int], Sequence[float]]], h: float = 1e-6) -> Callable:
    """Build ``psi(z) = max_I sum_i p_i sum_{m,j} dg/dgamma_m(gamma(z)) dgamma_m/dz_j phi_i^j(z)``.

    ``gamma_field`` is differentiated by central differences with relative
    step ``h``; ``laws`` lists ``(vertex indices, weights)`` into ``jump_fields``.
    """

    def psi(z):
        z = np.asarray(z, dtype=float)
        J = z.size
        jac = np.empty((J, J))
        for j in range(J):
            e = np.zeros(J)
            e[j] = h * max(abs(z[j]), 1.0)
            jac[:, j] = (np.asarray(gamma_field(z + e)) - np.asarray(gamma_field(z - e))) / (2 * e[j])
        grad = np.asarray(grad_g(np.asarray(gamma_field(z))), dtype=float)
        row = grad @ jac
        best = -np.inf
        for idx, w in laws:
            val = sum(wi * float(row @ np.asarray(jump_fields[i](z))) for i, wi in zip(idx, w))
            best = max(best, val)
        return best

    return psi


# ---------------------------------------------------------------------------
# discrete-to-continuum comparison


@dataclass
class ConvergenceRow:
    n: int
    tau: float
    discrete: float
    continuum: float

    @property
    def error(self) -> float:
        return abs(self.discrete - self.continuum)


@dataclass
class ConvergenceReport:
    rows: list[ConvergenceRow]
    orders: list[float]
    seconds: float

    @property
    def monotone(self) -> bool:
        errs = [r.error for r in self.rows]
        return all(b < a for a, b in zip(errs, errs[1:]))


def convergence_harness(payoff, z0, spec: ContinuumSpec, ns: Sequence[int], fast_path: str = "off") -> ConvergenceReport:
    """Compare lattice prices with ``u = 1 + sigma sqrt(tau)`` to the continuum price.

    Empirical orders are ``log2(e_k / e_{k+1}) / log2(n_{k+1} / n_k)``.
    """
    t0 = time.perf_counter()
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    if spec.J == 1:
        cont = float(black_scholes_price(payoff, z0, 0.0, spec))
    elif spec.J == 2:
        cont = float(green_price(GreenFunctionQuery("upper", 0.0, z0, payoff), spec))
    else:
        raise ArgumentError("the harness covers one or two assets")
    rows = []
    for n in ns:
        market = spec.market(int(n))
        disc = price_european(payoff, z0, market, fast_path=fast_path, store_strategy=False).price
        rows.append(ConvergenceRow(n=int(n), tau=spec.T / n, discrete=disc, continuum=cont))
    orders = []
    for a, b in zip(rows, rows[1:]):
        if a.error > 0 and b.error > 0:
            orders.append(float(np.log(a.error / b.error) / np.log(b.n / a.n)))
        else:
            orders.append(float("nan"))
    return ConvergenceReport(rows=rows, orders=orders, seconds=time.perf_counter() - t0)
