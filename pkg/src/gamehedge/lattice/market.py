"""Market descriptions, cost models and pricing results."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from ..errors import ArgumentError, ValidationError
from ..minmax import ExtremeMeasures


def vertex_bits(n_assets: int) -> np.ndarray:
    """``(2**J, J)`` array of up(1)/down(0) flags; vertex ``b`` has bit ``j`` of ``b`` for asset ``j``."""
    b = np.arange(2 ** n_assets)
    return ((b[:, None] >> np.arange(n_assets)[None, :]) & 1).astype(int)


@dataclass(frozen=True, eq=False)
class MarketSpec:
    """Interval market with ``J`` assets and ``n`` trading periods.

    Attributes
    ----------
    down, up : (J,) arrays
        Per-period price-relative bounds ``d_j < rho < u_j``.
    rho : float
        Per-period bond growth factor.
    n : int
        Number of periods.
    down_steps, up_steps : (n, J) arrays, optional
        Period-dependent bounds; when given they replace ``down``/``up``.
    jump_maps : sequence of callables, optional
        Maps ``z -> z'`` replacing the multiplicative vertex jumps.
    """

    down: np.ndarray
    up: np.ndarray
    rho: float
    n: int
    down_steps: np.ndarray | None = None
    up_steps: np.ndarray | None = None
    jump_maps: tuple[Callable[[np.ndarray], np.ndarray], ...] | None = None

    def __post_init__(self):
        down = np.atleast_1d(np.asarray(self.down, dtype=float))
        up = np.atleast_1d(np.asarray(self.up, dtype=float))
        object.__setattr__(self, "down", down)
        object.__setattr__(self, "up", up)
        object.__setattr__(self, "rho", float(self.rho))
        if int(self.n) != self.n or self.n < 0:
            raise ValidationError(f"n must be a non-negative integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        if down.shape != up.shape or down.ndim != 1 or down.size == 0:
            raise ValidationError("down and up must be non-empty vectors of equal length")
        if not np.isfinite(self.rho) or self.rho <= 0:
            raise ValidationError(f"rho must be positive, got {self.rho}")
        self._check_bounds(down, up, "")
        if (self.down_steps is None) != (self.up_steps is None):
            raise ValidationError("down_steps and up_steps must be given together")
        if self.down_steps is not None:
            ds = np.asarray(self.down_steps, dtype=float).reshape(-1, down.size)
            us = np.asarray(self.up_steps, dtype=float).reshape(-1, down.size)
            if ds.shape[0] != self.n or us.shape[0] != self.n:
                raise ValidationError(f"period-dependent bounds need {self.n} rows")
            for m in range(self.n):
                self._check_bounds(ds[m], us[m], f" at period {m}")
            object.__setattr__(self, "down_steps", ds)
            object.__setattr__(self, "up_steps", us)
        if self.jump_maps is not None:
            maps = tuple(self.jump_maps)
            if len(maps) < down.size + 1:
                raise ValidationError(f"need at least J+1={down.size + 1} jump maps, got {len(maps)}")
            object.__setattr__(self, "jump_maps", maps)

    def _check_bounds(self, down, up, where):
        if np.any(~np.isfinite(down)) or np.any(~np.isfinite(up)):
            raise ValidationError(f"jump factors must be finite{where}")
        if np.any(down <= 0):
            raise ValidationError(f"requires d_j > 0{where}: d={down.tolist()}")
        if np.any(down >= self.rho):
            raise ValidationError(f"requires d_j < rho{where}: d={down.tolist()}, rho={self.rho}")
        if np.any(up <= self.rho):
            raise ValidationError(f"requires u_j > rho{where}: u={up.tolist()}, rho={self.rho}")

    @property
    def J(self) -> int:
        return self.down.size

    @property
    def time_dependent(self) -> bool:
        return self.down_steps is not None

    def bounds(self, step: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """``(down, up)`` of period ``step`` (0-based)."""
        if self.time_dependent:
            return self.down_steps[step], self.up_steps[step]
        return self.down, self.up

    def vertices(self, step: int = 0) -> np.ndarray:
        """``(2**J, J)`` price-relative vertices of the jump box."""
        lo, hi = self.bounds(step)
        bits = vertex_bits(self.J)
        return np.where(bits == 1, hi, lo)

    def centered(self, step: int = 0, trade_factor: float = 1.0) -> np.ndarray:
        """Unscaled centered jump vectors ``trade_factor * xi - rho``."""
        return trade_factor * self.vertices(step) - self.rho

    @cached_property
    def _measure_cache(self) -> dict:
        return {}

    def measures(self, step: int = 0, trade_factor: float = 1.0) -> ExtremeMeasures:
        """Extreme risk-neutral laws of the vertex family (cached).

        They are invariant under coordinate-wise scaling by the price, so
        one enumeration serves every node of a period.
        """
        lo, hi = self.bounds(step)
        key = (tuple(lo), tuple(hi), float(trade_factor))
        cache = self._measure_cache
        if key not in cache:
            cache[key] = ExtremeMeasures.from_vectors(self.centered(step, trade_factor))
        return cache[key]

    def with_steps(self, n: int) -> "MarketSpec":
        if self.time_dependent:
            raise ArgumentError("cannot change the horizon of a period-dependent market")
        return MarketSpec(self.down, self.up, self.rho, n, jump_maps=self.jump_maps)

    def with_rho(self, rho: float) -> "MarketSpec":
        return MarketSpec(self.down, self.up, rho, self.n, self.down_steps, self.up_steps, self.jump_maps)

    def to_dict(self) -> dict:
        out = {"J": self.J, "down": self.down.tolist(), "up": self.up.tolist(), "rho": self.rho, "n": self.n}
        if self.time_dependent:
            out["down_steps"] = self.down_steps.tolist()
            out["up_steps"] = self.up_steps.tolist()
        return out


@dataclass(frozen=True)
class CostModel:
    """Transaction cost ``g(dgamma, z)`` with Lipschitz constant ``beta``.

    ``g`` acts on the last axis of ``dgamma`` and ``z`` and broadcasts over
    leading axes.  ``|g(a, z) - g(b, z)| <= beta |z| |a - b|`` is assumed.
    """

    g: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(repr=False)
    beta: float
    name: str = "custom"

    def __post_init__(self):
        if not np.isfinite(self.beta) or self.beta < 0:
            raise ValidationError(f"cost Lipschitz constant beta must be >= 0, got {self.beta}")

    def __call__(self, dgamma, z) -> np.ndarray:
        return np.asarray(self.g(np.asarray(dgamma, dtype=float), np.asarray(z, dtype=float)), dtype=float)

    def lipschitz_violation(self, z_samples, n_pairs: int = 200, seed: int = 0, scale: float = 1.0) -> float:
        """Largest sampled excess of ``|g(a,z)-g(b,z)|`` over ``beta |z| |a-b|``."""
        rng = np.random.default_rng(seed)
        zs = np.atleast_2d(np.asarray(z_samples, dtype=float))
        z = zs[rng.integers(0, zs.shape[0], n_pairs)]
        a = rng.normal(scale=scale, size=z.shape)
        b = rng.normal(scale=scale, size=z.shape)
        lhs = np.abs(self(a, z) - self(b, z))
        rhs = self.beta * np.linalg.norm(z, axis=-1) * np.linalg.norm(a - b, axis=-1)
        return float(max(np.max(lhs - rhs), 0.0))


def proportional_costs(beta: float) -> CostModel:
    """``beta * sum_j |dgamma_j| z_j``; Lipschitz with constant ``beta``."""
    return CostModel(lambda dg, z: beta * np.sum(np.abs(dg) * z, axis=-1), beta=float(beta), name="proportional")


@dataclass
class HedgeResult:
    """Outcome of a backward induction.

    ``values[m]``, ``gammas[m]`` and ``active[m]`` are tables over the nodes
    of period ``m``: up-count grids of shape ``(m+1,)*J`` for recombining
    lattices, flat arrays of ``(2**J)**m`` paths for trees.  Values are in
    capital units at time ``m``, so ``price == values[0]``.
    """

    price: float
    variant: str
    market: MarketSpec
    z0: np.ndarray
    layout: str = "lattice"
    values: list[np.ndarray] = field(default_factory=list, repr=False)
    gammas: list[np.ndarray] | None = field(default=None, repr=False)
    active: list[np.ndarray] | None = field(default=None, repr=False)
    exercise: list[np.ndarray] | None = field(default=None, repr=False)
    supports: tuple[tuple[int, ...], ...] = ()
    trade_factor: float = 1.0
    metadata: dict = field(default_factory=dict)
    state: dict = field(default_factory=dict, repr=False)

    def node_prices(self, m: int) -> np.ndarray:
        """Prices at the nodes of period ``m`` (recombining layout)."""
        if self.layout != "lattice":
            raise ArgumentError("node_prices is only defined for recombining lattices")
        return lattice_prices(self.z0, self.market.down, self.market.up, m)


def lattice_prices(z0, down, up, m: int) -> np.ndarray:
    """Prices ``z0 * u**k * d**(m-k)`` on the up-count grid, shape ``(m+1,)*J + (J,)``."""
    z0 = np.asarray(z0, dtype=float)
    J = z0.size
    grids = np.meshgrid(*([np.arange(m + 1)] * J), indexing="ij")
    k = np.stack(grids, axis=-1)
    return z0 * np.asarray(up) ** k * np.asarray(down) ** (m - k)


def check_z0(z0, J: int) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z0, dtype=float))
    if z.shape != (J,):
        raise ArgumentError(f"initial prices must have length {J}, got {z.shape}")
    if np.any(z <= 0) or np.any(~np.isfinite(z)):
        raise ArgumentError("initial prices must be positive and finite")
    return z

