"""Closed-form Bellman steps for convex sub-modular payoffs (J = 2, 3).

Notation: ``q_j = (u_j - rho) / (u_j - d_j)`` and ``p_j = 1 - q_j`` are the
one-asset risk-neutral weights of the down and up moves.  ``f_I(z)`` is
``f`` at the vertex that moves assets in ``I`` down and the others up.

All steps return operator values ``(B f)(z)`` (undiscounted), vectorized
over leading axes of ``z``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import ArgumentError, ConsistencyError, PreconditionError
from .lattice.market import MarketSpec

#: half-width of the sign bands used for case dispatch
BAND = 1e-12
#: agreement required between adjacent cases inside a band (relative)
AGREE_RTOL = 1e-10


def _require_assets(market: MarketSpec, J: int) -> None:
    if market.J != J:
        raise ArgumentError(f"this closed form needs J={J}, market has J={market.J}")
    if market.time_dependent or market.jump_maps is not None:
        raise ArgumentError("closed forms need period-independent vertex markets")


@dataclass(frozen=True)
class TwoColorCoefficients:
    """Dispatch data of the J=2 closed form.

    ``kappa = 1 - p_1 - p_2``; ``branch`` is ``"kappa_nonneg"`` or
    ``"kappa_nonpos"`` (``"boundary"`` inside the tolerance band).
    """

    kappa: float
    p: np.ndarray
    q: np.ndarray
    branch: str

    @classmethod
    def from_market(cls, market: MarketSpec) -> "TwoColorCoefficients":
        _require_assets(market, 2)
        d, u, rho = market.down, market.up, market.rho
        p = (rho - d) / (u - d)
        q = (u - rho) / (u - d)
        kappa = 1.0 - p[0] - p[1]
        branch = "boundary" if abs(kappa) <= BAND else ("kappa_nonneg" if kappa > 0 else "kappa_nonpos")
        return cls(kappa=float(kappa), p=p, q=q, branch=branch)


def _two_color_branch(f, z, market: MarketSpec, co: TwoColorCoefficients, nonneg: bool):
    d, u = market.down, market.up
    z = np.asarray(z, dtype=float)
    z1, z2 = z[..., 0], z[..., 1]

    def at(a, b):
        return np.asarray(f(np.stack([a * z1, b * z2], axis=-1)), dtype=float)

    f_ud, f_du = at(u[0], d[1]), at(d[0], u[1])
    if nonneg:
        f_dd = at(d[0], d[1])
        value = co.p[0] * f_ud + co.p[1] * f_du + co.kappa * f_dd
        g1 = (f_ud - f_dd) / (z1 * (u[0] - d[0]))
        g2 = (f_du - f_dd) / (z2 * (u[1] - d[1]))
    else:
        f_uu = at(u[0], u[1])
        value = co.q[0] * f_du + co.q[1] * f_ud - co.kappa * f_uu
        g1 = (f_uu - f_du) / (z1 * (u[0] - d[0]))
        g2 = (f_uu - f_ud) / (z2 * (u[1] - d[1]))
    return value, g1, g2


def two_color_step(f, z, market: MarketSpec):
    """``(B f)(z)`` and the hedge ``(gamma_1, gamma_2)`` for J=2.

    Inside the band around ``kappa = 0`` both branches are evaluated and
    must agree.
    """
    co = TwoColorCoefficients.from_market(market)
    if co.branch == "boundary":
        a = _two_color_branch(f, z, market, co, True)
        b = _two_color_branch(f, z, market, co, False)
        scale = 1.0 + np.abs(a[0])
        if np.any(np.abs(a[0] - b[0]) > AGREE_RTOL * scale):
            raise ConsistencyError("the two J=2 branches disagree at kappa = 0")
        return a
    return _two_color_branch(f, z, market, co, co.branch == "kappa_nonneg")


def two_color_vertex_weights(market: MarketSpec) -> np.ndarray:
    """Weights of the closed-form law over the vertices (``vertex_bits`` order)."""
    co = TwoColorCoefficients.from_market(market)
    w = np.zeros(4)
    # vertex index = bit0 + 2 * bit1, bit = 1 for an up move
    if co.kappa >= 0:
        w[1], w[2], w[0] = co.p[0], co.p[1], co.kappa
    else:
        w[2], w[1], w[3] = co.q[0], co.q[1], -co.kappa
    return w


def two_color_crr(f, z0, market: MarketSpec, n: int | None = None) -> float:
    """Price ``rho**-n sum_k C(n,k) p_1^k p_2^(n-k) f(u_1^k d_1^(n-k) z_1, d_2^k u_2^(n-k) z_2)``.

    Valid when ``kappa = 0``: the law then lives on the two anti-diagonal
    vertices.
    """
    co = TwoColorCoefficients.from_market(market)
    if abs(co.kappa) > BAND:
        raise PreconditionError(f"two-colour binomial sum needs kappa = 0, got kappa = {co.kappa:.3e}")
    n = market.n if n is None else int(n)
    d, u, rho = market.down, market.up, market.rho
    z0 = np.asarray(z0, dtype=float)
    k = np.arange(n + 1)
    pts = np.stack([u[0] ** k * d[0] ** (n - k) * z0[0], d[1] ** k * u[1] ** (n - k) * z0[1]], axis=-1)
    coef = np.array([comb(n, int(i)) for i in k], dtype=float) * co.p[0] ** k * co.p[1] ** (n - k)
    return float(rho ** (-n) * np.dot(coef, np.asarray(f(pts), dtype=float)))


@dataclass(frozen=True)
class ThreeColorCoefficients:
    """Dispatch data of the J=3 closed forms.

    ``alpha_123 = 1 - q_1 - q_2 - q_3`` and ``alpha[(i, j)] = 1 - q_i - q_j``
    (0-based asset indices).  ``cases`` lists every case consistent with the
    signs once tolerance bands are taken into account.
    """

    q: np.ndarray
    alpha_123: float
    alpha: dict
    cases: tuple[tuple, ...]

    @classmethod
    def from_market(cls, market: MarketSpec) -> "ThreeColorCoefficients":
        _require_assets(market, 3)
        d, u, rho = market.down, market.up, market.rho
        q = (u - rho) / (u - d)
        a123 = 1.0 - q.sum()
        alpha = {(i, j): 1.0 - q[i] - q[j] for i in range(3) for j in range(i + 1, 3)}
        return cls(q=q, alpha_123=float(a123), alpha=alpha, cases=tuple(_cases(a123, alpha)))

    @property
    def case(self) -> tuple | None:
        return self.cases[0] if self.cases else None


def _signs(x: float) -> set:
    """Admissible signs of ``x`` (+1 for >= 0, -1 for <= 0) with a band."""
    if abs(x) <= BAND:
        return {1, -1}
    return {1} if x > 0 else {-1}


def _cases(a123, alpha):
    out = []
    if a123 >= -BAND:
        out.append(("linear_nonneg",))
    if a123 <= -1.0 + BAND:
        out.append(("linear_le_minus_one",))
    if -1.0 - BAND < a123 < BAND:
        pairs = list(alpha)
        sign_opts = [_signs(alpha[p]) for p in pairs]
        seen = set()
        for s0 in sign_opts[0]:
            for s1 in sign_opts[1]:
                for s2 in sign_opts[2]:
                    signs = dict(zip(pairs, (s0, s1, s2)))
                    neg = [p for p in pairs if signs[p] < 0]
                    if len(neg) == 0:
                        tag = ("mixed_all_pairs_nonneg",)
                    elif len(neg) == 1:
                        tag = ("mixed_one_pair_nonpos", neg[0])
                    elif len(neg) == 2:
                        pos = [p for p in pairs if signs[p] > 0][0]
                        tag = ("mixed_one_pair_nonneg", pos)
                    else:
                        continue
                    if tag not in seen:
                        seen.add(tag)
                        out.append(tag)
    return out


def _vertex_index(down_set) -> int:
    """Vertex index of ``f_I``: assets in ``I`` down, others up."""
    return sum(1 << j for j in range(3) if j not in down_set)


def _rows(tag, co: ThreeColorCoefficients) -> list[dict]:
    """Candidate laws of a case as ``{vertex index: weight}`` rows."""
    q, a123 = co.q, co.alpha_123

    def al(i, j):
        return co.alpha[tuple(sorted((i, j)))]

    V = lambda *s: _vertex_index(set(s))  # noqa: E731
    if tag[0] == "linear_nonneg":
        row = {V(): a123}
        for j in range(3):
            row[V(j)] = q[j]
        return [row]
    if tag[0] == "linear_le_minus_one":
        row = {V(0, 1, 2): -(a123 + 1.0)}
        for j in range(3):
            others = [i for i in range(3) if i != j]
            row[V(*others)] = 1.0 - q[j]
        return [row]
    if tag[0] == "mixed_all_pairs_nonneg":
        rows = []
        for i, j in ((0, 1), (0, 2), (1, 2)):
            k = 3 - i - j
            rows.append({V(i, j): -a123, V(j): al(i, k), V(i): al(j, k), V(k): q[k]})
        return rows
    if tag[0] == "mixed_one_pair_nonpos":
        i, j = tag[1]
        k = 3 - i - j
        return [
            {V(i, j): -a123, V(j): al(i, k), V(i): al(j, k), V(k): q[k]},
            {V(i): al(j, k), V(i, j): -al(i, j), V(i, k): q[k], V(j): 1.0 - q[i]},
            {V(j): al(i, k), V(i, j): -al(i, j), V(j, k): q[k], V(i): 1.0 - q[j]},
        ]
    if tag[0] == "mixed_one_pair_nonneg":
        i, j = tag[1]
        k = 3 - i - j
        return [
            {V(k): al(i, j), V(j, k): -al(j, k), V(i, k): q[i], V(j): 1.0 - q[k]},
            {V(k): al(i, j), V(i, k): -al(i, k), V(j, k): q[j], V(i): 1.0 - q[k]},
            {V(k): a123 + 1.0, V(j, k): -al(j, k), V(i, k): -al(i, k), V(i, j): 1.0 - q[k]},
        ]
    raise ArgumentError(f"unknown case {tag}")


def _dense(row: dict) -> np.ndarray:
    w = np.zeros(8)
    for idx, val in row.items():
        w[idx] += val
    return w


def case_weights(tag, co: ThreeColorCoefficients) -> list[np.ndarray]:
    """Dense vertex weights of every candidate row of a case, checked to be laws."""
    out = []
    for row in _rows(tag, co):
        w = _dense(row)
        if np.any(w < -BAND) or abs(w.sum() - 1.0) > BAND:
            raise ConsistencyError(f"case {tag} produced weights {w.round(15).tolist()} that are not a law")
        out.append(w)
    return out


def _vertex_values(f, z, market: MarketSpec) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    verts = market.vertices()
    return np.asarray(f(z[..., None, :] * verts), dtype=float)


def three_color_step(f, z, market: MarketSpec):
    """``(B f)(z)`` for J=3 by the case table on ``(alpha_123, alpha_ij)``.

    Coefficient patterns outside the table fall back to the general engine
    with a warning.  Inside tolerance bands all adjacent cases are evaluated
    and must agree.
    """
    co = ThreeColorCoefficients.from_market(market)
    vals = _vertex_values(f, z, market)
    if not co.cases:
        from .lattice.operator import apply_operator

        warnings.warn(
            f"coefficients alpha_123={co.alpha_123:.6g}, alpha={ {k: round(v, 6) for k, v in co.alpha.items()} } "
            "match no closed-form case; using the general engine",
            stacklevel=2,
        )
        return apply_operator(f, z, market)
    results = []
    for tag in co.cases:
        ws = np.stack(case_weights(tag, co))
        results.append((vals @ ws.T).max(axis=-1))
    first = results[0]
    scale = 1.0 + np.abs(first)
    for other in results[1:]:
        if np.any(np.abs(other - first) > AGREE_RTOL * scale):
            raise ConsistencyError(f"adjacent closed-form cases {co.cases} disagree inside a tolerance band")
    return first


def iterable_vertex_weights(market: MarketSpec) -> np.ndarray | None:
    """Closed-form law usable for every period of an n-step sub-modular iteration.

    J=2 always has one; J=3 only in the two linear cases (the mixed cases do
    not keep sub-modularity and are never iterated).
    """
    if market.time_dependent or market.jump_maps is not None:
        return None
    if market.J == 2:
        return two_color_vertex_weights(market)
    if market.J == 3:
        co = ThreeColorCoefficients.from_market(market)
        for tag in co.cases:
            if tag[0].startswith("linear"):
                return case_weights(tag, co)[0]
    return None


def random_submodular_convex(J: int, rng: np.random.Generator, n_terms: int = 4):
    """Random convex sub-modular payoff: a positive mix of ``max(a_j z_j - b)`` terms.

    ``max`` of increasing affine functions of single coordinates with
    non-negative slopes has non-positive mixed differences.
    """
    terms = []
    for _ in range(n_terms):
        a = rng.uniform(0.2, 2.0, size=J)
        b = rng.uniform(0.0, 2.0)
        c = rng.uniform(0.1, 1.0)
        terms.append((a, b, c))
    lin = rng.uniform(-0.5, 0.5, size=J)

    def f(z):
        z = np.asarray(z, dtype=float)
        out = z @ lin
        for a, b, c in terms:
            out = out + c * np.maximum((z * a).max(axis=-1) - b, 0.0)
        return out

    return f


__all__ = [
    "TwoColorCoefficients",
    "ThreeColorCoefficients",
    "two_color_step",
    "two_color_crr",
    "two_color_vertex_weights",
    "three_color_step",
    "case_weights",
    "iterable_vertex_weights",
    "random_submodular_convex",
]
