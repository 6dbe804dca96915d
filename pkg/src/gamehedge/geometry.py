"""Small-dimension affine geometry of jump families.

Vectors are rows of ``(k, d)`` arrays.  A *jump family* is centered:
row ``i`` is the displacement ``xi_i - rho`` (or ``(xi_i - rho) * z``),
so risk neutrality means the origin is a barycenter of the rows.

Dimensions here are small (d <= 4), so everything is exhaustive
enumeration over subsets with dense determinants.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.optimize import linprog

from .errors import ArgumentError, DegeneracyError, InfeasibleError

#: relative tolerance for declaring a d-subset linearly dependent
DEGENERACY_RTOL = 1e-9
#: relative tolerance on the barycenter identity sum p_i xi_i = 0
BARYCENTER_RTOL = 1e-10


def _as_rows(vectors, n_rows=None, n_cols=None, what="vectors"):
    arr = np.asarray(vectors, dtype=float)
    if arr.ndim == 1 and n_cols == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ArgumentError(f"{what}: expected a 2-D array of row vectors, got shape {arr.shape}")
    if n_rows is not None and arr.shape[0] != n_rows:
        raise ArgumentError(f"{what}: expected {n_rows} vectors, got {arr.shape[0]}")
    if n_cols is not None and arr.shape[1] != n_cols:
        raise ArgumentError(f"{what}: expected vectors of length {n_cols}, got {arr.shape[1]}")
    return arr


def _det(m: np.ndarray) -> float:
    # explicit cofactor expansion for tiny matrices keeps integer inputs exact
    n = m.shape[0]
    if n == 0:
        return 1.0
    if n == 1:
        return float(m[0, 0])
    if n == 2:
        return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])
    if n == 3:
        return float(
            m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
            - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
            + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
        )
    return float(np.linalg.det(m))


def oriented_volume(vectors) -> float:
    """Determinant of the matrix whose rows are the given d vectors of length d."""
    arr = np.asarray(vectors, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ArgumentError(f"oriented_volume needs d vectors of length d, got shape {arr.shape}")
    return _det(arr)


def rotor(vectors, d: int | None = None) -> np.ndarray:
    """Generalized cross product of d-1 vectors in R^d.

    Cofactor expansion of ``det[[e_1..e_d], u_1, ..., u_{d-1}]`` along the
    symbolic first row.  For d=2 this is ``(u2, -u1)``; for d=3 the usual
    cross product.  ``d`` must be given when the family is empty (d=1).
    """
    arr = np.asarray(vectors, dtype=float)
    if arr.size == 0:
        if d is None:
            raise ArgumentError("rotor of an empty family needs the ambient dimension d")
        if d != 1:
            raise ArgumentError(f"rotor needs {d - 1} vectors, got 0")
        return np.ones(1)
    if arr.ndim == 1:
        arr = arr[None, :]
    k, dim = arr.shape
    if d is not None and dim != d:
        raise ArgumentError(f"rotor: vectors have length {dim}, expected {d}")
    if k != dim - 1:
        raise ArgumentError(f"rotor needs {dim - 1} vectors of length {dim}, got {k}")
    out = np.empty(dim)
    for j in range(dim):
        minor = np.delete(arr, j, axis=1)
        out[j] = (-1) ** j * _det(minor)
    return out


def rotor_tilde(vectors) -> np.ndarray:
    """``R(u_2 - u_1, ..., u_d - u_1)`` for d vectors in R^d.

    Its norm divided by ``|D(u_1..u_d)|`` is the reciprocal distance from the
    origin to the affine hyperplane through the end points.
    """
    arr = np.asarray(vectors, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ArgumentError(f"rotor_tilde needs d vectors of length d, got shape {arr.shape}")
    d = arr.shape[0]
    return rotor(arr[1:] - arr[0], d=d)


def is_degenerate_subset(rows: np.ndarray) -> bool:
    """True when the square block of rows is numerically singular (scale-free test)."""
    scale = float(np.prod(np.linalg.norm(rows, axis=1)))
    if scale == 0.0:
        return True
    return abs(_det(rows)) < DEGENERACY_RTOL * scale


@dataclass(frozen=True)
class SimplexMeasure:
    """Risk-neutral law on a support of affinely independent jump vectors.

    ``indices`` point into the parent family.  ``gamma`` is the hedge vector
    of the support; it depends on the payoff values and is filled in by the
    minmax evaluators.
    """

    indices: tuple[int, ...]
    weights: np.ndarray
    gamma: np.ndarray | None = None

    def expectation(self, values) -> float:
        vals = np.asarray(values, dtype=float)
        return float(np.dot(self.weights, vals[list(self.indices)]))


def hyperplane_distance(rows: np.ndarray) -> float:
    """Distance from the origin to the affine hull of the d end points ``rows``."""
    return abs(oriented_volume(rows)) / float(np.linalg.norm(rotor_tilde(rows)))


def simplex_risk_neutral(family) -> SimplexMeasure:
    """Risk-neutral weights of d+1 jump vectors whose hull contains 0 inside.

    ``p_i = (-1)^(i-1) D(family without i) / D`` where ``D`` is the oriented
    volume of the differences.  All signed terms share a sign exactly when
    the origin is interior; the barycenter identity is re-checked.
    """
    arr = _as_rows(family, what="family")
    k, d = arr.shape
    if k != d + 1:
        raise ArgumentError(f"simplex_risk_neutral needs d+1={d + 1} vectors in R^{d}, got {k}")
    signed = np.empty(k)
    for i in range(k):
        sub = np.delete(arr, i, axis=0)
        if is_degenerate_subset(sub):
            raise DegeneracyError(
                f"vectors {tuple(j for j in range(k) if j != i)} are linearly dependent"
            )
        signed[i] = (-1) ** i * _det(sub)
    if not (np.all(signed > 0) or np.all(signed < 0)):
        raise InfeasibleError("origin is not interior to the convex hull of the family")
    weights = signed / signed.sum()
    scale = float(np.max(np.linalg.norm(arr, axis=1)))
    if np.linalg.norm(weights @ arr) > BARYCENTER_RTOL * scale:
        raise InfeasibleError("weights fail the barycenter identity; family rejected as misordered")
    return SimplexMeasure(indices=tuple(range(k)), weights=weights)


def hedge_vector_formula(family, values) -> np.ndarray:
    """Closed-form minimizing hedge vector on a simplex.

    ``gamma = -(1/D) sum_i (-1)^(i-1) f_i R~(family without i)``; the linear
    solve in :mod:`gamehedge.minmax` is the production route, this is kept as
    an independent formula.
    """
    arr = _as_rows(family, what="family")
    k, d = arr.shape
    if k != d + 1:
        raise ArgumentError("hedge_vector_formula needs d+1 vectors")
    vals = np.asarray(values, dtype=float)
    total = _det(arr[1:] - arr[0])
    acc = np.zeros(d)
    for i in range(k):
        acc += (-1) ** i * vals[i] * rotor_tilde(np.delete(arr, i, axis=0))
    return -acc / total


@dataclass
class GeneralPositionReport:
    i_holds: bool
    ii_holds: bool
    dependent_subset: tuple[int, ...] | None = None
    separating_direction: np.ndarray | None = None

    def __bool__(self) -> bool:
        return self.i_holds and self.ii_holds


def origin_interior(arr: np.ndarray) -> tuple[bool, np.ndarray | None]:
    """Whether 0 is an interior point of conv(rows); else a direction omega
    with ``(omega, xi_i) >= 0`` for every row (unit norm)."""
    k, d = arr.shape
    if np.linalg.matrix_rank(arr) == d:
        # max t  s.t.  p_i >= t, sum p = 1, sum p xi = 0
        c = np.zeros(k + 1)
        c[-1] = -1.0
        a_eq = np.zeros((d + 1, k + 1))
        a_eq[:d, :k] = arr.T
        a_eq[d, :k] = 1.0
        b_eq = np.zeros(d + 1)
        b_eq[d] = 1.0
        a_ub = np.hstack([-np.eye(k), np.ones((k, 1))])
        res = linprog(c, A_ub=a_ub, b_ub=np.zeros(k), A_eq=a_eq, b_eq=b_eq,
                      bounds=[(0, None)] * k + [(None, None)], method="highs")
        if res.status == 0 and -res.fun > 1e-12:
            return True, None
    # max s  s.t.  (omega, xi_i) >= s, |omega_j| <= 1
    c = np.zeros(d + 1)
    c[-1] = -1.0
    a_ub = np.hstack([-arr, np.ones((k, 1))])
    res = linprog(c, A_ub=a_ub, b_ub=np.zeros(k),
                  bounds=[(-1, 1)] * d + [(None, None)], method="highs")
    omega = np.asarray(res.x[:d]) if res.status == 0 else np.zeros(d)
    norm = np.linalg.norm(omega)
    if norm > 0:
        omega = omega / norm
    return False, omega


def is_general_position(family, d: int | None = None) -> GeneralPositionReport:
    """Check (i) no d vectors dependent and (ii) origin interior to the hull."""
    arr = _as_rows(family, what="family")
    k, dim = arr.shape
    if d is not None and d != dim:
        raise ArgumentError(f"family lives in R^{dim}, not R^{d}")
    if k < dim + 1:
        raise ArgumentError(f"need at least d+1={dim + 1} vectors, got {k}")
    dependent = None
    for sub in combinations(range(k), dim):
        if is_degenerate_subset(arr[list(sub)]):
            dependent = sub
            break
    interior, omega = origin_interior(arr)
    return GeneralPositionReport(
        i_holds=dependent is None,
        ii_holds=interior,
        dependent_subset=dependent,
        separating_direction=omega,
    )


@dataclass(frozen=True)
class SpreadCharacteristics:
    """Spread of a jump family around the origin.

    kappa1: smallest distance from 0 to the hull of any sub-family lying in
    an open half-space.  kappa2: smallest distance from 0 to an affine
    hyperplane through d end points.  delta: ``max z / min z`` of the
    scaling vector (1 for an unscaled family).
    """

    kappa1: float
    kappa2: float
    delta: float = 1.0


def _projection_onto_affine_hull(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
    """Barycentric coordinates and foot of the perpendicular from 0 to aff(rows)."""
    m = rows.shape[0]
    if m == 1:
        return np.ones(1), rows[0].copy()
    # minimize |sum l_i r_i|^2 subject to sum l_i = 1
    gram = rows @ rows.T
    kkt = np.zeros((m + 1, m + 1))
    kkt[:m, :m] = 2.0 * gram
    kkt[:m, m] = 1.0
    kkt[m, :m] = 1.0
    rhs = np.zeros(m + 1)
    rhs[m] = 1.0
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        return None
    lam = sol[:m]
    return lam, lam @ rows


def hull_distance_faces(rows: np.ndarray, max_size: int | None = None) -> float:
    """Smallest distance from 0 to conv(S) over subsets S of at most ``max_size`` rows.

    Enumerates faces: for each subset the foot of the perpendicular onto its
    affine hull counts when its barycentric coordinates are non-negative.
    """
    m, d = rows.shape
    top = d if max_size is None else max_size
    best = np.inf
    for size in range(1, min(m, top) + 1):
        for sub in combinations(range(m), size):
            proj = _projection_onto_affine_hull(rows[list(sub)])
            if proj is None:
                continue
            lam, point = proj
            if np.all(lam >= -1e-12):
                best = min(best, float(np.linalg.norm(point)))
    return best


def spread_characteristics(family, z=None, allow_degenerate: bool = False) -> SpreadCharacteristics:
    """kappa1, kappa2 (and delta of ``z``) for a family in general position.

    kappa1 is computed exactly: the max-min support value of a half-space
    sub-family equals its hull's distance to the origin, and that distance
    is realised on a face spanned by at most d points, each of which is
    itself a half-space sub-family.

    With ``allow_degenerate`` a dependent d-subset contributes kappa2 = 0
    instead of raising.
    """
    arr = _as_rows(family, what="family")
    k, d = arr.shape
    kappa2 = np.inf
    for sub in combinations(range(k), d):
        rows = arr[list(sub)]
        if is_degenerate_subset(rows):
            if not allow_degenerate:
                raise DegeneracyError(f"vectors {sub} are linearly dependent")
            kappa2 = 0.0
            continue
        kappa2 = min(kappa2, hyperplane_distance(rows))
    kappa1 = hull_distance_faces(arr, max_size=d)
    delta = 1.0 if z is None else coordinate_ratio(z)
    return SpreadCharacteristics(kappa1=float(kappa1), kappa2=float(kappa2), delta=delta)


def coordinate_ratio(z) -> float:
    """``max_i z_i / min_i z_i`` for a strictly positive vector."""
    zz = np.asarray(z, dtype=float).ravel()
    if zz.size == 0 or np.any(zz <= 0):
        raise ArgumentError("scaling vector must have strictly positive coordinates")
    return float(zz.max() / zz.min())


def scaling_bounds(spread: SpreadCharacteristics, z) -> tuple[float, float]:
    """Lower bounds on kappa1, kappa2 of the family scaled coordinate-wise by z."""
    zz = np.asarray(z, dtype=float).ravel()
    delta = coordinate_ratio(zz)
    d = zz.size
    norm = float(np.linalg.norm(zz))
    return norm * spread.kappa1 / (d * delta), norm * spread.kappa2 / (np.sqrt(d) * delta)
