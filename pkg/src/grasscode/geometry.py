"""Grassmann manifold primitives.

A point on G(p, d) is the span of a d x p matrix with orthonormal columns.
All metric quantities here depend only on the span, never on the particular
basis, and are computed from p x p products so that d x d projection
matrices are only materialized where the algorithm genuinely needs them
(closest-point projection and means).

Notation used in docstrings: X, Y are basis matrices, Xhat = X X^T is the
rank-p projector that embeds the subspace into the space of symmetric
matrices.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike

from .errors import CutLocus, DimensionMismatch, EigenDegenerateWarning, RankDeficient

ORTHONORMALITY_TOL = 1e-10
RANK_RTOL = 1e-10
EIGEN_GAP_RTOL = 1e-8


def _as_float_matrix(arr: ArrayLike, name: str = "matrix") -> np.ndarray:
    out = np.asarray(arr, dtype=float)
    if out.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite entries")
    return out


class GrassmannPoint:
    """A p-dimensional subspace of R^d, stored as an orthonormal d x p basis.

    The basis is validated on construction (max |X^T X - I| <= 1e-10) and
    frozen. Two points are compared by :func:`chordal_distance`, never by
    entrywise basis equality: any basis rotation X -> X R represents the
    same point.
    """

    __slots__ = ("basis",)

    def __init__(self, basis: ArrayLike):
        basis = _as_float_matrix(basis, "basis")
        d, p = basis.shape
        if not 0 < p <= d:
            raise DimensionMismatch(f"need 0 < p <= d, got shape {basis.shape}")
        gram = basis.T @ basis
        err = np.max(np.abs(gram - np.eye(p)))
        if err > ORTHONORMALITY_TOL:
            raise ValueError(
                f"basis columns are not orthonormal (max deviation {err:.3e}); "
                "use orthonormalize() to project raw data first"
            )
        basis = basis.copy()
        basis.flags.writeable = False
        object.__setattr__(self, "basis", basis)

    def __setattr__(self, name, value):
        raise AttributeError("GrassmannPoint is immutable")

    @property
    def d(self) -> int:
        return self.basis.shape[0]

    @property
    def p(self) -> int:
        return self.basis.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.basis.shape

    def projection_matrix(self) -> np.ndarray:
        """Dense d x d projector X X^T. Only for small d or test oracles."""
        return self.basis @ self.basis.T

    def __repr__(self) -> str:
        return f"GrassmannPoint(d={self.d}, p={self.p})"


@dataclass(frozen=True)
class TangentVector:
    """Horizontal tangent vector at ``base``: a d x p delta with base^T delta = 0."""

    base: GrassmannPoint
    delta: np.ndarray = field(repr=False)

    def __post_init__(self):
        delta = _as_float_matrix(self.delta, "delta")
        if delta.shape != self.base.shape:
            raise DimensionMismatch(
                f"delta shape {delta.shape} != base shape {self.base.shape}"
            )
        horiz = np.max(np.abs(self.base.basis.T @ delta))
        if horiz > ORTHONORMALITY_TOL:
            raise ValueError(f"delta is not horizontal at base (max |B^T delta| = {horiz:.3e})")
        delta = delta.copy()
        delta.flags.writeable = False
        object.__setattr__(self, "delta", delta)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.delta))


def _check_same_shape(x: GrassmannPoint, y: GrassmannPoint) -> None:
    if x.shape != y.shape:
        raise DimensionMismatch(f"points live on different manifolds: {x.shape} vs {y.shape}")


def orthonormalize(raw: ArrayLike, p: int) -> GrassmannPoint:
    """Best rank-p orthonormal basis for the column space of ``raw``.

    Thin-SVD left factor truncated to p columns. Raises
    :class:`RankDeficient` when the p-th singular value falls below
    1e-10 times the largest.
    """
    raw = _as_float_matrix(raw, "raw")
    d, q = raw.shape
    if q < p:
        raise RankDeficient(f"need at least p={p} columns, got {q}")
    u, s, _ = np.linalg.svd(raw, full_matrices=False)
    if s[0] == 0.0 or s[p - 1] <= RANK_RTOL * s[0]:
        raise RankDeficient(
            f"column space has numerical rank < {p} (sigma_{p} = {s[p - 1]:.3e})"
        )
    return GrassmannPoint(u[:, :p])


def principal_angles(x: GrassmannPoint, y: GrassmannPoint) -> np.ndarray:
    """Principal angles between two subspaces, ascending, in [0, pi/2].

    arccos of the singular values of X^T Y, clamped to [0, 1].
    """
    _check_same_shape(x, y)
    s = np.linalg.svd(x.basis.T @ y.basis, compute_uv=False)
    angles = np.arccos(np.clip(s, 0.0, 1.0))
    return np.sort(angles)


def geodesic_distance(x: GrassmannPoint, y: GrassmannPoint) -> float:
    """Arc length ||Theta||_2 of the principal-angle vector."""
    return float(np.linalg.norm(principal_angles(x, y)))


def projection_inner(x: GrassmannPoint, y: GrassmannPoint) -> float:
    """Frobenius inner product <Xhat, Yhat> = ||Y^T X||_F^2.

    Computed from the p x p cross product; the d x d projectors are never
    formed. Orders may differ; ambient dimension must match.
    """
    if x.d != y.d:
        raise DimensionMismatch(f"ambient dimensions differ: {x.d} vs {y.d}")
    return float(np.linalg.norm(y.basis.T @ x.basis) ** 2)


def chordal_distance(x: GrassmannPoint, y: GrassmannPoint) -> float:
    """Embedded distance ||Xhat - Yhat||_F via sqrt(2p - 2 ||X^T Y||_F^2).

    The radicand is evaluated as 2 ||Y - X (X^T Y)||_F^2, the same identity
    rearranged so nearly-coincident spans do not cancel catastrophically;
    no d x d matrix is ever formed.
    """
    _check_same_shape(x, y)
    residual = y.basis - x.basis @ (x.basis.T @ y.basis)
    return float(np.sqrt(2.0) * np.linalg.norm(residual))


def proj_to_manifold(sym: ArrayLike, p: int) -> GrassmannPoint:
    """Closest point of the projector manifold P(p, d) to a symmetric matrix.

    The minimizer of ||Uhat - S||_F over rank-p projectors is spanned by the
    p leading eigenvectors of S. The input is symmetrized as (S + S^T)/2
    first. When the eigen gap lambda_p - lambda_{p+1} is below
    1e-8 * |lambda_1| the choice of span is not unique; an
    :class:`EigenDegenerateWarning` is emitted and one valid minimizer is
    returned.
    """
    sym = _as_float_matrix(sym, "sym")
    d = sym.shape[0]
    if sym.shape[1] != d:
        raise DimensionMismatch(f"expected a square matrix, got {sym.shape}")
    if not 0 < p <= d:
        raise DimensionMismatch(f"need 0 < p <= d={d}, got p={p}")
    sym = 0.5 * (sym + sym.T)
    eigvals, eigvecs = np.linalg.eigh(sym)    # ascending
    eigvals, eigvecs = eigvals[::-1], eigvecs[:, ::-1]
    if p < d:
        gap = eigvals[p - 1] - eigvals[p]
        if gap <= EIGEN_GAP_RTOL * abs(eigvals[0]):
            warnings.warn(
                f"eigen gap at order {p} is {gap:.3e}; projected point is not unique",
                EigenDegenerateWarning,
                stacklevel=2,
            )
    basis, _ = np.linalg.qr(eigvecs[:, :p])   # re-orthonormalize against rounding
    return GrassmannPoint(basis)


def weighted_chordal_mean(
    atoms: list[GrassmannPoint] | tuple[GrassmannPoint, ...],
    weights: ArrayLike,
) -> GrassmannPoint:
    """Minimizer of sum_i w_i ||Yhat - Xhat_i||_F^2 over the manifold.

    Closed form: project sum_i w_i Xhat_i back to the manifold. The closed
    form is the stationary-point projection of the signed objective, so
    negative weights are permitted (the objective is then unbounded below
    off-manifold but still has this on-manifold minimizer).
    """
    if len(atoms) == 0:
        raise ValueError("need at least one atom")
    weights = np.asarray(weights, dtype=float).ravel()
    if weights.size != len(atoms):
        raise DimensionMismatch(f"{len(atoms)} atoms but {weights.size} weights")
    if not np.all(np.isfinite(weights)):
        raise ValueError("weights must be finite")
    first = atoms[0]
    acc = np.zeros((first.d, first.d))
    for atom, w in zip(atoms, weights):
        _check_same_shape(first, atom)
        acc += w * (atom.basis @ atom.basis.T)
    return proj_to_manifold(acc, first.p)


def exp_map(tv: TangentVector) -> GrassmannPoint:
    """Exponential map: follow the geodesic with initial velocity ``tv``.

    With thin SVD delta = U S V^T the endpoint basis is
    base V cos(S) V^T + U sin(S) V^T, re-orthonormalized.
    """
    base = tv.base.basis
    u, s, vt = np.linalg.svd(tv.delta, full_matrices=False)
    endpoint = base @ vt.T @ np.diag(np.cos(s)) @ vt + u @ np.diag(np.sin(s)) @ vt
    q, _ = np.linalg.qr(endpoint)
    return GrassmannPoint(q)


def log_map(base: GrassmannPoint, y: GrassmannPoint) -> TangentVector:
    """Inverse of :func:`exp_map`: the velocity at ``base`` that reaches ``y``.

    Uses the standard numerical recipe: with M = base^T Y and
    L = (Y - base M) M^{-1} = U S V^T, the tangent is U arctan(S) V^T. The
    singular values of the returned delta are the principal angles, so
    exp_map(log_map(base, y)) spans y. Raises :class:`CutLocus` when M is
    numerically singular (a principal angle of pi/2).
    """
    _check_same_shape(base, y)
    m = base.basis.T @ y.basis
    smin = np.linalg.svd(m, compute_uv=False)[-1]
    if smin <= 1e-10:
        raise CutLocus(
            f"target lies on the cut locus of base (min singular value {smin:.3e})"
        )
    residual = y.basis - base.basis @ m
    l_mat = np.linalg.solve(m.T, residual.T).T      # (Y - base M) M^{-1}
    u, s, vt = np.linalg.svd(l_mat, full_matrices=False)
    delta = u @ np.diag(np.arctan(s)) @ vt
    # kill rounding leakage along the base before the invariant check
    delta -= base.basis @ (base.basis.T @ delta)
    return TangentVector(base, delta)


def frechet_mean(
    points: list[GrassmannPoint],
    max_iter: int = 50,
    step: float = 1.0,
    tol: float = 1e-8,
) -> GrassmannPoint:
    """Geodesic (Karcher) mean by iterated log/exp averaging.

    Starts from the first point, repeatedly averages the log-mapped
    deviations and steps along the mean tangent until its norm drops
    below ``tol``.
    """
    if len(points) == 0:
        raise ValueError("need at least one point")
    mean = points[0]
    for _ in range(max_iter):
        acc = np.zeros(mean.shape)
        for pt in points:
            acc += log_map(mean, pt).delta
        acc *= step / len(points)
        if np.linalg.norm(acc) < tol:
            break
        acc -= mean.basis @ (mean.basis.T @ acc)
        mean = exp_map(TangentVector(mean, acc))
    return mean


def random_point(d: int, p: int, rng: np.random.Generator) -> GrassmannPoint:
    """Uniform (Haar) random point: orthonormalized Gaussian d x p matrix."""
    return orthonormalize(rng.standard_normal((d, p)), p)


def random_tangent(
    base: GrassmannPoint, sigma: float, rng: np.random.Generator
) -> TangentVector:
    """Gaussian horizontal tangent at ``base`` with entrywise std ``sigma``."""
    raw = sigma * rng.standard_normal(base.shape)
    raw -= base.basis @ (base.basis.T @ raw)
    return TangentVector(base, raw)
