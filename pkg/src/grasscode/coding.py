"""Extrinsic coding over a dictionary of subspaces.

Every quantity is expressed through the two similarity objects

    K_dict[i, j] = ||D_i^T D_j||_F^2      (atom-atom, cached at build time)
    k_query[i]   = ||X^T D_i||_F^2        (query-atom)

so the embedded objective ||Xhat - sum_j y_j Dhat_j||_F^2 becomes the
quadratic form p + y^T K_dict y - 2 y^T k_query without ever forming a
d x d matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AllZeroCode, DimensionMismatch, NotPSD
from .geometry import (
    GrassmannPoint,
    frechet_mean,
    log_map,
    weighted_chordal_mean,
)
from .solvers import (
    DEFAULT_SOLVER,
    LassoProblem,
    SolverConfig,
    affine_local_solve,
    lasso_solve,
    lasso_solve_batch,
)

PSD_RTOL = 1e-8
PINV_RTOL = 1e-10

CANONICAL_BASE = "canonical"
MEAN_BASE = "mean"


@dataclass(frozen=True)
class CodeVector:
    """Coefficients of a query over the dictionary atoms."""

    coeffs: np.ndarray
    method: str
    params: dict = field(default_factory=dict)
    converged: bool = True

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float).ravel()
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def n_nonzero(self) -> int:
        return int(np.count_nonzero(self.coeffs))


class GrassmannDictionary:
    """Ordered atoms sharing (p, d), with the atom-atom similarity cached.

    The cache holds K_dict and its eigendecomposition, reused by every
    encode call. Atoms and cache are frozen after construction; one
    dictionary can serve concurrent encodes.
    """

    def __init__(
        self,
        atoms: Sequence[GrassmannPoint],
        labels: Sequence | None = None,
    ):
        if len(atoms) == 0:
            raise ValueError("dictionary needs at least one atom")
        first = atoms[0]
        for atom in atoms:
            if atom.shape != first.shape:
                raise DimensionMismatch(
                    f"atoms must share (d, p): {atom.shape} vs {first.shape}"
                )
        self.atoms = tuple(atoms)
        self.labels = None if labels is None else np.asarray(labels)
        if self.labels is not None and len(self.labels) != len(atoms):
            raise DimensionMismatch(
                f"{len(atoms)} atoms but {len(self.labels)} labels"
            )

        stacked = np.stack([a.basis for a in atoms])          # N x d x p
        cross = np.einsum("idp,jdq->ijpq", stacked, stacked)  # D_i^T D_j blocks
        gram = np.einsum("ijpq,ijpq->ij", cross, cross)
        self.gram = 0.5 * (gram + gram.T)
        self._stacked = stacked

        eigvals, eigvecs = np.linalg.eigh(self.gram)
        lam_max = float(eigvals[-1])
        if eigvals[0] < -PSD_RTOL * max(lam_max, 1.0):
            raise NotPSD(
                f"atom similarity matrix has eigenvalue {eigvals[0]:.3e}; "
                "inputs are numerically corrupted"
            )
        self.eigvals = np.clip(eigvals[::-1], 0.0, None)      # descending
        self.eigvecs = eigvecs[:, ::-1]

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def d(self) -> int:
        return self.atoms[0].d

    @property
    def p(self) -> int:
        return self.atoms[0].p

    def similarity_vector(self, query: GrassmannPoint) -> np.ndarray:
        """k_query[i] = ||X^T D_i||_F^2 for one query."""
        if query.shape != self.atoms[0].shape:
            raise DimensionMismatch(
                f"query shape {query.shape} != atom shape {self.atoms[0].shape}"
            )
        cross = np.einsum("dp,idq->ipq", query.basis, self._stacked)
        return np.einsum("ipq,ipq->i", cross, cross)

    def similarity_matrix(self, queries: Sequence[GrassmannPoint]) -> np.ndarray:
        """Stacked similarity vectors, one row per query."""
        q = np.stack([pt.basis for pt in queries])
        for pt in queries:
            if pt.shape != self.atoms[0].shape:
                raise DimensionMismatch(
                    f"query shape {pt.shape} != atom shape {self.atoms[0].shape}"
                )
        cross = np.einsum("mdp,idq->mipq", q, self._stacked)
        return np.einsum("mipq,mipq->mi", cross, cross)


def build_dictionary(
    atoms: Sequence[GrassmannPoint], labels: Sequence | None = None
) -> GrassmannDictionary:
    """Construct a dictionary and populate its similarity cache."""
    return GrassmannDictionary(atoms, labels)


def _lasso_factors(dictionary: GrassmannDictionary) -> tuple[np.ndarray, np.ndarray]:
    """Split K_dict = A^T A and the half-whitening used for targets.

    Eigenvalues at or below 1e-10 * lambda_max are dropped (pseudo-inverse
    convention); duplicate atoms make K_dict genuinely singular.
    """
    keep = dictionary.eigvals > PINV_RTOL * max(dictionary.eigvals[0], 1e-300)
    vals = dictionary.eigvals[keep]
    vecs = dictionary.eigvecs[:, keep]
    design = np.sqrt(vals)[:, None] * vecs.T          # A = S^{1/2} U^T
    whiten = vecs / np.sqrt(vals)[None, :]            # U S^{-1/2}
    return design, whiten


def gsc_encode(
    dictionary: GrassmannDictionary,
    query: GrassmannPoint,
    lam: float,
    config: SolverConfig = DEFAULT_SOLVER,
) -> CodeVector:
    """Sparse code of a query: min_y y^T K y - 2 y^T k + lam ||y||_1.

    The quadratic form is rewritten as ||x* - A y||^2 with A = S^{1/2} U^T
    and x* = S^{-1/2} U^T k from the eigendecomposition K = U S U^T, then
    handed to the lasso solver.
    """
    if lam < 0:
        raise ValueError("lam must be >= 0")
    design, whiten = _lasso_factors(dictionary)
    k_query = dictionary.similarity_vector(query)
    target = whiten.T @ k_query
    result = lasso_solve(LassoProblem(design, target, lam), config)
    return CodeVector(
        coeffs=result.coef,
        method="gsc",
        params={"lambda": lam},
        converged=result.converged,
    )


def gsc_encode_many(
    dictionary: GrassmannDictionary,
    queries: Sequence[GrassmannPoint],
    lam: float,
    config: SolverConfig = DEFAULT_SOLVER,
) -> tuple[np.ndarray, np.ndarray]:
    """Batched :func:`gsc_encode`; returns (codes m x N, converged flags)."""
    design, whiten = _lasso_factors(dictionary)
    sims = dictionary.similarity_matrix(queries)       # m x N
    targets = whiten.T @ sims.T                        # k x m
    coefs, flags, _ = lasso_solve_batch(design, targets, lam, config)
    return coefs.T, flags


def glc_encode(
    dictionary: GrassmannDictionary,
    query: GrassmannPoint,
    n_neighbors: int,
    ridge: float = 1e-6,
    config: SolverConfig = DEFAULT_SOLVER,
) -> CodeVector:
    """Locality-constrained code over the chordally nearest atoms.

    Neighbor selection minimizes delta_i = 2p - 2 ||D_i^T X||_F^2 (squared
    chordal distance; ties break to the lowest atom index). The local
    matrix [B]_ij = p - k_i - k_j + ||B_j^T B_i||_F^2 is solved through the
    affine system, and the weights (which sum to one) are scattered back
    into a full-length code.
    """
    n_atoms = len(dictionary)
    if not 1 <= n_neighbors <= n_atoms:
        raise ValueError(f"n_neighbors must be in [1, {n_atoms}]")
    k_query = dictionary.similarity_vector(query)
    delta = 2.0 * dictionary.p - 2.0 * k_query
    order = np.argsort(delta, kind="stable")
    active = np.sort(order[:n_neighbors])

    sub_gram = dictionary.gram[np.ix_(active, active)]
    k_active = k_query[active]
    b_mat = dictionary.p - k_active[:, None] - k_active[None, :] + sub_gram
    weights = affine_local_solve(b_mat, ridge)

    coeffs = np.zeros(n_atoms)
    coeffs[active] = weights
    return CodeVector(
        coeffs=coeffs,
        method="glc",
        params={"n_neighbors": n_neighbors, "ridge": ridge},
        converged=True,
    )


def _log_design(
    dictionary: GrassmannDictionary, base: GrassmannPoint
) -> np.ndarray:
    cols = [log_map(base, atom).delta.ravel() for atom in dictionary.atoms]
    return np.column_stack(cols)


def resolve_base(
    dictionary: GrassmannDictionary, base: GrassmannPoint | str
) -> GrassmannPoint:
    """Materialize the tangent base point for log-Euclidean coding.

    ``"canonical"`` is the span of the first p coordinate axes;
    ``"mean"`` is the Frechet mean of the atoms.
    """
    if isinstance(base, GrassmannPoint):
        return base
    if base == CANONICAL_BASE:
        return GrassmannPoint(np.eye(dictionary.d, dictionary.p))
    if base == MEAN_BASE:
        return frechet_mean(list(dictionary.atoms))
    raise ValueError(f"unknown base policy {base!r}")


def loge_encode(
    dictionary: GrassmannDictionary,
    query: GrassmannPoint,
    lam: float,
    base: GrassmannPoint | str = CANONICAL_BASE,
    config: SolverConfig = DEFAULT_SOLVER,
) -> CodeVector:
    """Log-Euclidean baseline: flatten everything into one tangent space.

    Atoms and query are log-mapped at ``base``, vectorized, and sparse
    coded as ordinary vectors. Raises :class:`~grasscode.errors.CutLocus`
    when any point has a pi/2 principal angle to the base.
    """
    base_pt = resolve_base(dictionary, base)
    design = _log_design(dictionary, base_pt)
    target = log_map(base_pt, query).delta.ravel()
    result = lasso_solve(LassoProblem(design, target, lam), config)
    return CodeVector(
        coeffs=result.coef,
        method="loge",
        params={"lambda": lam},
        converged=result.converged,
    )


def loge_encode_many(
    dictionary: GrassmannDictionary,
    queries: Sequence[GrassmannPoint],
    lam: float,
    base: GrassmannPoint | str = CANONICAL_BASE,
    config: SolverConfig = DEFAULT_SOLVER,
) -> tuple[np.ndarray, np.ndarray]:
    """Batched :func:`loge_encode`; returns (codes m x N, converged flags)."""
    base_pt = resolve_base(dictionary, base)
    design = _log_design(dictionary, base_pt)
    targets = np.column_stack(
        [log_map(base_pt, q).delta.ravel() for q in queries]
    )
    coefs, flags, _ = lasso_solve_batch(design, targets, lam, config)
    return coefs.T, flags


def reconstruct(dictionary: GrassmannDictionary, code: CodeVector) -> GrassmannPoint:
    """Pull the coded combination back onto the manifold.

    The closest on-manifold point to sum_j y_j Dhat_j is the weighted
    chordal mean of the atoms with weights y.
    """
    coeffs = code.coeffs
    if coeffs.shape != (len(dictionary),):
        raise DimensionMismatch(
            f"code length {coeffs.shape} != dictionary size {len(dictionary)}"
        )
    if np.all(coeffs == 0.0):
        raise AllZeroCode("cannot reconstruct from an all-zero code")
    return weighted_chordal_mean(list(dictionary.atoms), coeffs)
