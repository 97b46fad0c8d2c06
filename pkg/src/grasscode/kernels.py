"""Coding on implicit subspaces of a reproducing kernel Hilbert space.

A sample set X (columns of a d x q matrix) spans a p-dimensional subspace
of the RKHS through the feature map phi. The orthonormal basis
Psi(X) = Phi(X) A_X is never materialized: A_X = U S^{-1/2} comes from the
top-p eigenpairs of the q x q Gram matrix, and every inner product routes
through Gram blocks, so memory stays O(q^2).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimensionMismatch, KernelMismatch, NotPSD, RankDeficient
from .solvers import (
    DEFAULT_SOLVER,
    LassoProblem,
    SolverConfig,
    affine_local_solve,
    lasso_solve,
    lasso_solve_batch,
)

PSD_RTOL = 1e-8
RANK_RTOL = 1e-10
PINV_RTOL = 1e-10


@dataclass(frozen=True)
class GaussianKernel:
    """k(a, b) = exp(-gamma ||a - b||^2)."""

    gamma: float

    def __call__(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        sq = cdist(a.T, b.T, metric="sqeuclidean")
        return np.exp(-self.gamma * sq)

    def spec(self) -> str:
        return f"gaussian:{self.gamma:.17g}"


@dataclass(frozen=True)
class LinearKernel:
    """k(a, b) = a^T b."""

    def __call__(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a.T @ b

    def spec(self) -> str:
        return "linear"


@dataclass(frozen=True)
class PolynomialKernel:
    """k(a, b) = (a^T b + offset)^degree."""

    degree: int
    offset: float = 1.0

    def __call__(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return (a.T @ b + self.offset) ** self.degree

    def spec(self) -> str:
        return f"polynomial:{self.degree}:{self.offset:.17g}"


Kernel = GaussianKernel | LinearKernel | PolynomialKernel


def parse_kernel(spec: str) -> Kernel:
    """Parse ``linear``, ``gaussian:GAMMA`` or ``polynomial:DEG[:OFFSET]``."""
    parts = spec.strip().split(":")
    kind = parts[0].lower()
    if kind == "linear":
        return LinearKernel()
    if kind == "gaussian":
        if len(parts) != 2:
            raise ValueError(f"gaussian kernel needs a gamma: {spec!r}")
        return GaussianKernel(gamma=float(parts[1]))
    if kind in ("polynomial", "poly"):
        if len(parts) not in (2, 3):
            raise ValueError(f"polynomial kernel needs degree[:offset]: {spec!r}")
        offset = float(parts[2]) if len(parts) == 3 else 1.0
        return PolynomialKernel(degree=int(parts[1]), offset=offset)
    raise ValueError(f"unknown kernel spec {spec!r}")


def median_gamma(sample_sets: Sequence[np.ndarray]) -> float:
    """Median heuristic: gamma = 1 / (2 median^2) of pairwise distances.

    The pool is the union of all columns across the given sample sets.
    """
    pool = np.hstack([np.asarray(s, dtype=float) for s in sample_sets])
    dist = cdist(pool.T, pool.T)
    upper = dist[np.triu_indices_from(dist, k=1)]
    med = float(np.median(upper[upper > 0])) if np.any(upper > 0) else 1.0
    return 1.0 / (2.0 * med * med)


class KernelSubspace:
    """Implicit orthonormal RKHS basis Psi = Phi(samples) @ coeff.

    ``coeff`` is q x p with coeff^T K(samples, samples) coeff = I_p.
    Construct through :func:`gram_basis`.
    """

    __slots__ = ("samples", "coeff", "eigvals", "kernel")

    def __init__(self, samples: np.ndarray, coeff: np.ndarray,
                 eigvals: np.ndarray, kernel: Kernel):
        self.samples = samples
        self.coeff = coeff
        self.eigvals = eigvals
        self.kernel = kernel

    @property
    def d(self) -> int:
        return self.samples.shape[0]

    @property
    def q(self) -> int:
        return self.samples.shape[1]

    @property
    def p(self) -> int:
        return self.coeff.shape[1]

    def __repr__(self) -> str:
        return f"KernelSubspace(d={self.d}, q={self.q}, p={self.p})"


def gram_basis(samples: np.ndarray, p: int, kernel: Kernel) -> KernelSubspace:
    """Top-p implicit principal basis of a sample set in the RKHS.

    Eigendecomposes the q x q Gram matrix; raises :class:`RankDeficient`
    when the p-th eigenvalue is at or below 1e-10 of the largest (for
    instance duplicated columns with p = q).
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2:
        raise DimensionMismatch(f"samples must be 2-D, got {samples.shape}")
    q = samples.shape[1]
    if q < p:
        raise RankDeficient(f"need at least p={p} samples, got {q}")
    gram = kernel(samples, samples)
    gram = 0.5 * (gram + gram.T)
    eigvals, eigvecs = np.linalg.eigh(gram)
    eigvals, eigvecs = eigvals[::-1], eigvecs[:, ::-1]
    lam1 = float(eigvals[0])
    if eigvals[-1] < -PSD_RTOL * max(lam1, 1.0):
        raise NotPSD(f"Gram matrix has eigenvalue {eigvals[-1]:.3e}")
    eigvals = np.clip(eigvals, 0.0, None)
    if lam1 <= 0.0 or eigvals[p - 1] <= RANK_RTOL * lam1:
        raise RankDeficient(
            f"Gram matrix has numerical rank < {p} (lambda_{p} = {eigvals[p - 1]:.3e})"
        )
    coeff = eigvecs[:, :p] / np.sqrt(eigvals[:p])[None, :]
    return KernelSubspace(samples, coeff, eigvals[:p].copy(), kernel)


def _check_compatible(z: KernelSubspace, x: KernelSubspace) -> None:
    if z.kernel != x.kernel:
        raise KernelMismatch(f"kernels differ: {z.kernel} vs {x.kernel}")
    if z.d != x.d:
        raise DimensionMismatch(f"sample dimensions differ: {z.d} vs {x.d}")


def cross_coeff_block(z: KernelSubspace, x: KernelSubspace) -> np.ndarray:
    """p x p block Psi(Z)^T Psi(X) = A_Z^T K(Z, X) A_X."""
    _check_compatible(z, x)
    return z.coeff.T @ z.kernel(z.samples, x.samples) @ x.coeff


def kernel_subspace_inner(z: KernelSubspace, x: KernelSubspace) -> float:
    """Similarity ||Psi(Z)^T Psi(X)||_F^2, the RKHS analogue of
    ||Z^T X||_F^2. Equals p when the subspaces coincide."""
    return float(np.linalg.norm(cross_coeff_block(z, x)) ** 2)


class KernelDictionary:
    """Atoms as kernel subspaces with the atom-atom similarity cached."""

    def __init__(
        self,
        atoms: Sequence[KernelSubspace],
        labels: Sequence | None = None,
    ):
        if len(atoms) == 0:
            raise ValueError("dictionary needs at least one atom")
        first = atoms[0]
        for atom in atoms:
            _check_compatible(first, atom)
            if atom.p != first.p:
                raise DimensionMismatch(
                    f"atoms must share the order p: {atom.p} vs {first.p}"
                )
        self.atoms = tuple(atoms)
        self.kernel = first.kernel
        self.labels = None if labels is None else np.asarray(labels)
        if self.labels is not None and len(self.labels) != len(atoms):
            raise DimensionMismatch(
                f"{len(atoms)} atoms but {len(self.labels)} labels"
            )

        n = len(atoms)
        gram = np.empty((n, n))
        for i in range(n):
            gram[i, i] = kernel_subspace_inner(atoms[i], atoms[i])
            for j in range(i + 1, n):
                gram[i, j] = gram[j, i] = kernel_subspace_inner(atoms[i], atoms[j])
        self.gram = gram

        eigvals, eigvecs = np.linalg.eigh(gram)
        lam_max = float(eigvals[-1])
        if eigvals[0] < -PSD_RTOL * max(lam_max, 1.0):
            raise NotPSD(
                f"kernel atom similarity matrix has eigenvalue {eigvals[0]:.3e}"
            )
        self.eigvals = np.clip(eigvals[::-1], 0.0, None)
        self.eigvecs = eigvecs[:, ::-1]

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def p(self) -> int:
        return self.atoms[0].p

    def similarity_vector(self, query: KernelSubspace) -> np.ndarray:
        return np.array(
            [kernel_subspace_inner(query, atom) for atom in self.atoms]
        )

    def similarity_matrix(self, queries: Sequence[KernelSubspace]) -> np.ndarray:
        return np.stack([self.similarity_vector(q) for q in queries])


def build_kernel_dictionary(
    sample_sets: Sequence[np.ndarray],
    p: int,
    kernel: Kernel,
    labels: Sequence | None = None,
) -> KernelDictionary:
    """Gram-decompose each sample set into an atom and cache similarities."""
    atoms = [gram_basis(s, p, kernel) for s in sample_sets]
    return KernelDictionary(atoms, labels)


def _lasso_factors(kdict: KernelDictionary) -> tuple[np.ndarray, np.ndarray]:
    keep = kdict.eigvals > PINV_RTOL * max(kdict.eigvals[0], 1e-300)
    vals = kdict.eigvals[keep]
    vecs = kdict.eigvecs[:, keep]
    design = np.sqrt(vals)[:, None] * vecs.T
    whiten = vecs / np.sqrt(vals)[None, :]
    return design, whiten


def kgsc_encode(
    kdict: KernelDictionary,
    query: KernelSubspace,
    lam: float,
    config: SolverConfig = DEFAULT_SOLVER,
) -> "CodeVector":
    """Kernel sparse coding: the gSC pipeline with RKHS similarities."""
    from .coding import CodeVector

    if lam < 0:
        raise ValueError("lam must be >= 0")
    design, whiten = _lasso_factors(kdict)
    target = whiten.T @ kdict.similarity_vector(query)
    result = lasso_solve(LassoProblem(design, target, lam), config)
    return CodeVector(
        coeffs=result.coef,
        method="kgsc",
        params={"lambda": lam, "kernel": kdict.kernel.spec()},
        converged=result.converged,
    )


def kgsc_encode_many(
    kdict: KernelDictionary,
    queries: Sequence[KernelSubspace],
    lam: float,
    config: SolverConfig = DEFAULT_SOLVER,
) -> tuple[np.ndarray, np.ndarray]:
    design, whiten = _lasso_factors(kdict)
    targets = whiten.T @ kdict.similarity_matrix(queries).T
    coefs, flags, _ = lasso_solve_batch(design, targets, lam, config)
    return coefs.T, flags


def kglc_encode(
    kdict: KernelDictionary,
    query: KernelSubspace,
    n_neighbors: int,
    ridge: float = 1e-6,
    config: SolverConfig = DEFAULT_SOLVER,
) -> "CodeVector":
    """Kernel locality-constrained coding over the nearest kernel atoms."""
    from .coding import CodeVector

    n_atoms = len(kdict)
    if not 1 <= n_neighbors <= n_atoms:
        raise ValueError(f"n_neighbors must be in [1, {n_atoms}]")
    k_query = kdict.similarity_vector(query)
    delta = 2.0 * kdict.p - 2.0 * k_query
    order = np.argsort(delta, kind="stable")
    active = np.sort(order[:n_neighbors])

    sub_gram = kdict.gram[np.ix_(active, active)]
    k_active = k_query[active]
    b_mat = kdict.p - k_active[:, None] - k_active[None, :] + sub_gram
    weights = affine_local_solve(b_mat, ridge)

    coeffs = np.zeros(n_atoms)
    coeffs[active] = weights
    return CodeVector(
        coeffs=coeffs,
        method="kglc",
        params={
            "n_neighbors": n_neighbors,
            "ridge": ridge,
            "kernel": kdict.kernel.spec(),
        },
        converged=True,
    )
