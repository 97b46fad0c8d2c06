"""Scikit-learn style estimators wrapping the coding and learning cores.

``fit`` ingests subspaces (or raw sample sets for the kernel flavors),
``transform`` produces code matrices, and ``predict`` runs the residual
classifier when atom labels were supplied. Everything composes with
sklearn pipelines and ``clone`` through ``get_params``/``set_params``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from .coding import build_dictionary
from .evaluation import CodingSpec, class_residuals, encode_dataset
from .kernels import (
    GaussianKernel,
    Kernel,
    LinearKernel,
    PolynomialKernel,
    build_kernel_dictionary,
    gram_basis,
    median_gamma,
)
from .learning import DLConfig, gdl_learn, kgdl_learn
from .solvers import SolverConfig
from .validation import as_grassmann_points, as_sample_sets, check_labels


def _solver(max_iter: int, tol: float) -> SolverConfig:
    return SolverConfig(max_iter=max_iter, tol=tol)


class _ResidualClassifierMixin:
    """predict/score via the class-residual rule over the fitted dictionary."""

    def predict(self, X):
        check_is_fitted(self, "dictionary_")
        if self.dictionary_.labels is None:
            raise NotFittedError(
                "predict requires atom labels; pass y to fit()"
            )
        codes, _, sims = self._encode(X)
        classes, residuals = class_residuals(self.dictionary_, sims, codes)
        return classes[np.argmin(residuals, axis=1)]

    def score(self, X, y):
        return float(np.mean(self.predict(X) == np.asarray(y)))


class GrassmannCoder(BaseEstimator, TransformerMixin, _ResidualClassifierMixin):
    """Code subspaces against a fixed dictionary of subspaces.

    Parameters follow the coding method: ``lam`` for the sparse methods
    ("gsc", "loge"), ``n_neighbors``/``ridge`` for the locality method
    ("glc") and ``base`` for the log-Euclidean baseline.

    fit(X, y=None) takes a sequence of d x p orthonormal bases as the
    dictionary atoms (y are the atom labels); transform(X) returns the
    (n_queries, n_atoms) code matrix; predict(X) classifies by smallest
    class residual.
    """

    def __init__(
        self,
        method: str = "gsc",
        lam: float = 0.1,
        n_neighbors: int = 5,
        ridge: float = 1e-6,
        base: str = "canonical",
        max_iter: int = 10000,
        tol: float = 1e-8,
    ):
        self.method = method
        self.lam = lam
        self.n_neighbors = n_neighbors
        self.ridge = ridge
        self.base = base
        self.max_iter = max_iter
        self.tol = tol

    def _spec(self) -> CodingSpec:
        return CodingSpec(
            method=self.method,
            lam=self.lam,
            n_neighbors=self.n_neighbors,
            ridge=self.ridge,
            base=self.base,
            solver=_solver(self.max_iter, self.tol),
        )

    def fit(self, X, y=None):
        atoms = as_grassmann_points(X)
        labels = None if y is None else check_labels(y, len(atoms))
        self.dictionary_ = build_dictionary(atoms, labels)
        return self

    def _encode(self, X):
        check_is_fitted(self, "dictionary_")
        queries = as_grassmann_points(X)
        return encode_dataset(self.dictionary_, queries, self._spec())

    def transform(self, X):
        codes, _, _ = self._encode(X)
        return codes


class KernelGrassmannCoder(BaseEstimator, TransformerMixin, _ResidualClassifierMixin):
    """Kernelized coder: atoms and queries are raw d x q_i sample sets.

    ``kernel`` is "gaussian", "linear" or "polynomial"; a Gaussian ``gamma``
    of None triggers the median heuristic on the fit data. ``p`` is the
    implicit subspace order in the RKHS.
    """

    def __init__(
        self,
        method: str = "kgsc",
        p: int = 2,
        kernel: str = "gaussian",
        gamma: float | None = None,
        degree: int = 3,
        coef0: float = 1.0,
        lam: float = 0.1,
        n_neighbors: int = 5,
        ridge: float = 1e-6,
        max_iter: int = 10000,
        tol: float = 1e-8,
    ):
        self.method = method
        self.p = p
        self.kernel = kernel
        self.gamma = gamma
        self.degree = degree
        self.coef0 = coef0
        self.lam = lam
        self.n_neighbors = n_neighbors
        self.ridge = ridge
        self.max_iter = max_iter
        self.tol = tol

    def _make_kernel(self, sample_sets) -> Kernel:
        if self.kernel == "linear":
            return LinearKernel()
        if self.kernel == "polynomial":
            return PolynomialKernel(degree=self.degree, offset=self.coef0)
        if self.kernel == "gaussian":
            gamma = self.gamma if self.gamma is not None else median_gamma(sample_sets)
            return GaussianKernel(gamma=gamma)
        raise ValueError(f"unknown kernel {self.kernel!r}")

    def fit(self, X, y=None):
        sets = as_sample_sets(X)
        labels = None if y is None else check_labels(y, len(sets))
        self.kernel_ = self._make_kernel(sets)
        self.dictionary_ = build_kernel_dictionary(sets, self.p, self.kernel_, labels)
        return self

    def _encode(self, X):
        check_is_fitted(self, "dictionary_")
        sets = as_sample_sets(X)
        queries = [gram_basis(s, self.p, self.kernel_) for s in sets]
        solver = _solver(self.max_iter, self.tol)
        if self.method == "kgsc":
            from .kernels import kgsc_encode_many

            codes, flags = kgsc_encode_many(self.dictionary_, queries, self.lam, solver)
        elif self.method == "kglc":
            from .kernels import kglc_encode

            codes = np.stack(
                [
                    kglc_encode(
                        self.dictionary_, q, self.n_neighbors, self.ridge, solver
                    ).coeffs
                    for q in queries
                ]
            )
            flags = np.ones(len(queries), dtype=bool)
        else:
            raise ValueError(f"unknown kernel coding method {self.method!r}")
        sims = self.dictionary_.similarity_matrix(queries)
        return codes, flags, sims

    def transform(self, X):
        codes, _, _ = self._encode(X)
        return codes


class GrassmannDictionaryLearning(BaseEstimator, TransformerMixin):
    """Learn a compact dictionary of subspaces, then code against it.

    fit(X) runs the alternating learner on a sequence of d x p bases and
    exposes the result as ``dictionary_`` plus the convergence ``trace_``;
    transform(X) codes new subspaces with the same coding method used
    while learning.
    """

    def __init__(
        self,
        n_atoms: int = 8,
        n_iter: int = 15,
        lam: float = 0.1,
        method: str = "gsc",
        n_neighbors: int = 5,
        ridge: float = 1e-6,
        tol: float = 1e-6,
        random_state: int | None = 0,
        max_iter: int = 10000,
        solver_tol: float = 1e-8,
    ):
        self.n_atoms = n_atoms
        self.n_iter = n_iter
        self.lam = lam
        self.method = method
        self.n_neighbors = n_neighbors
        self.ridge = ridge
        self.tol = tol
        self.random_state = random_state
        self.max_iter = max_iter
        self.solver_tol = solver_tol

    def _config(self, p: int | None = None) -> DLConfig:
        return DLConfig(
            n_atoms=self.n_atoms,
            n_iter=self.n_iter,
            lam=self.lam,
            method=self.method,
            n_neighbors=self.n_neighbors,
            ridge=self.ridge,
            seed=self.random_state,
            tol=self.tol,
            p=p,
            solver=_solver(self.max_iter, self.solver_tol),
        )

    def fit(self, X, y=None):
        train = as_grassmann_points(X)
        self.dictionary_, self.trace_ = gdl_learn(train, self._config())
        return self

    def transform(self, X):
        check_is_fitted(self, "dictionary_")
        queries = as_grassmann_points(X)
        spec = CodingSpec(
            method=self.method,
            lam=self.lam,
            n_neighbors=min(self.n_neighbors, len(self.dictionary_)),
            ridge=self.ridge,
            solver=_solver(self.max_iter, self.solver_tol),
        )
        codes, _, _ = encode_dataset(self.dictionary_, queries, spec)
        return codes


class KernelGrassmannDictionaryLearning(BaseEstimator, TransformerMixin):
    """Kernelized dictionary learning over raw d x q_i sample sets."""

    def __init__(
        self,
        n_atoms: int = 8,
        p: int = 2,
        n_iter: int = 15,
        lam: float = 0.1,
        method: str = "gsc",
        n_neighbors: int = 5,
        ridge: float = 1e-6,
        kernel: str = "gaussian",
        gamma: float | None = None,
        degree: int = 3,
        coef0: float = 1.0,
        tol: float = 1e-6,
        random_state: int | None = 0,
        max_iter: int = 10000,
        solver_tol: float = 1e-8,
    ):
        self.n_atoms = n_atoms
        self.p = p
        self.n_iter = n_iter
        self.lam = lam
        self.method = method
        self.n_neighbors = n_neighbors
        self.ridge = ridge
        self.kernel = kernel
        self.gamma = gamma
        self.degree = degree
        self.coef0 = coef0
        self.tol = tol
        self.random_state = random_state
        self.max_iter = max_iter
        self.solver_tol = solver_tol

    def fit(self, X, y=None):
        sets = as_sample_sets(X)
        maker = KernelGrassmannCoder(
            kernel=self.kernel, gamma=self.gamma, degree=self.degree, coef0=self.coef0
        )
        self.kernel_ = maker._make_kernel(sets)
        cfg = DLConfig(
            n_atoms=self.n_atoms,
            n_iter=self.n_iter,
            lam=self.lam,
            method=self.method,
            n_neighbors=self.n_neighbors,
            ridge=self.ridge,
            seed=self.random_state,
            tol=self.tol,
            p=self.p,
            solver=_solver(self.max_iter, self.solver_tol),
        )
        self.dictionary_, self.trace_ = kgdl_learn(sets, self.kernel_, cfg)
        return self

    def transform(self, X):
        check_is_fitted(self, "dictionary_")
        sets = as_sample_sets(X)
        queries = [gram_basis(s, self.p, self.kernel_) for s in sets]
        solver = _solver(self.max_iter, self.solver_tol)
        if self.method == "gsc":
            from .kernels import kgsc_encode_many

            codes, _ = kgsc_encode_many(self.dictionary_, queries, self.lam, solver)
            return codes
        from .kernels import kglc_encode

        n_lc = min(self.n_neighbors, len(self.dictionary_))
        return np.stack(
            [
                kglc_encode(self.dictionary_, q, n_lc, self.ridge, solver).coeffs
                for q in queries
            ]
        )
