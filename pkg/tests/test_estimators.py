import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from grasscode.estimators import (
    GrassmannCoder,
    GrassmannDictionaryLearning,
    KernelGrassmannCoder,
    KernelGrassmannDictionaryLearning,
)
from grasscode.evaluation import SyntheticSpec, generate_synthetic
from grasscode.geometry import random_point


@pytest.fixture
def dataset():
    spec = SyntheticSpec(n_classes=3, d=6, p=2, sigma=0.15,
                         n_dict_per_class=5, n_query_per_class=6, seed=2)
    ds = generate_synthetic(spec)
    atoms = [pt.basis for pt in ds.dict_points]
    queries = [pt.basis for pt in ds.query_points]
    return atoms, ds.dict_labels, queries, ds.query_labels


class TestGrassmannCoder:
    def test_sklearn_protocol(self):
        est = GrassmannCoder(method="glc", n_neighbors=3)
        params = est.get_params()
        assert params["method"] == "glc"
        est.set_params(lam=0.5)
        assert est.lam == 0.5
        cloned = clone(est)
        assert cloned.get_params()["n_neighbors"] == 3

    def test_fit_transform_shapes(self, dataset):
        atoms, labels, queries, _ = dataset
        est = GrassmannCoder(method="gsc", lam=0.05, max_iter=2000, tol=1e-6)
        codes = est.fit(atoms, labels).transform(queries)
        assert codes.shape == (len(queries), len(atoms))

    def test_predict_and_score(self, dataset):
        atoms, labels, queries, truth = dataset
        est = GrassmannCoder(method="gsc", lam=0.05, max_iter=2000, tol=1e-6)
        est.fit(atoms, labels)
        preds = est.predict(queries)
        assert preds.shape == (len(queries),)
        assert est.score(queries, truth) >= 0.9

    def test_predict_without_labels_raises(self, dataset):
        atoms, _, queries, _ = dataset
        est = GrassmannCoder().fit(atoms)
        with pytest.raises(NotFittedError):
            est.predict(queries)

    def test_transform_before_fit_raises(self, dataset):
        _, _, queries, _ = dataset
        with pytest.raises(NotFittedError):
            GrassmannCoder().transform(queries)

    def test_glc_rows_sum_to_one(self, dataset):
        atoms, labels, queries, _ = dataset
        est = GrassmannCoder(method="glc", n_neighbors=4).fit(atoms, labels)
        codes = est.transform(queries)
        assert np.allclose(codes.sum(axis=1), 1.0, atol=1e-10)

    def test_accepts_stacked_array(self, rng):
        stacked = np.stack([random_point(5, 2, rng).basis for _ in range(4)])
        est = GrassmannCoder(method="glc", n_neighbors=2).fit(stacked)
        codes = est.transform(stacked)
        assert codes.shape == (4, 4)


class TestKernelGrassmannCoder:
    def test_linear_reduction_to_explicit(self, dataset):
        atoms, labels, queries, _ = dataset
        explicit = GrassmannCoder(method="gsc", lam=0.05, max_iter=3000, tol=1e-7)
        kernelized = KernelGrassmannCoder(
            method="kgsc", p=2, kernel="linear", lam=0.05, max_iter=3000, tol=1e-7
        )
        c1 = explicit.fit(atoms, labels).transform(queries)
        c2 = kernelized.fit(atoms, labels).transform(queries)
        assert np.max(np.abs(c1 - c2)) <= 1e-6

    def test_gaussian_median_heuristic(self, dataset):
        atoms, labels, queries, truth = dataset
        est = KernelGrassmannCoder(method="kglc", p=2, kernel="gaussian", n_neighbors=3)
        est.fit(atoms, labels)
        assert est.kernel_.gamma > 0
        assert est.score(queries, truth) >= 0.8

    def test_sklearn_protocol(self):
        est = KernelGrassmannCoder(gamma=0.25)
        assert clone(est).get_params()["gamma"] == 0.25


class TestGrassmannDictionaryLearning:
    def test_fit_exposes_dictionary_and_trace(self, dataset):
        atoms, _, queries, _ = dataset
        est = GrassmannDictionaryLearning(
            n_atoms=4, n_iter=3, lam=0.05, random_state=0, max_iter=2000, solver_tol=1e-6
        )
        est.fit(atoms)
        assert len(est.dictionary_) == 4
        assert len(est.trace_.update_objective) == est.trace_.n_iter_run
        codes = est.transform(queries)
        assert codes.shape == (len(queries), 4)

    def test_clone_and_params(self):
        est = GrassmannDictionaryLearning(n_atoms=6, method="glc")
        assert clone(est).get_params()["n_atoms"] == 6

    def test_transform_before_fit_raises(self, dataset):
        _, _, queries, _ = dataset
        with pytest.raises(NotFittedError):
            GrassmannDictionaryLearning().transform(queries)


class TestKernelGrassmannDictionaryLearning:
    def test_fit_transform(self, dataset):
        atoms, _, queries, _ = dataset
        est = KernelGrassmannDictionaryLearning(
            n_atoms=3, p=2, n_iter=2, lam=0.05, kernel="gaussian", gamma=0.8,
            random_state=0, max_iter=2000, solver_tol=1e-6,
        )
        est.fit(atoms)
        codes = est.transform(queries)
        assert codes.shape == (len(queries), 3)
        diffs = np.diff(est.trace_.objective)
        assert np.all(diffs <= 1e-6)
