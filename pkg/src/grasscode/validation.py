"""Input validation helpers for the estimator and file layers.

Subspace inputs arrive as d x p arrays from files or user code; they are
accepted when within 1e-6 of orthonormality and snapped back onto the
manifold, so harmless rounding from round-tripped CSV files never
poisons downstream invariants.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch
from .geometry import GrassmannPoint, orthonormalize

SUBSPACE_TOL = 1e-6


def check_subspace(arr, tol: float = SUBSPACE_TOL) -> GrassmannPoint:
    """Validate a near-orthonormal basis and re-orthonormalize it."""
    if isinstance(arr, GrassmannPoint):
        return arr
    arr = np.asarray(arr, dtype=float)
    if arr.ndim != 2:
        raise DimensionMismatch(f"subspace basis must be 2-D, got shape {arr.shape}")
    d, p = arr.shape
    if p > d:
        raise DimensionMismatch(f"basis has more columns than rows: {arr.shape}")
    gram = arr.T @ arr
    err = np.max(np.abs(gram - np.eye(p)))
    if err > tol:
        raise ValueError(
            f"matrix is not orthonormal within {tol:g} (deviation {err:.3e}); "
            "not a valid subspace basis"
        )
    return orthonormalize(arr, p)


def as_grassmann_points(data, tol: float = SUBSPACE_TOL) -> list[GrassmannPoint]:
    """Coerce a sequence (or stacked 3-D array) of bases into points."""
    if isinstance(data, np.ndarray) and data.ndim == 3:
        data = list(data)
    points = [check_subspace(item, tol) for item in data]
    first = points[0]
    for pt in points:
        if pt.shape != first.shape:
            raise DimensionMismatch(
                f"all subspaces must share (d, p): {pt.shape} vs {first.shape}"
            )
    return points


def as_sample_sets(data) -> list[np.ndarray]:
    """Coerce a sequence of raw d x q_i sample matrices (shared d)."""
    sets = []
    for item in data:
        arr = np.asarray(item, dtype=float)
        if arr.ndim != 2:
            raise DimensionMismatch(f"sample set must be 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("sample set contains non-finite entries")
        sets.append(arr)
    d = sets[0].shape[0]
    for arr in sets:
        if arr.shape[0] != d:
            raise DimensionMismatch(
                f"sample sets must share the ambient dimension: {arr.shape[0]} vs {d}"
            )
    return sets


def check_labels(labels, n: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise DimensionMismatch(f"expected {n} labels, got shape {labels.shape}")
    return labels
