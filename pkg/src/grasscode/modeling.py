"""Subspace models for image sets and videos.

An orderless image set becomes the span of its top singular vectors; an
ordered sequence becomes the column space of the finite observability
matrix of a fitted linear dynamical system, which folds the dynamics into
the subspace descriptor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankDeficient, Singular
from .geometry import GrassmannPoint, orthonormalize

CONDITION_LIMIT = 1e12
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class ArmaParams:
    """Estimated linear dynamical system f(t) = C z(t), z(t+1) = A z(t).

    ``c_hat`` has orthonormal columns (left singular vectors of the
    observation matrix); ``a_hat`` is the n x n transition estimate.
    """

    a_hat: np.ndarray
    c_hat: np.ndarray

    @property
    def n(self) -> int:
        return self.a_hat.shape[0]

    @property
    def d(self) -> int:
        return self.c_hat.shape[0]


def appearance_subspace(data: np.ndarray, p: int) -> GrassmannPoint:
    """Order-p appearance model: orthonormalized column space of the frames."""
    return orthonormalize(data, p)


def fit_arma(data: np.ndarray, n: int) -> ArmaParams:
    """Least-squares ARMA estimate from a time-ordered d x tau frame matrix.

    With the thin SVD F = U S V^T truncated to order n, the measurement
    matrix is C = U and the transition matrix solves the one-step
    regression of the state sequence S V^T against itself shifted, written
    as A = S V^T O1 V (V^T O2 V)^{-1} S^{-1} with the shift/selector
    matrices O1 (subdiagonal ones) and O2 (identity minus the last
    diagonal entry).
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValueError(f"expected a 2-D frame matrix, got shape {data.shape}")
    tau = data.shape[1]
    if n < 1:
        raise ValueError("state order n must be >= 1")
    if tau < n + 1:
        raise ValueError(f"need at least n+1={n + 1} frames for state order {n}, got {tau}")
    if data.shape[0] < n:
        raise RankDeficient(f"ambient dimension {data.shape[0]} below state order {n}")
    u, s, vt = np.linalg.svd(data, full_matrices=False)
    if s[0] == 0.0 or s[n - 1] <= RANK_RTOL * s[0]:
        raise RankDeficient(f"frame matrix has numerical rank < {n}")
    u, s, v = u[:, :n], s[:n], vt[:n].T              # v is tau x n

    shift = np.eye(tau, k=-1)                        # ones on the subdiagonal
    keep = np.eye(tau)
    keep[-1, -1] = 0.0

    m2 = v.T @ keep @ v
    cond = np.linalg.cond(m2)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise Singular("state autocovariance V^T O2 V is numerically singular")
    m1 = v.T @ shift @ v
    a_hat = (s[:, None] * m1) @ np.linalg.solve(m2, np.diag(1.0 / s))
    return ArmaParams(a_hat=a_hat, c_hat=u)


def observability_subspace(params: ArmaParams, m_obs: int) -> GrassmannPoint:
    """Span of the stacked finite observability matrix [C; CA; ...; CA^(m-1)].

    The result lives on G(n, m_obs * d); with m_obs = 1 it reduces to the
    appearance model span(C).
    """
    if m_obs < 1:
        raise ValueError("m_obs must be >= 1")
    blocks = []
    block = params.c_hat
    for _ in range(m_obs):
        blocks.append(block)
        block = block @ params.a_hat
    stacked = np.vstack(blocks)
    try:
        return orthonormalize(stacked, params.n)
    except RankDeficient as exc:
        raise RankDeficient(
            f"observability matrix has rank < {params.n}: {exc}"
        ) from exc
