"""Alternating dictionary learning over Grassmann atoms.

Each iteration codes the training set against the frozen dictionary, then
sweeps the atoms in ascending index order (Gauss-Seidel: each update sees
the atoms already refreshed this sweep). The per-atom subproblem has a
closed form: with codes fixed, the reconstruction term is
const - 2 <S_r, Dhat_r>, so the optimal atom is the manifold projection of
the residual accumulation S_r. In the kernel variant the same projection
becomes a generalized eigenproblem against the support Gram matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .coding import (
    GrassmannDictionary,
    build_dictionary,
    glc_encode,
    gsc_encode_many,
)
from .errors import RankDeficient
from .geometry import GrassmannPoint, chordal_distance, proj_to_manifold
from .kernels import (
    Kernel,
    KernelDictionary,
    KernelSubspace,
    gram_basis,
    kernel_subspace_inner,
    kgsc_encode_many,
    kglc_encode,
)
from .solvers import DEFAULT_SOLVER, SolverConfig

SUPPORT_RTOL = 1e-6
MAX_SUPPORT = 50
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class DLConfig:
    """Dictionary size, iteration budget and coding parameters."""

    n_atoms: int
    n_iter: int = 15
    lam: float = 0.1
    method: str = "gsc"            # coding step: "gsc" or "glc"
    n_neighbors: int = 5
    ridge: float = 1e-6
    seed: int | None = 0
    tol: float = 1e-6              # early-exit threshold on objective improvement
    p: int | None = None           # subspace order (kernel learning only)
    solver: SolverConfig = field(default_factory=lambda: DEFAULT_SOLVER)

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be >= 1")
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        if self.method not in ("gsc", "glc"):
            raise ValueError(f"unknown coding method {self.method!r}")


@dataclass
class DLTrace:
    """Convergence diagnostics, one entry per half-step or iteration."""

    coding_objective: list[float] = field(default_factory=list)
    update_objective: list[float] = field(default_factory=list)
    atom_change: list[float] = field(default_factory=list)
    reseeded: list[tuple[int, int]] = field(default_factory=list)
    rejected_updates: list[tuple[int, int]] = field(default_factory=list)
    eig_failures: list[tuple[int, int]] = field(default_factory=list)
    n_iter_run: int = 0
    early_stopped: bool = False

    @property
    def objective(self) -> list[float]:
        """Interleaved (coding, update) objective values in time order."""
        out: list[float] = []
        for c, u in zip(self.coding_objective, self.update_objective):
            out.extend((c, u))
        return out

    @property
    def final_objective(self) -> float:
        return self.update_objective[-1]


def dl_objective(
    dictionary: GrassmannDictionary | KernelDictionary,
    train,
    codes: np.ndarray,
    lam: float,
) -> float:
    """Total coding cost sum_i ||Xhat_i - sum_j y_ij Dhat_j||_F^2 + lam |y_i|_1.

    Evaluated through the similarity quadratic form
    p + y^T K y - 2 y^T k_i, never through d x d matrices.
    """
    codes = np.asarray(codes, dtype=float)
    sims = dictionary.similarity_matrix(train)              # m x N
    p = dictionary.p
    quad = np.einsum("mi,ij,mj->m", codes, dictionary.gram, codes)
    recon = p + quad - 2.0 * np.sum(codes * sims, axis=1)
    return float(np.sum(recon) + lam * np.sum(np.abs(codes)))


def _penalty_lam(cfg: DLConfig) -> float:
    # the l1 penalty only enters the objective for the sparse coding step
    return cfg.lam if cfg.method == "gsc" else 0.0


def _code_training_set(
    dictionary: GrassmannDictionary, train, cfg: DLConfig
) -> np.ndarray:
    if cfg.method == "gsc":
        codes, _ = gsc_encode_many(dictionary, train, cfg.lam, cfg.solver)
        return codes
    n_lc = min(cfg.n_neighbors, len(dictionary))
    rows = [
        glc_encode(dictionary, x, n_lc, cfg.ridge, cfg.solver).coeffs
        for x in train
    ]
    return np.stack(rows)


def _residuals(dictionary, train, codes: np.ndarray) -> np.ndarray:
    sims = dictionary.similarity_matrix(train)
    quad = np.einsum("mi,ij,mj->m", codes, dictionary.gram, codes)
    return dictionary.p + quad - 2.0 * np.sum(codes * sims, axis=1)


def gdl_learn(
    train: Sequence[GrassmannPoint], cfg: DLConfig
) -> tuple[GrassmannDictionary, DLTrace]:
    """Learn a dictionary of ``cfg.n_atoms`` subspaces from training points.

    Initialization picks atoms uniformly at random (without replacement)
    from the training set, driven by ``cfg.seed``. Atoms that receive no
    coefficient mass, or whose residual accumulation S_r vanishes, are
    re-seeded from the worst-reconstructed training sample and flagged in
    the trace. Stops early once the objective improves by less than
    ``cfg.tol`` for three consecutive iterations.
    """
    train = list(train)
    m = len(train)
    if m < cfg.n_atoms:
        raise ValueError(f"need at least n_atoms={cfg.n_atoms} samples, got {m}")
    d, p = train[0].shape

    rng = np.random.default_rng(cfg.seed)
    idx = rng.choice(m, size=cfg.n_atoms, replace=False)
    atoms = [train[i] for i in idx]

    # stacked training bases: sum_i w_i Xhat_i = (W * rep(w)) W^T
    w_train = np.concatenate([x.basis for x in train], axis=1)    # d x (m p)

    trace = DLTrace()
    lam_pen = _penalty_lam(cfg)
    dictionary = build_dictionary(atoms)
    slack = 0
    for it in range(cfg.n_iter):
        codes = _code_training_set(dictionary, train, cfg)
        trace.coding_objective.append(dl_objective(dictionary, train, codes, lam_pen))
        residuals = _residuals(dictionary, train, codes)

        atom_gram = codes.T @ codes                                # N x N
        atom_bases = np.concatenate([a.basis for a in atoms], axis=1)
        max_change = 0.0
        new_atoms = list(atoms)
        for r in range(cfg.n_atoms):
            col = codes[:, r]
            if np.max(np.abs(col)) == 0.0:
                worst = int(np.argmax(residuals))
                new_atoms[r] = train[worst]
                atom_bases[:, r * p:(r + 1) * p] = train[worst].basis
                trace.reseeded.append((it, r))
                max_change = max(max_change, chordal_distance(atoms[r], new_atoms[r]))
                continue

            s_r = (w_train * np.repeat(col, p)) @ w_train.T
            g = atom_gram[r].copy()
            g[r] = 0.0
            s_r -= (atom_bases * np.repeat(g, p)) @ atom_bases.T

            scale = max(1.0, float(np.abs(col).sum()) * p)
            if np.linalg.norm(s_r) <= 1e-12 * scale:
                worst = int(np.argmax(residuals))
                new_atoms[r] = train[worst]
                trace.reseeded.append((it, r))
            else:
                new_atoms[r] = proj_to_manifold(s_r, p)
            atom_bases[:, r * p:(r + 1) * p] = new_atoms[r].basis
            max_change = max(max_change, chordal_distance(atoms[r], new_atoms[r]))

        atoms = new_atoms
        dictionary = build_dictionary(atoms)
        trace.update_objective.append(dl_objective(dictionary, train, codes, lam_pen))
        trace.atom_change.append(max_change)
        trace.n_iter_run = it + 1

        if it > 0:
            improvement = trace.update_objective[-2] - trace.update_objective[-1]
            slack = slack + 1 if improvement < cfg.tol else 0
            if slack >= 3:
                trace.early_stopped = True
                break
    return dictionary, trace


def _kernel_code_training_set(
    kdict: KernelDictionary, subspaces: Sequence[KernelSubspace], cfg: DLConfig
) -> np.ndarray:
    if cfg.method == "gsc":
        codes, _ = kgsc_encode_many(kdict, subspaces, cfg.lam, cfg.solver)
        return codes
    n_lc = min(cfg.n_neighbors, len(kdict))
    rows = [
        kglc_encode(kdict, x, n_lc, cfg.ridge, cfg.solver).coeffs
        for x in subspaces
    ]
    return np.stack(rows)


def _atom_score(
    candidate: KernelSubspace,
    sample_subspaces: Sequence[KernelSubspace],
    atoms: Sequence[KernelSubspace],
    col: np.ndarray,
    cross: np.ndarray,
    r: int,
) -> float:
    """<Gamma, Psihat(candidate)> for the per-atom objective comparison."""
    score = 0.0
    for i, yi in enumerate(col):
        if yi != 0.0:
            score += yi * kernel_subspace_inner(sample_subspaces[i], candidate)
    for j, gj in enumerate(cross):
        if j != r and gj != 0.0:
            score -= gj * kernel_subspace_inner(atoms[j], candidate)
    return score


def kgdl_learn(
    train: Sequence[np.ndarray], kernel: Kernel, cfg: DLConfig
) -> tuple[KernelDictionary, DLTrace]:
    """Kernelized dictionary learning from raw d x q_i sample sets.

    ``cfg.p`` fixes the RKHS subspace order. Atom r is supported on the
    sample sets whose code magnitude on r exceeds 1e-6 of the largest
    (capped at the 50 strongest); the refreshed coefficients come from the
    top-p generalized eigenvectors of S_r^Psi against the support Gram
    matrix, computed through an eigenvalue whitening that tolerates rank
    deficiency. An update that would worsen the per-atom objective (the
    support restriction makes this possible) is discarded and the previous
    atom kept; such events land in ``trace.rejected_updates``.
    """
    if cfg.p is None:
        raise ValueError("cfg.p (subspace order) is required for kernel learning")
    p = cfg.p
    train = [np.asarray(x, dtype=float) for x in train]
    m = len(train)
    if m < cfg.n_atoms:
        raise ValueError(f"need at least n_atoms={cfg.n_atoms} samples, got {m}")

    subspaces = [gram_basis(x, p, kernel) for x in train]
    rng = np.random.default_rng(cfg.seed)
    idx = rng.choice(m, size=cfg.n_atoms, replace=False)
    atoms: list[KernelSubspace] = [subspaces[i] for i in idx]

    trace = DLTrace()
    lam_pen = _penalty_lam(cfg)
    kdict = KernelDictionary(atoms)
    slack = 0
    for it in range(cfg.n_iter):
        codes = _kernel_code_training_set(kdict, subspaces, cfg)
        trace.coding_objective.append(
            dl_objective(kdict, subspaces, codes, lam_pen)
        )
        residuals = _residuals(kdict, subspaces, codes)

        atom_gram = codes.T @ codes
        max_change = 0.0
        for r in range(cfg.n_atoms):
            col = codes[:, r]
            peak = np.max(np.abs(col))
            if peak == 0.0:
                worst = int(np.argmax(residuals))
                atoms[r] = subspaces[worst]
                trace.reseeded.append((it, r))
                continue

            strong = np.flatnonzero(np.abs(col) > SUPPORT_RTOL * peak)
            if strong.size > MAX_SUPPORT:
                strong = strong[np.argsort(-np.abs(col[strong]), kind="stable")]
                strong = np.sort(strong[:MAX_SUPPORT])
            support = np.hstack([train[i] for i in strong])

            try:
                new_atom = _kernel_atom_update(
                    support, kernel, p, subspaces, atoms, col, atom_gram[r], r
                )
            except RankDeficient:
                worst = int(np.argmax(residuals))
                atoms[r] = subspaces[worst]
                trace.reseeded.append((it, r))
                continue
            except np.linalg.LinAlgError:
                # eigensolver did not converge: keep the old atom, flag it
                trace.eig_failures.append((it, r))
                continue

            old_inner = 2.0 * kernel_subspace_inner(atoms[r], new_atom)
            score_new = _atom_score(new_atom, subspaces, atoms, col, atom_gram[r], r)
            score_old = _atom_score(atoms[r], subspaces, atoms, col, atom_gram[r], r)
            if score_new >= score_old - 1e-12 * max(1.0, abs(score_old)):
                change = float(np.sqrt(max(2.0 * p - old_inner, 0.0)))
                atoms[r] = new_atom
                max_change = max(max_change, change)
            else:
                trace.rejected_updates.append((it, r))

        kdict = KernelDictionary(atoms)
        trace.update_objective.append(dl_objective(kdict, subspaces, codes, lam_pen))
        trace.atom_change.append(max_change)
        trace.n_iter_run = it + 1

        if it > 0:
            improvement = trace.update_objective[-2] - trace.update_objective[-1]
            slack = slack + 1 if improvement < cfg.tol else 0
            if slack >= 3:
                trace.early_stopped = True
                break
    return kdict, trace


def _kernel_atom_update(
    support: np.ndarray,
    kernel: Kernel,
    p: int,
    sample_subspaces: Sequence[KernelSubspace],
    atoms: Sequence[KernelSubspace],
    col: np.ndarray,
    cross: np.ndarray,
    r: int,
) -> KernelSubspace:
    """Top-p generalized eigenvectors of S_r^Psi v = lambda K(D_r, D_r) v.

    The pencil is whitened through the eigendecomposition of the support
    Gram matrix (eigenvalues at or below 1e-10 of the largest are dropped),
    which keeps the orthogonality constraint A^T K A = I exact even when
    the support samples are linearly dependent in the RKHS.
    """
    k_rr = kernel(support, support)
    k_rr = 0.5 * (k_rr + k_rr.T)
    eigvals, eigvecs = np.linalg.eigh(k_rr)
    eigvals, eigvecs = eigvals[::-1], eigvecs[:, ::-1]
    keep = eigvals > RANK_RTOL * max(eigvals[0], 1e-300)
    if np.count_nonzero(keep) < p:
        raise RankDeficient("support Gram matrix has rank below the subspace order")
    whiten = eigvecs[:, keep] / np.sqrt(eigvals[keep])[None, :]

    q_r = support.shape[1]
    s_psi = np.zeros((q_r, q_r))
    for i, yi in enumerate(col):
        if yi == 0.0:
            continue
        x = sample_subspaces[i]
        c = kernel(support, x.samples) @ x.coeff          # q_r x p
        s_psi += yi * (c @ c.T)
    for j, gj in enumerate(cross):
        if j == r or gj == 0.0:
            continue
        dj = atoms[j]
        c = kernel(support, dj.samples) @ dj.coeff
        s_psi -= gj * (c @ c.T)

    reduced = whiten.T @ s_psi @ whiten
    reduced = 0.5 * (reduced + reduced.T)
    vals, vecs = np.linalg.eigh(reduced)
    coeff = whiten @ vecs[:, ::-1][:, :p]
    ortho_err = np.max(np.abs(coeff.T @ k_rr @ coeff - np.eye(p)))
    if ortho_err > 1e-6:
        raise RankDeficient(
            f"refreshed atom violates A^T K A = I (deviation {ortho_err:.3e})"
        )
    return KernelSubspace(support, coeff, vals[::-1][:p].copy(), kernel)
