"""Convex subproblem solvers shared by every coding path.

Two problems appear throughout: the l1-regularized least squares
min_y ||x - A y||^2 + lam ||y||_1 (solved by accelerated proximal
gradient) and the affine-constrained local system min_y y^T B y subject
to 1^T y = 1 (solved in closed form through B yhat = 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Singular

CONDITION_LIMIT = 1e14


@dataclass(frozen=True)
class SolverConfig:
    """Iteration cap, optimality tolerance and reserved RNG seed."""

    max_iter: int = 10000
    tol: float = 1e-8
    seed: int | None = None

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")


DEFAULT_SOLVER = SolverConfig()


@dataclass(frozen=True)
class LassoProblem:
    """min_y ||target - design @ y||^2 + lam * ||y||_1 (no 1/2 factor)."""

    design: np.ndarray
    target: np.ndarray
    lam: float

    def __post_init__(self):
        design = np.asarray(self.design, dtype=float)
        target = np.asarray(self.target, dtype=float)
        if design.ndim != 2:
            raise ValueError(f"design must be 2-D, got shape {design.shape}")
        if target.shape != (design.shape[0],):
            raise ValueError(
                f"target length {target.shape} incompatible with design {design.shape}"
            )
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "target", target)


@dataclass
class LassoResult:
    coef: np.ndarray
    converged: bool
    n_iter: int
    objective: float


def soft_threshold(x: np.ndarray, t: float | np.ndarray) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _kkt_violation(grad: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """Per-coordinate distance from the subgradient optimality condition.

    grad is the smooth gradient 2 A^T (A y - x). At an optimum,
    |grad_j| <= lam on the inactive set and grad_j = -lam * sign(y_j) on
    the active set.
    """
    inactive = np.maximum(np.abs(grad) - lam, 0.0)
    active = np.abs(grad + lam * np.sign(y))
    return np.where(y == 0.0, inactive, active)


def lasso_solve_batch(
    design: np.ndarray,
    targets: np.ndarray,
    lam: float,
    config: SolverConfig = DEFAULT_SOLVER,
) -> tuple[np.ndarray, np.ndarray, int]:
    """FISTA on min ||x_b - A y_b||^2 + lam ||y_b||_1 for every column b.

    All columns share the design matrix, so one BLAS product (Gram @ y) per
    iteration serves the whole batch; the extrapolated point reuses cached
    products. The step starts at the inverse Lipschitz constant and backs
    off per column if the quadratic majorization ever fails numerically.
    Momentum is reset on any column whose objective would increase, which
    keeps every column's objective trajectory non-increasing. Converged
    columns are compacted out of the working set. Returns (coefs N x B,
    converged flags B, iterations used).
    """
    a = np.asarray(design, dtype=float)
    x = np.atleast_2d(np.asarray(targets, dtype=float))
    if x.shape[0] != a.shape[0]:
        x = x.T
    if x.shape[0] != a.shape[0]:
        raise ValueError(f"targets {targets.shape} incompatible with design {a.shape}")
    n = a.shape[1]
    b = x.shape[1]

    gram = a.T @ a                       # N x N
    atx_full = a.T @ x                   # N x B
    xsq_full = np.sum(x * x, axis=0)     # B

    # exact Lipschitz constant of the gradient 2(Gram y - A^T x)
    lip = 2.0 * float(np.linalg.eigvalsh(gram)[-1]) if n > 0 else 0.0
    if lip <= 0.0:
        return np.zeros((n, b)), np.ones(b, dtype=bool), 0

    out_y = np.zeros((n, b))
    out_conv = np.zeros(b, dtype=bool)

    idx = np.arange(b)                   # active slot -> original column
    atx = atx_full
    xsq = xsq_full
    y = np.zeros((n, b))
    gy = np.zeros((n, b))                # gram @ y, cached
    y_prev = y
    gy_prev = gy
    t_mom = np.ones(b)
    step = np.full(b, 1.0 / lip)
    obj = xsq + 0.0                      # objective at y = 0

    def l1(yy):
        return np.sum(np.abs(yy), axis=0)

    it = 0
    for it in range(1, config.max_iter + 1):
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom**2))
        beta = (t_mom - 1.0) / t_next
        z = y + beta * (y - y_prev)
        gz = gy + beta * (gy - gy_prev)
        grad_z = 2.0 * (gz - atx)
        cand = soft_threshold(z - step * grad_z, lam * step)
        gcand = gram @ cand

        # quadratic parts, all from cached products
        f_cand = xsq - 2.0 * np.sum(cand * atx, axis=0) + np.sum(cand * gcand, axis=0)
        f_z = xsq - 2.0 * np.sum(z * atx, axis=0) + np.sum(z * gz, axis=0)
        diff = cand - z
        bound = (
            f_z
            + np.sum(grad_z * diff, axis=0)
            + np.sum(diff * diff, axis=0) / (2.0 * step)
        )
        back = f_cand > bound + 1e-12 * (1.0 + np.abs(bound))
        while np.any(back):
            step[back] *= 0.5
            cand[:, back] = soft_threshold(
                z[:, back] - step[back] * grad_z[:, back], lam * step[back]
            )
            gcand[:, back] = gram @ cand[:, back]
            f_cand[back] = (
                xsq[back]
                - 2.0 * np.sum(cand[:, back] * atx[:, back], axis=0)
                + np.sum(cand[:, back] * gcand[:, back], axis=0)
            )
            diff_b = cand[:, back] - z[:, back]
            bound_b = (
                f_z[back]
                + np.sum(grad_z[:, back] * diff_b, axis=0)
                + np.sum(diff_b * diff_b, axis=0) / (2.0 * step[back])
            )
            still = f_cand[back] > bound_b + 1e-12 * (1.0 + np.abs(bound_b))
            nxt = np.zeros_like(back)
            nxt[np.flatnonzero(back)[still]] = True
            back = nxt

        obj_cand = f_cand + lam * l1(cand)
        worse = obj_cand > obj
        if np.any(worse):
            # monotone restart: plain proximal step from y, guaranteed by
            # the majorization bound not to increase the objective
            grad_y = 2.0 * (gy[:, worse] - atx[:, worse])
            cand[:, worse] = soft_threshold(
                y[:, worse] - step[worse] * grad_y, lam * step[worse]
            )
            gcand[:, worse] = gram @ cand[:, worse]
            fw = (
                xsq[worse]
                - 2.0 * np.sum(cand[:, worse] * atx[:, worse], axis=0)
                + np.sum(cand[:, worse] * gcand[:, worse], axis=0)
            )
            obj_cand[worse] = fw + lam * l1(cand[:, worse])
            t_next[worse] = 1.0

        y_prev, gy_prev = y, gy
        y, gy = cand, gcand
        obj = np.minimum(obj, obj_cand)
        t_mom = t_next

        grad = 2.0 * (gy - atx)
        done = np.max(_kkt_violation(grad, y, lam), axis=0) <= config.tol
        if np.any(done):
            out_y[:, idx[done]] = y[:, done]
            out_conv[idx[done]] = True
            keep = ~done
            if not np.any(keep):
                return out_y, out_conv, it
            idx = idx[keep]
            atx = atx[:, keep]
            xsq = xsq[keep]
            y = y[:, keep]
            gy = gy[:, keep]
            y_prev = y_prev[:, keep]
            gy_prev = gy_prev[:, keep]
            t_mom = t_mom[keep]
            step = step[keep]
            obj = obj[keep]

    out_y[:, idx] = y
    return out_y, out_conv, it


def lasso_solve(prob: LassoProblem, config: SolverConfig = DEFAULT_SOLVER) -> LassoResult:
    """Solve one lasso instance; see :func:`lasso_solve_batch`.

    When the iteration cap is reached before the subgradient condition
    holds within ``config.tol``, the best iterate is returned with
    ``converged=False`` rather than raising.
    """
    coefs, flags, n_iter = lasso_solve_batch(
        prob.design, prob.target[:, None], prob.lam, config
    )
    coef = coefs[:, 0]
    resid = prob.target - prob.design @ coef
    obj = float(resid @ resid + prob.lam * np.sum(np.abs(coef)))
    return LassoResult(coef=coef, converged=bool(flags[0]), n_iter=n_iter, objective=obj)


def affine_local_solve(b_mat: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    """Weights of the affine-constrained local system.

    Solves (B + ridge * tr(B)/k * I) yhat = 1 and rescales yhat to sum to
    one, the Lagrangian solution of min y^T B y s.t. 1^T y = 1. The ridge
    is relative to tr(B)/k so the output is invariant to uniform positive
    scaling of B. With k = 1 the constraint fixes y = 1 regardless of B.
    """
    b_mat = np.asarray(b_mat, dtype=float)
    if b_mat.ndim != 2 or b_mat.shape[0] != b_mat.shape[1]:
        raise ValueError(f"B must be square, got shape {b_mat.shape}")
    k = b_mat.shape[0]
    if k == 1:
        return np.array([1.0])
    reg = b_mat + (ridge * np.trace(b_mat) / k) * np.eye(k)
    cond = np.linalg.cond(reg)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise Singular(
            "local system is numerically singular; raise the ridge parameter"
        )
    yhat = np.linalg.solve(reg, np.ones(k))
    total = yhat.sum()
    if abs(total) < 1e-300:
        raise Singular("local weights sum to zero; affine rescale impossible")
    return yhat / total
