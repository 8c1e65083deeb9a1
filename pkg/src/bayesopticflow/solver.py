"""Conjugate gradients and the linear solves built on it."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
import scipy.sparse as sp

from .exceptions import DimensionError, DomainError, NumericalBreakdown
from .grid import FlowSystem


@dataclass(frozen=True)
class CGConfig:
    tol: float = 1e-6
    max_iter: int = 500
    x0: np.ndarray | None = None

    def __post_init__(self):
        if not self.tol > 0:
            raise DomainError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise DomainError(f"max_iter must be >= 1, got {self.max_iter}")


@dataclass(frozen=True)
class TikhonovConfig:
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")


class CGResult(NamedTuple):
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool


def cg_solve(
    apply: Callable[[np.ndarray], np.ndarray],
    rhs,
    cfg: CGConfig = CGConfig(),
    callback: Callable[[int, np.ndarray, float], None] | None = None,
) -> CGResult:
    """Solve ``apply(x) = rhs`` for a symmetric positive definite operator.

    Stops when ``||r|| / ||rhs|| <= cfg.tol``. Hitting ``max_iter`` or a
    direction with ``p^T A p <= 0`` (operator singular along the Krylov
    space) returns the current iterate with ``converged=False``.

    ``callback(k, x, rel_residual)`` is invoked after every iteration.
    """
    b = np.asarray(rhs, dtype=float)
    bnorm = np.linalg.norm(b)
    if not np.isfinite(bnorm):
        raise NumericalBreakdown("non-finite right-hand side", 0)
    if bnorm == 0.0:
        return CGResult(np.zeros_like(b), 0, 0.0, True)

    if cfg.x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = np.array(cfg.x0, dtype=float)
        if x.shape != b.shape:
            raise DimensionError(f"x0 has shape {x.shape}, rhs has {b.shape}")
        r = b - apply(x)

    p = r.copy()
    rr = r @ r
    rel = np.sqrt(rr) / bnorm
    if rel <= cfg.tol:
        return CGResult(x, 0, float(rel), True)

    for k in range(1, cfg.max_iter + 1):
        Ap = apply(p)
        pAp = p @ Ap
        if not np.isfinite(pAp):
            raise NumericalBreakdown("non-finite curvature p^T A p", k)
        if pAp <= 0.0:
            return CGResult(x, k - 1, float(rel), False)
        step = rr / pAp
        x += step * p
        r -= step * Ap
        rr_new = r @ r
        if not np.isfinite(rr_new):
            raise NumericalBreakdown("non-finite residual", k)
        rel = np.sqrt(rr_new) / bnorm
        if callback is not None:
            callback(k, x, float(rel))
        if rel <= cfg.tol:
            return CGResult(x, k, float(rel), True)
        p *= rr_new / rr
        p += r
        rr = rr_new
    return CGResult(x, cfg.max_iter, float(rel), False)


def posterior_precision_apply(sys: FlowSystem, lam: float, delta: float, v) -> np.ndarray:
    """``(lam A^T A + delta L) v`` without forming the matrix."""
    v = np.asarray(v, dtype=float)
    if v.shape != (sys.n,):
        raise DimensionError(f"vector has shape {v.shape}, system has n={sys.n}")
    out = sys.apply_At(sys.apply_A(v))
    out *= lam
    if delta != 0.0:
        out += delta * (sys.L @ v)
    return out


def precision_matrix(sys: FlowSystem, lam: float, delta: float) -> sp.csr_matrix:
    """Assembled ``lam A^T A + delta L``; one sparse matvec per CG step."""
    indptr, indices, ata, l = sys.precision_pattern
    return sp.csr_matrix((lam * ata + delta * l, indices, indptr), shape=(sys.n, sys.n))


def tikhonov_solve(sys: FlowSystem, cfg: TikhonovConfig, cg: CGConfig = CGConfig()) -> CGResult:
    """Regularized estimate from ``(A^T A + alpha L) x = A^T b``."""
    rhs = sys.apply_At(sys.b)
    P = precision_matrix(sys, 1.0, cfg.alpha)
    return cg_solve(P.dot, rhs, cg)


def conditional_mean(sys: FlowSystem, lam: float, delta: float, cg: CGConfig = CGConfig()) -> CGResult:
    """Mean of ``x | lam, delta, b``: solves ``(lam A^T A + delta L) x = lam A^T b``."""
    rhs = lam * sys.apply_At(sys.b)
    P = precision_matrix(sys, lam, delta)
    return cg_solve(P.dot, rhs, cg)


def sample_conditional_x(
    sys: FlowSystem,
    lam: float,
    delta: float,
    cg: CGConfig,
    rng: np.random.Generator,
) -> CGResult:
    """One draw from ``N(P^{-1} lam A^T b, P^{-1})`` with ``P = lam A^T A + delta L``.

    The right-hand side is perturbed by ``w = sqrt(lam) A^T e1 + sqrt(delta) C^T e2``,
    which has covariance exactly ``P`` because ``C^T C = L``; solving
    ``P x = lam A^T b + w`` then gives the draw.
    """
    if not (lam > 0 and delta > 0):
        raise DomainError(f"lam and delta must be positive, got {lam}, {delta}")
    e1 = rng.standard_normal(sys.m)
    e2 = rng.standard_normal(4 * sys.m)
    w = np.sqrt(lam) * sys.apply_At(e1) + np.sqrt(delta) * (sys.Ct @ e2)
    rhs = lam * sys.apply_At(sys.b) + w
    return cg_solve(precision_matrix(sys, lam, delta).dot, rhs, cg)


def least_squares_dense(A, b) -> np.ndarray:
    """Minimum-norm least-squares solution through a truncated SVD pseudo-inverse.

    Meant as a test oracle for small dense problems.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    if A.shape[0] != b.shape[0]:
        raise DimensionError(f"A has {A.shape[0]} rows, b has {b.shape[0]}")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(A.shape[1])
    keep = s > 1e-12 * s[0]
    coef = (U[:, keep].T @ b) / s[keep]
    return Vt[keep].T @ coef
