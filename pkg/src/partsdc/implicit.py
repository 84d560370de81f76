"""Dense linear and Newton solvers used by the stage solves.

The solve matrix of a stage is ``M^i - delta * dr^i/du^i``, which stays
invertible even for singular mass matrices, so everything here is plain
dense algebra: LU with partial pivoting, damped-free Newton, and
eigenvalue-based spectral radii (LAPACK's Hessenberg QR with implicit
shifts underneath).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import NewtonDivergenceError, SingularMatrixError

_PIVOT_RTOL = 1e-14


@dataclass
class NewtonConfig:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    max_iter: int = 30
    fd_step: float = 1e-6

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


def lu_factor(A: np.ndarray):
    """Factor A, rejecting pivots below 1e-14 * ||A||_inf."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    scale = np.max(np.abs(A)) if A.size else 0.0
    pivots = np.abs(np.diag(lu))
    if scale == 0.0 or np.min(pivots) < _PIVOT_RTOL * scale:
        raise SingularMatrixError(
            f"pivot {np.min(pivots):.3e} below threshold "
            f"{_PIVOT_RTOL * scale:.3e}"
        )
    return lu, piv


def lu_apply(factor, b: np.ndarray) -> np.ndarray:
    return scipy.linalg.lu_solve(factor, np.asarray(b, dtype=float),
                                 check_finite=False)


def lu_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve Ax = b by partial-pivoting LU."""
    return lu_apply(lu_factor(A), b)


def fd_jacobian(F: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                fd_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian with steps fd_step * (1 + |x_j|)."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(F(x), dtype=float)
    J = np.empty((f0.size, x.size))
    for j in range(x.size):
        h = fd_step * (1.0 + abs(x[j]))
        up = x.copy()
        up[j] += h
        dn = x.copy()
        dn[j] -= h
        J[:, j] = (np.asarray(F(up)) - np.asarray(F(dn))) / (2.0 * h)
    return J


def newton_solve(F: Callable[[np.ndarray], np.ndarray],
                 J: Callable[[np.ndarray], np.ndarray] | None,
                 x0: np.ndarray,
                 cfg: NewtonConfig | None = None) -> tuple[np.ndarray, int]:
    """Solve F(x) = 0 by Newton iteration from ``x0``.

    Convergence is declared when the residual norm drops below
    ``abs_tol + rel_tol * ||F(x0)||`` or the update norm drops below
    ``abs_tol + rel_tol * ||x||``.  Without ``J``, a central-difference
    Jacobian is used.  Returns ``(x, iterations)``.
    """
    cfg = cfg or NewtonConfig()
    x = np.array(x0, dtype=float)
    f = np.asarray(F(x), dtype=float)
    f0_norm = float(np.linalg.norm(f))
    res_target = cfg.abs_tol + cfg.rel_tol * f0_norm
    res_norm = f0_norm
    for it in range(1, cfg.max_iter + 1):
        if res_norm <= res_target:
            return x, it - 1
        jac = fd_jacobian(F, x, cfg.fd_step) if J is None else \
            np.asarray(J(x), dtype=float)
        step = lu_solve(jac, -f)
        x = x + step
        if not np.all(np.isfinite(x)):
            raise NewtonDivergenceError(
                f"non-finite iterate after {it} iterations",
                residual_norm=res_norm, iterations=it)
        if np.linalg.norm(step) <= cfg.abs_tol + cfg.rel_tol * np.linalg.norm(x):
            return x, it
        f = np.asarray(F(x), dtype=float)
        res_norm = float(np.linalg.norm(f))
    if res_norm <= res_target:
        return x, cfg.max_iter
    raise NewtonDivergenceError(
        f"no convergence in {cfg.max_iter} iterations "
        f"(last residual norm {res_norm:.3e})",
        residual_norm=res_norm, iterations=cfg.max_iter)


def spectral_radius(A: np.ndarray, tol: float = 1e-8) -> float:
    """max |lambda| over the eigenvalues of a square matrix.

    ``tol`` documents the accuracy contract; the LAPACK QR eigensolver
    used here is well beyond it for the dense matrices in scope.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    return float(np.max(np.abs(np.linalg.eigvals(A))))
