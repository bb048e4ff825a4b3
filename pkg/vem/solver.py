"""Jacobi-preconditioned conjugate gradients and an SPD check by inverse iteration."""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import eigsh

logger = logging.getLogger(__name__)

DENSE_EIGEN_LIMIT = 2000


class SolverError(Exception):
    """Raised when the iterative solver fails to reach the requested tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"{message} (relative residual {residual:.3e} after {iterations} iterations)")


@dataclass
class SolveStats:
    """Outcome of one iterative solve."""
    iterations: int
    residual: float
    converged: bool


def pcg(matrix, rhs: np.ndarray, tol: float = 1e-12, max_iter: int = 20000,
        x0: Optional[np.ndarray] = None):
    """
    Solve an SPD system with CG and a diagonal preconditioner.

    Convergence is declared when ||b - A x|| <= tol * ||b||. Returns the
    solution and its SolveStats; raises SolverError otherwise.
    """
    matrix = sparse.csr_matrix(matrix)
    rhs = np.asarray(rhs, dtype=float)
    n = len(rhs)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    norm_b = float(np.linalg.norm(rhs))
    if n == 0 or norm_b == 0.0:
        return np.zeros(n), SolveStats(iterations=0, residual=0.0, converged=True)

    diagonal = matrix.diagonal()
    if np.any(diagonal <= 0.0):
        raise SolverError("Matrix has a non-positive diagonal entry", residual=1.0, iterations=0)
    inv_diag = 1.0 / diagonal

    r = rhs - matrix @ x
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    residual = float(np.linalg.norm(r)) / norm_b
    iterations = 0
    while residual > tol:
        if iterations >= max_iter:
            raise SolverError("Conjugate gradients did not converge", residual=residual, iterations=iterations)
        ap = matrix @ p
        curvature = p @ ap
        if not np.isfinite(curvature) or curvature <= 0.0:
            raise SolverError("Non-positive curvature; matrix is not positive definite",
                              residual=residual, iterations=iterations)
        alpha = rz / curvature
        x += alpha * p
        r -= alpha * ap
        iterations += 1
        residual = float(np.linalg.norm(r)) / norm_b
        if not np.isfinite(residual):
            raise SolverError("Conjugate gradients diverged", residual=residual, iterations=iterations)
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    logger.debug(f"PCG converged in {iterations} iterations, residual {residual:.3e}")
    return x, SolveStats(iterations=iterations, residual=residual, converged=True)


def spd_check(matrix, tol: float = 1e-8, max_iter: int = 200, seed: int = 0) -> float:
    """
    Estimate of the smallest eigenvalue by inverse power iteration.

    Each step solves with PCG and updates the Rayleigh quotient. An empty
    matrix has no free DOFs and reports infinity. When PCG breaks down the
    matrix is not positive definite and the smallest eigenvalue is computed
    directly, so the reported value is <= 0 up to rounding.
    """
    matrix = sparse.csr_matrix(matrix, dtype=float)
    n = matrix.shape[0]
    if n == 0:
        return float("inf")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    estimate = float(x @ (matrix @ x))
    for step in range(max_iter):
        try:
            y, _ = pcg(matrix, x, tol=1e-10, max_iter=max(10 * n, 1000))
        except SolverError as e:
            logger.warning(f"Inverse iteration stopped at step {step}: {e}")
            return _smallest_eigenvalue(matrix)
        x = y / np.linalg.norm(y)
        updated = float(x @ (matrix @ x))
        if abs(updated - estimate) <= tol * abs(updated):
            estimate = updated
            break
        estimate = updated
    logger.info(f"Smallest eigenvalue estimate {estimate:.6e} ({n} free DOFs)")
    return estimate


def _smallest_eigenvalue(matrix: sparse.csr_matrix) -> float:
    if matrix.shape[0] <= DENSE_EIGEN_LIMIT:
        value = float(np.linalg.eigvalsh(matrix.toarray())[0])
    else:
        value = float(eigsh(matrix, k=1, which="SA", return_eigenvectors=False)[0])
    logger.info(f"Smallest eigenvalue {value:.6e} ({matrix.shape[0]} free DOFs)")
    return value


def nullity(dense: np.ndarray, rtol: float = 1e-10) -> int:
    """Number of singular values below rtol times the largest."""
    values = np.linalg.svd(np.asarray(dense, dtype=float), compute_uv=False)
    if len(values) == 0 or values[0] == 0.0:
        return len(values)
    return int(np.sum(values < rtol * values[0]))
