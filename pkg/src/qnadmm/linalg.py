"""Minimal dense/sparse linear algebra kernel.

Sparse matrices live in compressed-column form (scipy ``csc_array``); dense
symmetric systems go through a single Cholesky factorization with triangular
solves, and dominant eigenvalues come from seeded power iteration so no
external sparse SVD is needed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.io import mmread, mmwrite
from scipy.linalg import cho_solve
from scipy.linalg.lapack import dpotrf

SYMMETRY_RTOL = 1e-10


class NotPositiveDefiniteError(ValueError):
    """Cholesky hit a non-positive pivot; ``pivot`` is the 0-based index."""

    def __init__(self, pivot: int):
        self.pivot = pivot
        super().__init__(f"matrix is not positive definite (failing pivot {pivot})")


class PowerIterationError(RuntimeError):
    """Power iteration exhausted ``max_iter``; carries the last estimate."""

    def __init__(self, estimate: float, iterations: int):
        self.estimate = estimate
        self.iterations = iterations
        super().__init__(
            f"power iteration did not converge in {iterations} iterations "
            f"(last estimate {estimate!r})"
        )


def as_csc(a) -> sparse.csc_array:
    """Coerce a matrix-like input to compressed-column layout."""
    if isinstance(a, sparse.csc_array):
        return a
    if sparse.issparse(a):
        return sparse.csc_array(a)
    return sparse.csc_array(np.asarray(a, dtype=np.float64))


def matvec(A, v: np.ndarray) -> np.ndarray:
    """Return A @ v with an explicit dimension check."""
    v = np.asarray(v, dtype=np.float64)
    if A.shape[1] != v.shape[0]:
        raise ValueError(f"dimension mismatch: A is {A.shape}, v has length {v.shape[0]}")
    return A @ v


def matvec_transpose(A, v: np.ndarray) -> np.ndarray:
    """Return A.T @ v with an explicit dimension check."""
    v = np.asarray(v, dtype=np.float64)
    if A.shape[0] != v.shape[0]:
        raise ValueError(f"dimension mismatch: A is {A.shape}, v has length {v.shape[0]}")
    return A.T @ v


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor L with L @ L.T equal to the factored matrix."""

    L: np.ndarray
    dimension: int


def cholesky(S: np.ndarray) -> CholeskyFactor:
    """Factor a symmetric positive definite matrix as L @ L.T.

    The input is symmetrized first; asymmetry beyond ``SYMMETRY_RTOL`` relative
    to the largest entry is rejected. A non-positive pivot raises
    :class:`NotPositiveDefiniteError` carrying the failing pivot index.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    scale = np.abs(S).max() if S.size else 0.0
    if scale > 0 and np.abs(S - S.T).max() > SYMMETRY_RTOL * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    S = 0.5 * (S + S.T)
    c, info = dpotrf(S, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(pivot=info - 1)
    if info < 0:
        raise ValueError(f"illegal value in Cholesky argument {-info}")
    return CholeskyFactor(L=c, dimension=S.shape[0])


def solve_spd(F: CholeskyFactor, rhs: np.ndarray) -> np.ndarray:
    """Solve S x = rhs through the two triangular solves of the factor."""
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape[0] != F.dimension:
        raise ValueError(
            f"dimension mismatch: factor has dimension {F.dimension}, rhs has {rhs.shape[0]}"
        )
    return cho_solve((F.L, True), rhs)


def max_eigenvalue_sym(
    apply: Callable[[np.ndarray], np.ndarray],
    dim: int,
    tol: float = 1e-6,
    max_iter: int = 1000,
    seed: int = 0,
) -> float:
    """Dominant eigenvalue of a symmetric PSD operator by power iteration.

    The start vector is a seeded pseudorandom unit vector, so the estimate is
    deterministic given ``seed``. Convergence is declared when the relative
    change of the Rayleigh quotient drops to ``tol``; the Rayleigh quotient of
    a PSD operator never exceeds the true maximum, so the result is a lower
    bound up to that tolerance.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    estimate = None
    for _ in range(max_iter):
        w = apply(v)
        rayleigh = float(v @ w)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0
        v = w / norm_w
        if estimate is not None and abs(rayleigh - estimate) <= tol * max(abs(rayleigh), 1e-300):
            return rayleigh
        estimate = rayleigh
    raise PowerIterationError(estimate=estimate, iterations=max_iter)


def save_matrix_market(path, A) -> None:
    """Write a sparse matrix in Matrix Market coordinate format (1-based)."""
    mmwrite(str(path), sparse.coo_array(as_csc(A)))


def load_matrix_market(path) -> sparse.csc_array:
    """Read a Matrix Market coordinate file into compressed-column layout."""
    return sparse.csc_array(mmread(str(path)))
