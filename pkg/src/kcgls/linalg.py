"""Dense symmetric linear algebra primitives.

Everything numerically delicate lives here: SPD factorization and solves,
the inverse matrix square root, the orthonormal complement of a unit
vector, and floating-point rank decisions.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import NotPositiveDefinite, NotUnitVector


class SpdFactorization:
    """Cholesky factorization of a symmetric positive definite matrix.

    Wraps :func:`scipy.linalg.cho_factor`; raises
    :class:`NotPositiveDefinite` if the factorization fails.
    """

    def __init__(self, matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise NotPositiveDefinite(f"expected a square matrix, got shape {matrix.shape}")
        try:
            self._factor = scipy.linalg.cho_factor(matrix, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise NotPositiveDefinite(str(exc)) from exc
        self.dimension = matrix.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve M x = b for one or many right-hand sides."""
        return scipy.linalg.cho_solve(self._factor, np.asarray(b, dtype=float))


def spd_solve(m: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve M X = B for symmetric positive definite M."""
    return SpdFactorization(m).solve(b)


def inv_sqrt_spd(m: np.ndarray) -> np.ndarray:
    """Inverse symmetric square root of an SPD matrix, via eigendecomposition.

    Returns symmetric N with N M N = I.
    """
    m = np.asarray(m, dtype=float)
    eigval, eigvec = np.linalg.eigh(m)
    if eigval[0] <= 0:
        raise NotPositiveDefinite(f"minimum eigenvalue {eigval[0]} is not positive")
    return (eigvec / np.sqrt(eigval)) @ eigvec.T


def orthonormal_complement(v: np.ndarray) -> np.ndarray:
    """Columns completing a unit vector v to an orthogonal matrix.

    Returns the p-by-(p-1) matrix S with S'S = I, v'S = 0 and
    vv' + SS' = I.  Built from the Householder reflector mapping v onto
    the first coordinate axis: the reflector is orthogonal and its first
    column is proportional to v, so the remaining columns are exactly the
    complement.  Deterministic, no iteration.
    """
    v = np.asarray(v, dtype=float)
    p = v.shape[0]
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > 1e-12:
        raise NotUnitVector(f"expected a unit vector, got norm {norm}")
    if p == 1:
        return np.zeros((1, 0))
    sign = 1.0 if v[0] >= 0 else -1.0
    u = v.copy()
    u[0] += sign
    h = np.eye(p) - (2.0 / (u @ u)) * np.outer(u, u)
    # First column of h is -sign * v; the rest are the complement.
    return h[:, 1:]


def numeric_rank(m: np.ndarray, rel_tol: float = 1e-10) -> int:
    """Number of singular values above rel_tol times the largest."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    return int(np.sum(s > rel_tol * s[0]))
