"""Matrix factorizations and solves shared by every other module.

Every inversion in the package goes through these routines: Cholesky-based
solves for positive definite systems and a rank-revealing SVD pseudoinverse
for everything else.  No explicit matrix inverse is formed anywhere.
"""

import numpy as np
import scipy.linalg

from .exceptions import NotPositiveDefinite


def as_matrix(a, name="matrix"):
    """Coerce to a 2-D float array, rejecting NaN/Inf entries."""
    m = np.asarray(a, dtype=float)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise ValueError(f"{name}: expected a 2-D array, got ndim={m.ndim}")
    if m.size and not np.isfinite(m).all():
        raise ValueError(f"{name}: non-finite entries are not accepted")
    return m


def symmetrize(m):
    """(M + M^T) / 2 — applied before every symmetric factorization."""
    return 0.5 * (m + m.T)


def cholesky_lower(m):
    """Lower-triangular L with L L^T = (M + M^T)/2.

    Raises
    ------
    NotPositiveDefinite
        If a pivot fails, i.e. the (symmetrized) input is not numerically
        positive definite.
    """
    m = symmetrize(as_matrix(m, "cholesky input"))
    if m.shape[0] != m.shape[1]:
        raise ValueError("cholesky input must be square")
    if m.shape[0] == 0:
        return np.zeros((0, 0))
    try:
        return scipy.linalg.cholesky(m, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"matrix is not positive definite: {exc}") from exc


def default_rank_tol(m):
    # The rank/pseudoinverse cutoff is relative to the largest singular
    # value; this default mirrors the usual eps * max(shape) heuristic.
    return np.finfo(float).eps * max(m.shape) if m.size else 0.0


def numerical_rank(m, tol=None):
    """Number of singular values above tol * sigma_max (rank 0 for empty/zero)."""
    m = as_matrix(m, "rank input")
    if m.size == 0:
        return 0
    if tol is None:
        tol = default_rank_tol(m)
    s = np.linalg.svd(m, compute_uv=False)
    return int(np.sum(s > tol * s[0]))


def pseudo_inverse(m, tol=None):
    """Moore-Penrose pseudoinverse via SVD with relative cutoff tol."""
    m = as_matrix(m, "pseudoinverse input")
    if m.size == 0:
        return np.zeros((m.shape[1], m.shape[0]))
    if tol is None:
        tol = default_rank_tol(m)
    return np.linalg.pinv(m, rcond=tol)


def solve_spd(a, b):
    """Solve A X = B for symmetric positive definite A.

    Implemented as a Cholesky factorization followed by two triangular
    solves; accepts B as a vector or matrix.
    """
    a = as_matrix(a, "solve_spd lhs")
    b_arr = np.asarray(b, dtype=float)
    if b_arr.size and not np.isfinite(b_arr).all():
        raise ValueError("solve_spd rhs: non-finite entries are not accepted")
    if a.shape[0] == 0:
        return np.zeros_like(b_arr)
    low = cholesky_lower(a)
    z = scipy.linalg.solve_triangular(low, b_arr, lower=True)
    return scipy.linalg.solve_triangular(low.T, z, lower=False)


def psd_sqrt(m):
    """Symmetric square root of a PSD matrix with negative eigenvalues clipped to zero.

    Returns (sqrt, min_eigenvalue); callers apply their own indefiniteness
    policy to min_eigenvalue before trusting the clipped factor.
    """
    m = symmetrize(as_matrix(m, "psd_sqrt input"))
    if m.shape[0] == 0:
        return np.zeros((0, 0)), 0.0
    lam, vec = np.linalg.eigh(m)
    min_eig = float(lam[0])
    lam = np.clip(lam, 0.0, None)
    return vec @ np.diag(np.sqrt(lam)) @ vec.T, min_eig
