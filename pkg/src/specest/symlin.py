"""Dense symmetric matrices and the isometric svec coordinates.

Symmetric matrices are plain ``ndarray`` objects; the helpers here symmetrize,
vectorize and factor them.  ``svec`` stacks the upper triangle row by row and
scales off-diagonal entries by sqrt(2) so that the Frobenius inner product of
two matrices equals the dot product of their coordinates.
"""

from functools import lru_cache

import numpy as np

PSD_TOL = 1e-10
SQRT2 = np.sqrt(2.0)


class NotPSDError(ValueError):
    """Raised when a matrix that must be positive semidefinite is not."""


def sym(M):
    """Return the symmetric part ``(M + M.T) / 2`` as a float array."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.shape[-1] != M.shape[-2]:
        raise ValueError(f"expected square matrix, got shape {M.shape}")
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def svec_len(n):
    return n * (n + 1) // 2


def svec_dim(k):
    """Return n with n(n+1)/2 == k, or raise."""
    n = int(round((np.sqrt(8 * k + 1) - 1) / 2))
    if svec_len(n) != k or n < 1:
        raise ValueError(f"length {k} is not of the form n(n+1)/2")
    return n


@lru_cache(maxsize=None)
def _triu(n):
    rows, cols = np.triu_indices(n)
    scale = np.where(rows == cols, 1.0, SQRT2)
    rows.setflags(write=False)
    cols.setflags(write=False)
    scale.setflags(write=False)
    return rows, cols, scale


def svec(M):
    """Isometric coordinates of a symmetric matrix (batched over leading axes)."""
    M = np.asarray(M, dtype=float)
    if M.ndim < 2:
        M = M.reshape(1, 1)
    n = M.shape[-1]
    rows, cols, scale = _triu(n)
    return M[..., rows, cols] * scale


def smat(x):
    """Inverse of :func:`svec` (batched over leading axes)."""
    x = np.asarray(x, dtype=float)
    n = svec_dim(x.shape[-1])
    rows, cols, scale = _triu(n)
    M = np.zeros(x.shape[:-1] + (n, n))
    vals = x / scale
    M[..., rows, cols] = vals
    M[..., cols, rows] = vals
    return M


@lru_cache(maxsize=None)
def sym_basis(n):
    """The orthonormal basis e^{ij} of S^n in svec order, shape (n(n+1)/2, n, n)."""
    E = smat(np.eye(svec_len(n)))
    E.setflags(write=False)
    return E


def _check_finite(M):
    if not np.all(np.isfinite(M)):
        raise FloatingPointError("matrix has non-finite entries")


def eigh(M):
    """Eigenvalues (ascending) and eigenvectors of a symmetric matrix."""
    M = sym(M)
    _check_finite(M)
    return np.linalg.eigh(M)


def jacobi_eigh(M, tol=1e-14, max_sweeps=100):
    """Cyclic Jacobi eigendecomposition; slower than LAPACK, kept as an oracle."""
    A = sym(M).copy()
    _check_finite(A)
    n = A.shape[0]
    V = np.eye(n)
    scale = max(np.linalg.norm(A), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(A**2) - np.sum(np.diag(A) ** 2), 0.0))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                Ap, Aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * Ap - s * Aq
                A[:, q] = s * Ap + c * Aq
                Ap, Aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * Ap - s * Aq
                A[q, :] = s * Ap + c * Aq
                Vp, Vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * Vp - s * Vq
                V[:, q] = s * Vp + c * Vq
    w = np.diag(A).copy()
    order = np.argsort(w)
    return w[order], V[:, order]


def min_eig(M):
    M = sym(M)
    _check_finite(M)
    return float(np.linalg.eigvalsh(M)[0])


def max_eig(M):
    M = sym(M)
    _check_finite(M)
    return float(np.linalg.eigvalsh(M)[-1])


def psd_check(M, tol=PSD_TOL):
    return min_eig(M) >= -tol


def sqrt_psd(M, tol=PSD_TOL):
    """Symmetric PSD square root; eigenvalues in [-tol, 0) are clamped to zero."""
    w, V = eigh(M)
    if w[0] < -tol:
        raise NotPSDError(f"matrix is not PSD (min eigenvalue {w[0]:.3e})")
    w = np.clip(w, 0.0, None)
    return sym((V * np.sqrt(w)) @ V.T)


def psd_factor(M, tol=PSD_TOL):
    """Return V with V V^T = M, dropping the null space."""
    w, U = eigh(M)
    if w[0] < -tol * max(1.0, abs(w[-1])):
        raise NotPSDError(f"matrix is not PSD (min eigenvalue {w[0]:.3e})")
    keep = w > tol * max(1.0, abs(w[-1]))
    return U[:, keep] * np.sqrt(w[keep])
