"""Dense linear-algebra kernels with explicit rank truncation.

The heavy lifting is delegated to LAPACK through :mod:`numpy.linalg`; this
module fixes orderings and sign conventions so results are reproducible, and
implements the truncated (pseudo-)inverse square roots used for whitening.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DataError, DegenerateCovarianceError, ShapeError

DEFAULT_REL_TOL = 1e-10


@dataclass(frozen=True)
class SymEig:
    """Eigendecomposition of a symmetric matrix.

    Attributes
    ----------
    eigenvalues : (N,) ndarray
        Sorted in descending order.
    eigenvectors : (N, N) ndarray
        Orthonormal columns, ``eigenvectors[:, i]`` belongs to
        ``eigenvalues[i]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(frozen=True)
class Svd:
    """Thin singular value decomposition ``a = U @ diag(s) @ Vt``."""

    U: np.ndarray
    singular_values: np.ndarray
    Vt: np.ndarray

    def reconstruct(self):
        return (self.U * self.singular_values) @ self.Vt


def _fix_signs(vectors):
    """Flip columns so that the largest-magnitude entry of each is positive."""
    if vectors.size == 0:
        return np.ones(vectors.shape[1])
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def _as_finite_matrix(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DataError("matrix contains non-finite entries")
    return a


def symmetrize(a):
    a = np.asarray(a, dtype=np.float64)
    return 0.5 * (a + a.T)


def sym_eig(a):
    """Eigendecomposition of a real symmetric matrix.

    Parameters
    ----------
    a : (N, N) array_like
        Symmetric up to a relative asymmetry of 1e-12.

    Returns
    -------
    SymEig
        Eigenvalues in descending order. Each eigenvector is sign-fixed so
        that its largest-magnitude entry is positive.
    """
    a = _as_finite_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"matrix must be square, got shape {a.shape}")
    scale = np.max(np.abs(a)) if a.size else 0.0
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-12 * max(scale, np.finfo(float).tiny):
        raise ShapeError("matrix is not symmetric")
    try:
        vals, vecs = np.linalg.eigh(symmetrize(a))
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"symmetric eigensolver failed: {exc}") from exc
    vals = vals[::-1]
    vecs = vecs[:, ::-1]
    vecs = vecs * _fix_signs(vecs)
    return SymEig(np.ascontiguousarray(vals), np.ascontiguousarray(vecs))


def svd(a):
    """Thin SVD with descending singular values and a fixed sign convention.

    The largest-magnitude entry of each column of ``U`` is made positive; the
    matching row of ``Vt`` is flipped with it.
    """
    a = _as_finite_matrix(a)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"SVD failed to converge: {exc}") from exc
    signs = _fix_signs(u)
    return Svd(u * signs, s, vt * signs[:, None])


def truncated_eig(c, rel_tol=DEFAULT_REL_TOL):
    """Eigenpairs of a PSD matrix with ``lambda > rel_tol * lambda_max``.

    Returns
    -------
    values : (r,) ndarray
    vectors : (N, r) ndarray
    """
    if not 0.0 < rel_tol < 1.0:
        raise ValueError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    eig = sym_eig(c)
    lmax = eig.eigenvalues[0] if eig.eigenvalues.size else 0.0
    if not lmax > 0.0:
        raise DegenerateCovarianceError(
            f"covariance has no positive eigenvalue (max = {lmax:g})"
        )
    keep = eig.eigenvalues > rel_tol * lmax
    return eig.eigenvalues[keep], eig.eigenvectors[:, keep]


def inv_sqrt_truncated(c, rel_tol=DEFAULT_REL_TOL):
    """Pseudo-inverse square root of a symmetric PSD matrix.

    Only eigenpairs with ``lambda_i > rel_tol * lambda_max`` are kept, so
    ``w @ c @ w`` is the orthogonal projector onto the retained eigenspace.

    Returns
    -------
    w : (N, N) ndarray
        ``V_r diag(lambda_r ** -0.5) V_r^T``.
    rank : int
        Number of retained eigenpairs.
    """
    vals, vecs = truncated_eig(c, rel_tol)
    w = (vecs / np.sqrt(vals)) @ vecs.T
    return symmetrize(w), vals.size


def sqrt_psd(c, rel_tol=DEFAULT_REL_TOL):
    """Square root of a symmetric PSD matrix on the same truncated eigenspace."""
    vals, vecs = truncated_eig(c, rel_tol)
    return symmetrize((vecs * np.sqrt(vals)) @ vecs.T)


def pinv_truncated(c, rel_tol=DEFAULT_REL_TOL):
    vals, vecs = truncated_eig(c, rel_tol)
    return symmetrize((vecs / vals) @ vecs.T)


def principal_angles(a, b):
    """Principal angles (radians, ascending) between the row spaces of a and b."""
    qa, _ = np.linalg.qr(np.asarray(a, dtype=np.float64).T)
    qb, _ = np.linalg.qr(np.asarray(b, dtype=np.float64).T)
    cosines = np.linalg.svd(qa.T @ qb, compute_uv=False)
    return np.arccos(np.clip(cosines, -1.0, 1.0))
