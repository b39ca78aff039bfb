"""Closed-form linear encoders: PCA, TICA and TCCA (the exact linear TAE).

Models use the row convention of the data arrays: a frame ``z`` is a row
vector, ``encode(z) = (z - mean_in) @ encoder.T`` and
``predict(z) = encode(z) @ decoder.T + mean_out``.
"""

from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import DegenerateCovarianceError, RankError, ShapeError
from .stats import as_trajectories, covariances, lagged_pairs

METHODS = ("pca", "tica", "tcca")


@dataclass(frozen=True)
class LinearEncoderDecoder:
    """Fitted linear encoder ``E`` (d x N) and decoder ``D`` (N x d)."""

    encoder: np.ndarray
    decoder: np.ndarray
    singular_values: np.ndarray
    mean_in: np.ndarray
    mean_out: np.ndarray
    method: str
    lag: int
    kinetic_map: bool = False

    @property
    def dim(self):
        return self.encoder.shape[0]

    @property
    def input_dim(self):
        return self.encoder.shape[1]

    def encode(self, data):
        return encode(self, data)

    def predict(self, data):
        return predict(self, data)

    def to_dict(self):
        n_in = self.encoder.shape[1]
        return {
            "model": "linear",
            "method": self.method,
            "lag": int(self.lag),
            "dim": int(self.dim),
            "input_dim": int(n_in),
            "kinetic_map": bool(self.kinetic_map),
            "encoder": self.encoder.ravel().tolist(),
            "decoder": self.decoder.ravel().tolist(),
            "singular_values": self.singular_values.tolist(),
            "mean_in": self.mean_in.tolist(),
            "mean_out": self.mean_out.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        dim, n_in = int(d["dim"]), int(d["input_dim"])
        return cls(
            encoder=np.asarray(d["encoder"], dtype=np.float64).reshape(dim, n_in),
            decoder=np.asarray(d["decoder"], dtype=np.float64).reshape(n_in, dim),
            singular_values=np.asarray(d["singular_values"], dtype=np.float64),
            mean_in=np.asarray(d["mean_in"], dtype=np.float64),
            mean_out=np.asarray(d["mean_out"], dtype=np.float64),
            method=d["method"],
            lag=int(d["lag"]),
            kinetic_map=bool(d.get("kinetic_map", False)),
        )


def koopman_matrix(covs, rel_tol=numerics.DEFAULT_REL_TOL):
    """Transposed Koopman matrix ``K^T = C00^+ C0t``.

    With row-vector frames the lag-tau forecast of mean-free data is
    ``y ~ x @ K^T``.
    """
    return numerics.pinv_truncated(covs.c00, rel_tol) @ covs.c0t


def half_weighted_koopman(covs, rel_tol=numerics.DEFAULT_REL_TOL):
    """``C00^{-1/2} C0t Ctt^{-1/2}``, the Koopman matrix in whitened coordinates.

    Its singular values are the lag-tau canonical correlations.
    """
    w0, _ = numerics.inv_sqrt_truncated(covs.c00, rel_tol)
    wt, _ = numerics.inv_sqrt_truncated(covs.ctt, rel_tol)
    return w0 @ covs.c0t @ wt


def _check_dim(d, rank):
    d = int(d)
    if d < 1:
        raise RankError(f"dimension must be at least 1, got {d}")
    if d > rank:
        raise RankError(f"requested dimension {d} exceeds retained rank {rank}")
    return d


def fit_tcca(data, lag, dim, rel_tol=numerics.DEFAULT_REL_TOL):
    """Rank-``dim`` time-lagged canonical correlation analysis.

    This is the closed-form minimizer of the whitened linear lag-``lag``
    regression error. With the SVD
    ``C00^{-1/2} C0t Ctt^{-1/2} = A diag(s) B^T`` (``A`` acting on the
    instantaneous side), the encoder is ``diag(s_d) A_d^T C00^{-1/2}`` and
    the decoder ``Ctt^{1/2} B_d``.
    """
    covs = covariances(lagged_pairs(data, lag))
    w0, rank0 = numerics.inv_sqrt_truncated(covs.c00, rel_tol)
    wt, rankt = numerics.inv_sqrt_truncated(covs.ctt, rel_tol)
    dim = _check_dim(dim, min(rank0, rankt))
    dec = numerics.svd(w0 @ covs.c0t @ wt)
    s = dec.singular_values[:dim]
    a = dec.U[:, :dim]
    b = dec.Vt[:dim].T
    encoder = (a * s).T @ w0
    decoder = numerics.sqrt_psd(covs.ctt, rel_tol) @ b
    return LinearEncoderDecoder(
        encoder=encoder,
        decoder=decoder,
        singular_values=s.copy(),
        mean_in=covs.mean_x,
        mean_out=covs.mean_y,
        method="tcca",
        lag=int(lag),
        kinetic_map=True,
    )


def tica_eigen(covs, rel_tol=numerics.DEFAULT_REL_TOL):
    """Eigendecomposition of the symmetrized, whitened lagged covariance.

    Returns ``(eigenvalues, eigenvectors, w, w_inv)`` where ``w`` is the
    inverse square root of ``(C00 + Ctt) / 2`` and the eigenproblem is that
    of ``w (C0t + C0t^T)/2 w`` restricted to the retained rank.
    """
    c0 = 0.5 * (covs.c00 + covs.ctt)
    ct = numerics.symmetrize(covs.c0t)
    vals, vecs = numerics.truncated_eig(c0, rel_tol)
    # eigenproblem in the retained basis keeps spurious zero modes out
    basis = vecs / np.sqrt(vals)
    reduced = numerics.sym_eig(numerics.symmetrize(basis.T @ ct @ basis))
    eigvecs = vecs @ reduced.eigenvectors
    w = numerics.symmetrize(basis @ vecs.T)
    w_inv = numerics.symmetrize((vecs * np.sqrt(vals)) @ vecs.T)
    return reduced.eigenvalues, eigvecs, w, w_inv


def fit_tica(data, lag, dim, kinetic_map=True, rel_tol=numerics.DEFAULT_REL_TOL):
    """Time-lagged independent component analysis.

    Uses the symmetrized estimator ``C00 <- (C00 + Ctt)/2``,
    ``C0t <- (C0t + C0t^T)/2``. When ``kinetic_map`` is set the encoded
    components are scaled by their eigenvalues; otherwise the scaling sits in
    the decoder. The forecast ``predict`` is the same either way.
    """
    covs = covariances(lagged_pairs(data, lag))
    vals, vecs, w, w_inv = tica_eigen(covs, rel_tol)
    dim = _check_dim(dim, vals.size)
    lam = vals[:dim]
    u = vecs[:, :dim]
    encoder = u.T @ w
    decoder = w_inv @ u
    if kinetic_map:
        encoder = lam[:, None] * encoder
    else:
        decoder = decoder * lam
    return LinearEncoderDecoder(
        encoder=encoder,
        decoder=decoder,
        # clipped for reporting only; the encoder keeps the raw eigenvalues
        singular_values=np.clip(lam, 0.0, 1.0),
        mean_in=covs.mean_x,
        mean_out=covs.mean_y,
        method="tica",
        lag=int(lag),
        kinetic_map=bool(kinetic_map),
    )


def tica_eigenvalues(data, lag, rel_tol=numerics.DEFAULT_REL_TOL):
    """Unclipped TICA eigenvalues, descending."""
    return tica_eigen(covariances(lagged_pairs(data, lag)), rel_tol)[0]


def fit_pca(data, dim):
    """Principal component analysis of the pooled frames."""
    trajs = as_trajectories(data)
    frames = np.concatenate(trajs)
    n_dim = frames.shape[1]
    dim = int(dim)
    if not 1 <= dim <= n_dim:
        raise RankError(f"PCA dimension must lie in [1, {n_dim}], got {dim}")
    mean = frames.mean(axis=0)
    centered = frames - mean
    cov = numerics.symmetrize(centered.T @ centered / frames.shape[0])
    if not np.max(np.abs(cov), initial=0.0) > 0.0:
        raise DegenerateCovarianceError("data has zero variance")
    eig = numerics.sym_eig(cov)
    comps = eig.eigenvectors[:, :dim].T
    return LinearEncoderDecoder(
        encoder=comps.copy(),
        decoder=comps.T.copy(),
        singular_values=np.sqrt(np.clip(eig.eigenvalues[:dim], 0.0, None)),
        mean_in=mean,
        mean_out=mean.copy(),
        method="pca",
        lag=0,
    )


def _map_rows(data, fn):
    if isinstance(data, (list, tuple)):
        return [fn(t) for t in as_trajectories(data)]
    return fn(as_trajectories(data)[0])


def encode(model, data):
    """Encoded coordinates ``(z - mean_in) @ E^T``; lists map elementwise."""
    n_in = model.encoder.shape[1]

    def _enc(z):
        if z.shape[1] != n_in:
            raise ShapeError(f"data has {z.shape[1]} columns, model expects {n_in}")
        return (z - model.mean_in) @ model.encoder.T

    return _map_rows(data, _enc)


def predict(model, data):
    """Lag-tau forecast (or PCA reconstruction) ``D E (z - mean_in) + mean_out``."""
    n_in = model.encoder.shape[1]

    def _pred(z):
        if z.shape[1] != n_in:
            raise ShapeError(f"data has {z.shape[1]} columns, model expects {n_in}")
        return (z - model.mean_in) @ model.encoder.T @ model.decoder.T + model.mean_out

    return _map_rows(data, _pred)


def fit(method, data, lag, dim, **kwargs):
    """Dispatch to :func:`fit_pca`, :func:`fit_tica` or :func:`fit_tcca`."""
    if method == "pca":
        return fit_pca(data, dim)
    if method == "tica":
        return fit_tica(data, lag, dim, **kwargs)
    if method == "tcca":
        return fit_tcca(data, lag, dim, **kwargs)
    raise ValueError(f"unknown linear method {method!r}; choose from {METHODS}")
