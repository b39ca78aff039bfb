"""Time-lagged data pairs, covariance estimation and whitening.

All estimators accept either a single trajectory or a list of trajectories.
Lagged pairs are formed inside each trajectory and then pooled, so no pair
ever straddles two trajectories.
"""

from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import DataError, LagError, ShapeError


@dataclass(frozen=True)
class TimeSeries:
    """A ``(T, N)`` trajectory sampled at a uniform time step ``dt``."""

    data: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2:
            raise ShapeError(f"time series must be 2-d, got shape {data.shape}")
        if data.shape[0] < 2 or data.shape[1] < 1:
            raise ShapeError(f"need T >= 2 and N >= 1, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise DataError("time series contains non-finite values")
        object.__setattr__(self, "data", data)

    def __len__(self):
        return self.data.shape[0]

    @property
    def n_dim(self):
        return self.data.shape[1]


def as_trajectories(data):
    """Normalize input to a list of ``(T_i, N)`` float arrays.

    Accepts a :class:`TimeSeries`, a 1-d or 2-d array, or a list/tuple of
    either.
    """
    if isinstance(data, (list, tuple)):
        items = list(data)
    else:
        items = [data]
    if not items:
        raise DataError("no trajectories given")
    trajs = []
    for item in items:
        if isinstance(item, TimeSeries):
            arr = item.data
        else:
            arr = np.asarray(item, dtype=np.float64)
            if arr.ndim == 1:
                arr = arr[:, None]
        if arr.ndim != 2:
            raise ShapeError(f"trajectory must be 2-d, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError("trajectory contains non-finite values")
        trajs.append(arr)
    n_dim = trajs[0].shape[1]
    if any(t.shape[1] != n_dim for t in trajs):
        raise ShapeError("trajectories disagree in their number of dimensions")
    return trajs


@dataclass(frozen=True)
class LaggedPairs:
    """Mean-free instantaneous (``x``) and time-lagged (``y``) blocks."""

    x: np.ndarray
    y: np.ndarray
    mean_x: np.ndarray
    mean_y: np.ndarray
    lag: int

    @property
    def n_pairs(self):
        return self.x.shape[0]


def raw_pairs(data, lag):
    """Pooled ``(z_t, z_{t+lag})`` blocks without mean removal."""
    lag = int(lag)
    if lag < 0:
        raise LagError(f"lag must be non-negative, got {lag}")
    trajs = as_trajectories(data)
    xs, ys = [], []
    for traj in trajs:
        n = traj.shape[0] - lag
        if n < 1:
            continue
        xs.append(traj[:n])
        ys.append(traj[lag:])
    if not xs:
        longest = max(t.shape[0] for t in trajs)
        raise LagError(f"lag {lag} leaves no pairs (longest trajectory has {longest} frames)")
    return np.concatenate(xs), np.concatenate(ys)


def lagged_pairs(data, lag):
    """Build mean-free lagged pairs.

    The instantaneous and lagged blocks are centered with their own means,
    ``x_t = z_t - mean(z_1..z_{T-lag})`` and
    ``y_t = z_{t+lag} - mean(z_{1+lag}..z_T)``.

    Parameters
    ----------
    data : TimeSeries, array_like or list of those
    lag : int
        Lag in steps; ``0`` gives ``x == y`` (plain autoencoder setting).
    """
    x, y = raw_pairs(data, lag)
    mean_x = x.mean(axis=0)
    mean_y = y.mean(axis=0)
    return LaggedPairs(x - mean_x, y - mean_y, mean_x, mean_y, int(lag))


@dataclass(frozen=True)
class CovarianceSet:
    c00: np.ndarray
    c0t: np.ndarray
    ctt: np.ndarray
    lag: int
    n_pairs: int
    mean_x: np.ndarray = None
    mean_y: np.ndarray = None


def covariances(pairs):
    """Instantaneous, cross and lagged covariances normalized by ``1/(T - lag)``."""
    n = pairs.n_pairs
    x, y = pairs.x, pairs.y
    c00 = numerics.symmetrize(x.T @ x / n)
    if pairs.lag == 0:
        # x and y are the same block, so the three estimates coincide exactly
        c0t = c00.copy()
        ctt = c00.copy()
    else:
        c0t = x.T @ y / n
        ctt = numerics.symmetrize(y.T @ y / n)
    return CovarianceSet(c00, c0t, ctt, pairs.lag, n, pairs.mean_x, pairs.mean_y)


def estimate_covariances(data, lag):
    return covariances(lagged_pairs(data, lag))


@dataclass(frozen=True)
class Whitener:
    """Affine map ``x -> w @ (x - mean)`` with the matching inverse ``w_inv``."""

    mean: np.ndarray
    w: np.ndarray
    w_inv: np.ndarray
    rank: int

    def to_dict(self):
        return {
            "mean": self.mean.tolist(),
            "w": self.w.tolist(),
            "w_inv": self.w_inv.tolist(),
            "rank": int(self.rank),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["mean"], dtype=np.float64),
            np.asarray(d["w"], dtype=np.float64),
            np.asarray(d["w_inv"], dtype=np.float64),
            int(d["rank"]),
        )


def make_whitener(c, mean, rel_tol=numerics.DEFAULT_REL_TOL):
    """Whitener from covariance ``c``: ``w = c^{-1/2}``, ``w_inv = c^{1/2}``.

    Both matrices are truncated to the same eigenspace.
    """
    c = np.atleast_2d(np.asarray(c, dtype=np.float64))
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    if mean.shape != (c.shape[0],):
        raise ShapeError(f"mean of shape {mean.shape} does not match covariance {c.shape}")
    w, rank = numerics.inv_sqrt_truncated(c, rel_tol)
    w_inv = numerics.sqrt_psd(c, rel_tol)
    return Whitener(mean, w, w_inv, rank)


def diagonal_whitener(mean, scale):
    """Per-dimension standardizer ``(x - mean) / scale`` as a :class:`Whitener`."""
    mean = np.asarray(mean, dtype=np.float64)
    scale = np.asarray(scale, dtype=np.float64)
    if np.any(scale <= 0):
        raise DataError("standardizer scales must be strictly positive")
    return Whitener(mean, np.diag(1.0 / scale), np.diag(scale), scale.size)


def _check_columns(w, data):
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[None, :]
    if data.shape[-1] != w.mean.size:
        raise ShapeError(f"data has {data.shape[-1]} columns, whitener expects {w.mean.size}")
    return data


def apply_whitener(w, data):
    data = _check_columns(w, data)
    # w.w is symmetric, so right-multiplication applies it row by row
    return (data - w.mean) @ w.w.T


def unapply_whitener(w, data):
    data = _check_columns(w, data)
    return data @ w.w_inv.T + w.mean


def whiten_trajectories(data, rel_tol=numerics.DEFAULT_REL_TOL):
    """Whiten trajectories jointly with their pooled instantaneous covariance.

    Returns the whitened trajectories (same list structure as the input when
    a list was given) and the fitted :class:`Whitener`.
    """
    trajs = as_trajectories(data)
    pooled = np.concatenate(trajs)
    mean = pooled.mean(axis=0)
    cov = numerics.symmetrize((pooled - mean).T @ (pooled - mean) / pooled.shape[0])
    wt = make_whitener(cov, mean, rel_tol)
    out = [apply_whitener(wt, t) for t in trajs]
    return (out if isinstance(data, (list, tuple)) else out[0]), wt


def split_blocks(n_items, train_fraction, n_blocks, rng):
    """Assign contiguous blocks of ``range(n_items)`` to a train and a test part.

    The index range is cut into ``n_blocks`` nearly equal contiguous blocks,
    the block order is shuffled with ``rng`` and the first
    ``round(train_fraction * n_blocks)`` blocks form the training part.

    Returns
    -------
    train, test : list of (start, stop) tuples
        Sorted by start index.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n_blocks = int(min(max(n_blocks, 2), n_items))
    if n_blocks < 2:
        raise DataError(f"cannot split {n_items} items into train and test blocks")
    edges = np.linspace(0, n_items, n_blocks + 1).round().astype(int)
    blocks = [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]
    order = rng.permutation(n_blocks)
    n_train = int(round(train_fraction * n_blocks))
    n_train = min(max(n_train, 1), n_blocks - 1)
    train = sorted(blocks[i] for i in order[:n_train])
    test = sorted(blocks[i] for i in order[n_train:])
    return train, test
