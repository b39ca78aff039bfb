"""Markov state models on encoded coordinates.

k-means discretization, sliding-window transition counts, transition
matrix estimation on the largest strongly connected set and implied
timescales.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DataError, LagError


@dataclass(frozen=True)
class Discretization:
    centers: np.ndarray
    assignments: np.ndarray
    inertia: float


def _sq_distances(points, centers):
    return ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)


def assign(points, centers, chunk=8192):
    """Nearest-center index and squared distance for every point."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    labels = np.empty(points.shape[0], dtype=np.int64)
    dists = np.empty(points.shape[0])
    for start in range(0, points.shape[0], chunk):
        d = _sq_distances(points[start:start + chunk], centers)
        idx = np.argmin(d, axis=1)
        labels[start:start + chunk] = idx
        dists[start:start + chunk] = d[np.arange(idx.size), idx]
    return labels, dists


def _kmeanspp(points, k, rng):
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = ((points - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[i] = points[idx]
        closest = np.minimum(closest, ((points - centers[i]) ** 2).sum(axis=1))
    return centers


def kmeans(points, k, seed=0, max_iter=200, tol=1e-8):
    """k-means++ seeded Lloyd iterations.

    Stops once no center moves by more than ``tol`` (Euclidean) or after
    ``max_iter`` iterations. An empty cluster is re-seeded with the point
    farthest from its current center.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    k = int(k)
    if k < 1:
        raise ValueError("k must be at least 1")
    n_distinct = np.unique(points, axis=0).shape[0]
    if k > n_distinct:
        raise DataError(f"k = {k} exceeds the {n_distinct} distinct points")
    rng = np.random.default_rng(seed)
    centers = _kmeanspp(points, k, rng)
    labels, dists = assign(points, centers)
    for _ in range(max_iter):
        counts = np.bincount(labels, minlength=k)
        new = np.zeros_like(centers)
        for j in range(points.shape[1]):
            new[:, j] = np.bincount(labels, weights=points[:, j], minlength=k)
        nonempty = counts > 0
        new[nonempty] /= counts[nonempty, None]
        for j in np.flatnonzero(~nonempty):
            far = int(np.argmax(dists))
            new[j] = points[far]
            dists[far] = 0.0
        shift = np.sqrt(((new - centers) ** 2).sum(axis=1)).max()
        centers = new
        labels, dists = assign(points, centers)
        if shift < tol:
            break
    return Discretization(centers, labels, float(dists.sum()))


def _as_dtrajs(assignments):
    if isinstance(assignments, (list, tuple)):
        return [np.asarray(a, dtype=np.int64) for a in assignments]
    return [np.asarray(assignments, dtype=np.int64)]


def count_matrix(assignments, k, lag):
    """Sliding-window transition counts ``C_ij = #{t: s_t = i, s_{t+lag} = j}``.

    Counting happens within each discrete trajectory only.
    """
    lag = int(lag)
    if lag < 1:
        raise LagError(f"MSM lag must be at least 1, got {lag}")
    dtrajs = _as_dtrajs(assignments)
    if max(d.size for d in dtrajs) <= lag:
        raise LagError(f"MSM lag {lag} is not shorter than the longest trajectory")
    counts = np.zeros(k * k, dtype=np.float64)
    for d in dtrajs:
        if d.size <= lag:
            continue
        if d.min() < 0 or d.max() >= k:
            raise DataError("state index out of range")
        counts += np.bincount(d[:-lag] * k + d[lag:], minlength=k * k)
    return counts.reshape(k, k)


def largest_connected_set(counts):
    """States of the strongly connected component with the most states.

    Ties go to the component carrying more counts.
    """
    graph = csr_matrix(counts > 0)
    n_comp, labels = connected_components(graph, directed=True, connection="strong")
    best, best_key = None, None
    for c in range(n_comp):
        members = np.flatnonzero(labels == c)
        key = (members.size, counts[np.ix_(members, members)].sum())
        if best_key is None or key > best_key:
            best, best_key = members, key
    return best


@dataclass(frozen=True)
class MsmModel:
    transition: np.ndarray
    lag: int
    active_states: np.ndarray
    counts: np.ndarray
    reversible: bool = True
    stationary: np.ndarray = field(default=None)


def transition_matrix(counts, reversible=True, lag=1):
    """Row-stochastic transition matrix on the largest strongly connected set.

    In reversible mode the counts are symmetrized, ``C <- (C + C^T)/2``,
    before row normalization, which enforces detailed balance with
    ``pi_i`` proportional to the symmetrized row sums.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts < 0):
        raise DataError("counts must be non-negative")
    active = largest_connected_set(counts)
    c = counts[np.ix_(active, active)]
    if reversible:
        c = 0.5 * (c + c.T)
    rows = c.sum(axis=1)
    if np.any(rows <= 0):
        raise DataError("largest connected set carries no transition counts")
    p = c / rows[:, None]
    pi = rows / rows.sum() if reversible else None
    return MsmModel(p, int(lag), active, counts, bool(reversible), pi)


def estimate_msm(assignments, k, lag, reversible=True):
    return transition_matrix(count_matrix(assignments, k, lag), reversible, lag)


def msm_eigenvalues(model):
    """Eigenvalues sorted by decreasing modulus (real in reversible mode)."""
    p = model.transition
    if model.reversible:
        sq = np.sqrt(model.stationary)
        sym = sq[:, None] * p / sq[None, :]
        vals = np.linalg.eigvalsh(0.5 * (sym + sym.T))
    else:
        vals = np.linalg.eigvals(p)
    return vals[np.argsort(-np.abs(vals), kind="stable")]


def implied_timescales(model, n):
    """The ``n`` slowest implied timescales ``-lag / ln|lambda_{i+1}|``.

    Returns
    -------
    timescales : (n,) ndarray
        ``inf`` where ``|lambda| >= 1``; ``nan`` when the model has fewer than
        ``n + 1`` active states.
    valid : (n,) bool ndarray
        False for undefined values and for timescales shorter than the lag.
    """
    vals = msm_eigenvalues(model)
    mods = np.abs(vals[1:n + 1])
    ts = np.full(n, np.nan)
    with np.errstate(divide="ignore"):
        ts[:mods.size] = np.where(mods >= 1.0, np.inf, -model.lag / np.log(mods))
    valid = np.isfinite(ts) & (ts >= model.lag)
    return ts, valid


@dataclass
class ItsTable:
    """Implied timescales for each MSM lag."""

    lags: list
    timescales: np.ndarray
    valid: np.ndarray
    errors: dict = field(default_factory=dict)

    def rows(self):
        for lag, ts, ok in zip(self.lags, self.timescales, self.valid):
            yield lag, ts, ok


def its_curve(assignments, k, lags, n, reversible=True):
    """Implied timescales versus MSM lag.

    A lag that cannot be estimated leaves a row of ``nan`` and an entry in
    ``errors``; the remaining rows are still filled.
    """
    lags = [int(l) for l in lags]
    ts = np.full((len(lags), n), np.nan)
    valid = np.zeros((len(lags), n), dtype=bool)
    errors = {}
    for row, lag in enumerate(lags):
        try:
            model = estimate_msm(assignments, k, lag, reversible)
            ts[row], valid[row] = implied_timescales(model, n)
        except (DataError, LagError) as exc:
            errors[lag] = str(exc)
    return ItsTable(lags, ts, valid, errors)
