"""Hidden Markov model toy systems with nonlinear observation warps."""

from dataclasses import dataclass

import numpy as np

from .errors import DataError

WARPS = ("none", "sqrt", "swissroll")


@dataclass(frozen=True)
class HmmSpec:
    """Discrete Markov chain with Gaussian emissions in the x/y plane.

    Attributes
    ----------
    transition : (S, S) ndarray
        Row-stochastic transition matrix of the hidden chain.
    emission_means : (S, 2) ndarray
    emission_covs : (S, 2, 2) ndarray
    initial : (S,) ndarray
        Distribution of the first hidden state.
    warp : {"none", "sqrt", "swissroll"}
        Observation map applied after the Gaussian emission.
    """

    transition: np.ndarray
    emission_means: np.ndarray
    emission_covs: np.ndarray
    initial: np.ndarray
    warp: str = "none"

    def __post_init__(self):
        p = np.asarray(self.transition, dtype=np.float64)
        means = np.asarray(self.emission_means, dtype=np.float64)
        covs = np.asarray(self.emission_covs, dtype=np.float64)
        init = np.asarray(self.initial, dtype=np.float64)
        _check_stochastic(p)
        n = p.shape[0]
        if means.shape != (n, 2) or covs.shape != (n, 2, 2) or init.shape != (n,):
            raise DataError("emission parameters do not match the number of states")
        for c in covs:
            if not np.allclose(c, c.T) or np.linalg.eigvalsh(c).min() < -1e-12:
                raise DataError("emission covariances must be symmetric PSD")
        if np.any(init < 0) or abs(init.sum() - 1.0) > 1e-12:
            raise DataError("initial distribution must be non-negative and sum to 1")
        if self.warp not in WARPS:
            raise DataError(f"unknown warp {self.warp!r}; choose from {WARPS}")
        for name, val in (("transition", p), ("emission_means", means),
                          ("emission_covs", covs), ("initial", init)):
            object.__setattr__(self, name, val)

    @property
    def n_states(self):
        return self.transition.shape[0]

    @property
    def obs_dim(self):
        return 3 if self.warp == "swissroll" else 2


@dataclass(frozen=True)
class LabeledTrajectory:
    observations: np.ndarray
    hidden: np.ndarray


def _check_stochastic(p):
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise DataError(f"transition matrix must be square, got shape {p.shape}")
    if np.any(p < 0) or np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-12:
        raise DataError("transition matrix must be row-stochastic")


def sample_chain(transition, length, rng, start=None):
    """Sample a hidden state sequence of ``length`` steps."""
    transition = np.asarray(transition, dtype=np.float64)
    n = transition.shape[0]
    cum = np.cumsum(transition, axis=1)
    cum[:, -1] = 1.0
    u = rng.random(length)
    states = np.empty(length, dtype=np.int64)
    s = int(start) if start is not None else 0
    states[0] = s
    rows = cum.tolist()
    for t in range(1, length):
        row = rows[s]
        x = u[t]
        s = 0
        while x >= row[s]:
            s += 1
        if s >= n:
            s = n - 1
        states[t] = s
    return states


def warp_sqrt(xy):
    """``(x, y) -> (x, y + sqrt(max(x, 0)))`` row by row."""
    xy = np.asarray(xy, dtype=np.float64)
    out = xy.copy()
    out[:, 1] = xy[:, 1] + np.sqrt(np.maximum(xy[:, 0], 0.0))
    return out


def warp_swissroll(xy):
    """``(x, y) -> (x cos x, y, x sin x)`` row by row."""
    xy = np.asarray(xy, dtype=np.float64)
    x, y = xy[:, 0], xy[:, 1]
    return np.column_stack([x * np.cos(x), y, x * np.sin(x)])


def apply_warp(xy, warp):
    if warp == "none":
        return np.asarray(xy, dtype=np.float64)
    if warp == "sqrt":
        return warp_sqrt(xy)
    if warp == "swissroll":
        return warp_swissroll(xy)
    raise DataError(f"unknown warp {warp!r}")


def sample_hmm(spec, length, seed):
    """Sample hidden states and warped Gaussian emissions.

    Deterministic for a given ``seed``.
    """
    length = int(length)
    if length < 2:
        raise DataError(f"trajectory length must be at least 2, got {length}")
    rng = np.random.default_rng(seed)
    start = rng.choice(spec.n_states, p=spec.initial)
    hidden = sample_chain(spec.transition, length, rng, start=start)
    chol = np.stack([_psd_factor(c) for c in spec.emission_covs])
    noise = rng.standard_normal((length, 2))
    xy = spec.emission_means[hidden] + np.einsum("tij,tj->ti", chol[hidden], noise)
    return LabeledTrajectory(apply_warp(xy, spec.warp), hidden)


def _psd_factor(c):
    vals, vecs = np.linalg.eigh(c)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def reference_timescales(transition, lag=1):
    """Implied timescales ``-lag / ln|lambda_i|`` of a transition matrix.

    Eigenvalues are sorted by modulus; the stationary one is skipped.
    Eigenvalues of modulus one give ``inf``.
    """
    p = np.asarray(transition, dtype=np.float64)
    _check_stochastic(p)
    vals = np.linalg.eigvals(p)
    mods = np.sort(np.abs(vals))[::-1][1:]
    with np.errstate(divide="ignore"):
        ts = np.where(mods >= 1.0 - 1e-14, np.inf, -lag / np.log(np.clip(mods, 0.0, 1.0)))
    return ts


def stationary_distribution(transition):
    p = np.asarray(transition, dtype=np.float64)
    vals, vecs = np.linalg.eig(p.T)
    pi = np.real(vecs[:, np.argmax(np.real(vals))])
    return pi / pi.sum()


def two_state_spec(**overrides):
    """Default two-state benchmark with the square-root warp."""
    params = dict(
        transition=np.array([[0.99, 0.01], [0.01, 0.99]]),
        emission_means=np.array([[2.0, 0.0], [2.0, 0.5]]),
        emission_covs=np.array([np.diag([2.25, 0.0025]), np.diag([2.25, 0.0025])]),
        initial=np.array([0.5, 0.5]),
        warp="sqrt",
    )
    params.update(overrides)
    return HmmSpec(**params)


def chain_transition(n_states, hop):
    """Linear chain ``0 <-> 1 <-> ... <-> n-1`` with probability ``hop`` per neighbour."""
    p = np.zeros((n_states, n_states))
    for i in range(n_states):
        if i > 0:
            p[i, i - 1] = hop
        if i < n_states - 1:
            p[i, i + 1] = hop
        p[i, i] = 1.0 - p[i].sum()
    return p


def four_state_spec(**overrides):
    """Default four-state benchmark with the swissroll warp."""
    std = 0.6
    params = dict(
        transition=chain_transition(4, 0.03),
        # states sit on the corners of a square, chained along three of its edges
        emission_means=np.array([[3.0, 0.0], [3.0, 10.0], [8.0, 10.0], [8.0, 0.0]]),
        emission_covs=np.array([np.eye(2) * std ** 2] * 4),
        initial=np.full(4, 0.25),
        warp="swissroll",
    )
    params.update(overrides)
    return HmmSpec(**params)


BUILTIN_SPECS = {
    "two-state": two_state_spec,
    "swissroll": four_state_spec,
}


def builtin_spec(name, **overrides):
    try:
        factory = BUILTIN_SPECS[name]
    except KeyError:
        raise DataError(f"unknown generator {name!r}; choose from {sorted(BUILTIN_SPECS)}") from None
    return factory(**overrides)
