"""Method comparison: whitened reconstruction error, CCA scores and the
repeated train/validate/MSM benchmark protocol.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import datagen, linear, msm, neural, numerics
from .errors import DataError, LagError, RankError, ShapeError, SlowCVError
from .stats import (
    apply_whitener,
    as_trajectories,
    covariances,
    lagged_pairs,
    make_whitener,
    raw_pairs,
    split_blocks,
    whiten_trajectories,
)

log = logging.getLogger(__name__)

METRICS = ("reconstruction_error", "cca", "its")


@dataclass(frozen=True)
class CcaResult:
    correlations: np.ndarray
    d_left: int
    d_right: int

    @property
    def score(self):
        return float(np.mean(self.correlations))


def target_whitener(train, lag, rel_tol=numerics.DEFAULT_REL_TOL):
    """Whitener of the lagged block ``y`` fitted on training pairs (``Ctt^{-1/2}``)."""
    pairs = lagged_pairs(train, lag)
    covs = covariances(pairs)
    return make_whitener(covs.ctt, pairs.mean_y, rel_tol)


def model_lag(model):
    """Lag the model was fitted at, or ``None`` for lag-agnostic PCA."""
    if getattr(model, "method", None) == "pca":
        return None
    return int(model.lag)


def reconstruction_error(model, data, lag, whitener=None, rel_tol=numerics.DEFAULT_REL_TOL):
    """Mean squared lag-``lag`` forecast error in whitened target coordinates.

    ``mean_t ||w(z_{t+lag}) - w(predict(z_t))||^2`` over the pairs of
    ``data``, with ``w`` the target whitener (fit on the training pairs;
    defaults to fitting it on ``data`` itself). PCA acts as a forecaster by
    reconstructing ``z_t``.
    """
    fitted = model_lag(model)
    if fitted is not None and fitted != int(lag):
        raise LagError(f"model was fitted at lag {fitted}, evaluation requested lag {lag}")
    if whitener is None:
        whitener = target_whitener(data, lag, rel_tol)
    x, y = raw_pairs(data, lag)
    diff = apply_whitener(whitener, y) - apply_whitener(whitener, model.predict(x))
    return float(np.mean(np.sum(diff * diff, axis=1)))


def _as_matrix(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ShapeError(f"expected a 1-d or 2-d signal, got shape {a.shape}")
    return a


def cca(a, b, rel_tol=numerics.DEFAULT_REL_TOL):
    """Canonical correlations between two signals of equal length.

    Singular values of ``Caa^{-1/2} Cab Cbb^{-1/2}`` with truncated
    whitening, restricted to ``min(rank_a, rank_b)`` values.
    """
    a, b = _as_matrix(a), _as_matrix(b)
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"signals differ in length: {a.shape[0]} vs {b.shape[0]}")
    n = a.shape[0]
    if n <= a.shape[1] + b.shape[1]:
        raise DataError(f"need more than {a.shape[1] + b.shape[1]} samples, got {n}")
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    try:
        wa, ra = numerics.inv_sqrt_truncated(numerics.symmetrize(a.T @ a / n), rel_tol)
        wb, rb = numerics.inv_sqrt_truncated(numerics.symmetrize(b.T @ b / n), rel_tol)
    except numerics.DegenerateCovarianceError as exc:
        raise RankError(f"signal is degenerate: {exc}") from exc
    s = numerics.svd(wa @ (a.T @ b / n) @ wb).singular_values
    return CcaResult(s[:min(ra, rb)].copy(), a.shape[1], b.shape[1])


def hidden_to_indicators(hidden, n_states):
    """One-hot encoding of hidden states with the last column dropped."""
    hidden = np.asarray(hidden, dtype=np.int64).ravel()
    if hidden.size and (hidden.min() < 0 or hidden.max() >= n_states):
        raise DataError(f"hidden state index outside [0, {n_states})")
    ind = np.zeros((hidden.size, n_states))
    ind[np.arange(hidden.size), hidden] = 1.0
    return ind[:, :n_states - 1]


def cca_score(encoded, hidden, n_states, rel_tol=numerics.DEFAULT_REL_TOL):
    """Mean canonical correlation between an encoding and the hidden-state indicators."""
    return cca(encoded, hidden_to_indicators(hidden, n_states), rel_tol).score


# -- benchmark protocol -------------------------------------------------------


@dataclass
class MsmSettings:
    k: int = 50
    lags: tuple = (1, 2, 5, 10)
    n_timescales: int = 1
    reversible: bool = True
    stride: int = 1
    max_iter: int = 200


@dataclass
class ProtocolConfig:
    """Everything a benchmark run needs.

    ``source`` is either ``{"generator": name, "length": T, "overrides": {...}}``
    or ``{"trajectories": [...], "hidden": [...], "n_states": S}`` for
    user-supplied data with a reference discrete signal. ``methods`` maps a
    method name (``tae``, ``tica``, ``tcca``, ``pca``) to its
    hyperparameters.
    """

    source: dict
    methods: dict
    lags: tuple = (1,)
    repetitions: int = 20
    base_seed: int = 0
    train_fraction: float = 2.0 / 3.0
    n_blocks: int = 12
    msm: MsmSettings = None
    its_lags: tuple = None
    workers: int = 1

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if any(int(lag) < 0 for lag in self.lags):
            raise ValueError("lags must be non-negative")
        self.lags = tuple(int(lag) for lag in self.lags)
        if self.its_lags is not None:
            self.its_lags = tuple(int(lag) for lag in self.its_lags)


@dataclass
class EnsembleSummary:
    """Per-repetition values and their median / 16th / 84th percentiles.

    ``cells[metric][method][lag]`` holds a dict with ``median``, ``p16``,
    ``p84``, ``values`` and ``complete``. For the ``its`` metric the lag key
    is the transformation lag and each entry maps MSM lag -> timescale
    index -> statistics.
    """

    cells: dict
    repetitions: int
    failures: list = field(default_factory=list)
    reference_timescales: list = None

    @property
    def complete(self):
        return not self.failures

    def to_dict(self):
        return {
            "repetitions": self.repetitions,
            "reference_timescales": self.reference_timescales,
            "failures": self.failures,
            "metrics": self.cells,
        }


def percentile_stats(values):
    """Median and the 16/84 percentiles (linear interpolation)."""
    arr = np.asarray([v for v in values if v is not None and np.isfinite(v)], dtype=np.float64)
    if arr.size == 0:
        return {"median": None, "p16": None, "p84": None}
    p16, med, p84 = np.percentile(arr, [16.0, 50.0, 84.0])
    return {"median": float(med), "p16": float(p16), "p84": float(p84)}


def _load_source(cfg, seed):
    src = cfg.source
    if "generator" in src:
        spec = datagen.builtin_spec(src["generator"], **_overrides(src.get("overrides", {})))
        traj = datagen.sample_hmm(spec, int(src.get("length", 100_000)), seed)
        return [traj.observations], [traj.hidden], spec.n_states, spec
    trajs = as_trajectories(src["trajectories"])
    hidden = src.get("hidden")
    if hidden is not None:
        hidden = [np.asarray(h, dtype=np.int64).ravel() for h in hidden]
    return trajs, hidden, src.get("n_states"), None


def _overrides(raw):
    return {k: (np.asarray(v, dtype=np.float64) if isinstance(v, (list, tuple)) else v)
            for k, v in raw.items()}


def _split(trajs, cfg, rng):
    """Cut every trajectory into contiguous blocks; shuffle blocks into train / validation."""
    train, val = [], []
    for traj in trajs:
        tr, va = split_blocks(traj.shape[0], cfg.train_fraction, cfg.n_blocks, rng)
        train.extend(traj[a:b] for a, b in tr)
        val.extend(traj[a:b] for a, b in va)
    return train, val


def fit_method(name, params, train, lag, seed):
    params = dict(params)
    dim = int(params.pop("dim", 1))
    if name == "tae":
        hidden = tuple(params.pop("hidden", (50,)))
        spec = neural.MlpSpec(
            input_dim=train[0].shape[1],
            encoder_hidden=hidden,
            latent_dim=dim,
            leaky_alpha=float(params.pop("leaky_alpha", 0.001)),
            dropout_p=float(params.pop("dropout_p", 0.5)),
            activation=params.pop("activation", "leaky_relu"),
        )
        tc = neural.TrainConfig(**params)
        return neural.train_tae(train, lag, spec, tc, seed=seed)
    if name == "tica":
        return linear.fit_tica(train, lag, dim, kinetic_map=bool(params.pop("kinetic_map", True)))
    if name == "tcca":
        return linear.fit_tcca(train, lag, dim)
    if name == "pca":
        return linear.fit_pca(train, dim)
    raise ValueError(f"unknown method {name!r}")


def _its_for(encoded, settings, seed):
    enc, _ = whiten_trajectories(encoded)
    pooled = np.concatenate(enc)
    disc = msm.kmeans(pooled[::settings.stride], settings.k, seed=seed, max_iter=settings.max_iter)
    dtrajs = [msm.assign(e, disc.centers)[0] for e in enc]
    table = msm.its_curve(dtrajs, settings.k, settings.lags, settings.n_timescales, settings.reversible)
    return {int(lag): [None if not np.isfinite(t) else float(t) for t in ts]
            for lag, ts, _ in table.rows()}


def run_repetition(cfg, rep):
    """One repetition: data, split, fit all methods, score them."""
    seed = cfg.base_seed + rep
    rng = np.random.default_rng(seed)
    trajs, hidden, n_states, _ = _load_source(cfg, seed)
    train, val = _split(trajs, cfg, rng)
    settings = cfg.msm
    its_lags = cfg.its_lags if cfg.its_lags is not None else cfg.lags
    out = {"rep": rep, "seed": seed, "values": {}, "errors": []}
    for name in sorted(cfg.methods):
        for lag in cfg.lags:
            key = (name, lag)
            try:
                model = fit_method(name, cfg.methods[name], train, lag, seed)
                whit = target_whitener(train, lag)
                vals = {"reconstruction_error": reconstruction_error(model, val, lag, whit)}
                encoded = model.encode(trajs)
                white, _ = whiten_trajectories(encoded)
                if hidden is not None:
                    vals["cca"] = cca_score(np.concatenate(white), np.concatenate(hidden), n_states)
                if settings is not None and lag in its_lags:
                    vals["its"] = _its_for(white, settings, seed)
                out["values"][key] = vals
            except SlowCVError as exc:
                log.warning("repetition %d, %s at lag %d failed: %s", rep, name, lag, exc)
                out["errors"].append({"rep": rep, "method": name, "lag": lag, "error": str(exc)})
    if hidden is not None and settings is not None:
        table = msm.its_curve(hidden, n_states, settings.lags, settings.n_timescales, settings.reversible)
        out["reference_its"] = {int(lag): [None if not np.isfinite(t) else float(t) for t in ts]
                                for lag, ts, _ in table.rows()}
    return out


def _aggregate(cfg, results):
    cells = {m: {} for m in METRICS}
    failures = [err for res in results for err in res["errors"]]
    its_lags = cfg.its_lags if cfg.its_lags is not None else cfg.lags
    for name in sorted(cfg.methods):
        for metric in ("reconstruction_error", "cca"):
            cells[metric][name] = {}
        cells["its"][name] = {}
        for lag in cfg.lags:
            vals = [res["values"].get((name, lag)) for res in results]
            done = [v for v in vals if v is not None]
            complete = len(done) == len(results)
            for metric in ("reconstruction_error", "cca"):
                series = [v[metric] for v in done if metric in v]
                if not series:
                    continue
                cells[metric][name][str(lag)] = {**percentile_stats(series), "values": series,
                                                 "complete": complete}
            if cfg.msm is not None and lag in its_lags:
                cells["its"][name][str(lag)] = _its_cell(
                    [v["its"] for v in done if "its" in v], cfg.msm, complete)
    if cfg.msm is not None and any("reference_its" in r for r in results):
        cells["its"]["hidden"] = {"-": _its_cell([r["reference_its"] for r in results
                                                  if "reference_its" in r], cfg.msm, True)}
    for metric in list(cells):
        cells[metric] = {k: v for k, v in cells[metric].items() if v}
    return cells, failures


def _its_cell(per_rep, settings, complete):
    cell = {}
    for lag in settings.lags:
        cell[str(lag)] = []
        for i in range(settings.n_timescales):
            series = [rep[lag][i] for rep in per_rep]
            cell[str(lag)].append({**percentile_stats(series), "values": series, "complete": complete})
    return cell


def run_protocol(cfg, workers=None):
    """Run all repetitions (in parallel when ``workers > 1``) and aggregate.

    Repetition ``i`` uses seed ``base_seed + i`` for data generation, the
    train/validation split, network training and clustering; every method in
    a repetition sees the same split.
    """
    workers = cfg.workers if workers is None else int(workers)
    reps = range(cfg.repetitions)
    if workers > 1 and cfg.repetitions > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_repetition, [cfg] * cfg.repetitions, reps))
    else:
        results = [run_repetition(cfg, rep) for rep in reps]
    cells, failures = _aggregate(cfg, results)
    ref = None
    if "generator" in cfg.source:
        spec = datagen.builtin_spec(cfg.source["generator"], **_overrides(cfg.source.get("overrides", {})))
        ref = [float(t) for t in datagen.reference_timescales(spec.transition)]
    return EnsembleSummary(cells, cfg.repetitions, failures, ref)
