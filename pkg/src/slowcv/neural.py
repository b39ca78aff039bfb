"""Time-lagged autoencoder: a numpy multilayer perceptron with manual backprop.

The network maps a standardized frame ``x_t`` through ``encoder_hidden``
layers to a ``latent_dim`` bottleneck and back through ``decoder_hidden``
layers to the standardized frame ``y_{t+lag}``. It is trained with minibatch
Adam on the mean squared lag-``lag`` reconstruction error.

Layout of ``params``: a list ``[(W_0, b_0), (W_1, b_1), ...]`` with
``W_i`` of shape ``(fan_in, fan_out)`` acting on row vectors,
``h = a @ W + b``.
"""

import copy
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import numerics
from .errors import ShapeError, TrainingError
from .stats import (
    apply_whitener,
    as_trajectories,
    diagonal_whitener,
    make_whitener,
    raw_pairs,
    split_blocks,
    unapply_whitener,
    Whitener,
)

ACTIVATIONS = ("leaky_relu", "identity")
STANDARDIZERS = ("zscore", "center", "whiten", "none")


@dataclass(frozen=True)
class MlpSpec:
    """Layer layout of a time-lagged autoencoder.

    ``decoder_hidden`` defaults to the reverse of ``encoder_hidden``. The
    bottleneck and output layers are affine; every hidden layer applies the
    activation followed by dropout.
    """

    input_dim: int
    encoder_hidden: tuple = (50,)
    latent_dim: int = 1
    decoder_hidden: tuple = None
    leaky_alpha: float = 0.001
    dropout_p: float = 0.5
    activation: str = "leaky_relu"

    def __post_init__(self):
        enc = tuple(int(h) for h in self.encoder_hidden)
        dec = enc[::-1] if self.decoder_hidden is None else tuple(int(h) for h in self.decoder_hidden)
        object.__setattr__(self, "encoder_hidden", enc)
        object.__setattr__(self, "decoder_hidden", dec)
        if dec != enc[::-1]:
            raise ValueError(f"decoder_hidden {dec} must mirror encoder_hidden {enc}")
        if any(h < 1 for h in enc) or self.input_dim < 1 or self.latent_dim < 1:
            raise ValueError("all layer widths must be at least 1")
        if self.latent_dim >= self.input_dim:
            raise ValueError(
                f"latent_dim ({self.latent_dim}) must be smaller than input_dim ({self.input_dim})"
            )
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    @property
    def widths(self):
        return (self.input_dim, *self.encoder_hidden, self.latent_dim, *self.decoder_hidden, self.input_dim)

    @property
    def n_layers(self):
        return len(self.widths) - 1

    @property
    def latent_layer(self):
        """Index of the layer whose output is the latent vector."""
        return len(self.encoder_hidden)

    def is_hidden(self, i):
        return i != self.latent_layer and i != self.n_layers - 1

    def to_dict(self):
        d = asdict(self)
        d["encoder_hidden"] = list(self.encoder_hidden)
        d["decoder_hidden"] = list(self.decoder_hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["encoder_hidden"] = tuple(d.get("encoder_hidden", ()))
        if d.get("decoder_hidden") is not None:
            d["decoder_hidden"] = tuple(d["decoder_hidden"])
        return cls(**d)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 128
    max_epochs: int = 50
    early_stop_patience: int = 5
    train_fraction: float = 2.0 / 3.0
    n_blocks: int = 12
    standardize: str = "zscore"

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.standardize not in STANDARDIZERS:
            raise ValueError(f"standardize must be one of {STANDARDIZERS}")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be positive")


@dataclass
class TaeModel:
    spec: MlpSpec
    params: list
    input_standardizer: Whitener
    output_standardizer: Whitener
    lag: int
    history: list = field(default_factory=list)
    method: str = "tae"

    @property
    def dim(self):
        return self.spec.latent_dim

    def encode(self, data):
        return encode_tae(self, data)

    def predict(self, data):
        return predict_tae(self, data)

    def to_dict(self):
        return {
            "model": "tae",
            "method": "tae",
            "lag": int(self.lag),
            "spec": self.spec.to_dict(),
            "layers": [
                {"shape": list(w.shape), "weight": w.ravel().tolist(), "bias": b.tolist()}
                for w, b in self.params
            ],
            "input_standardizer": self.input_standardizer.to_dict(),
            "output_standardizer": self.output_standardizer.to_dict(),
            "history": self.history,
        }

    @classmethod
    def from_dict(cls, d):
        params = [
            (
                np.asarray(layer["weight"], dtype=np.float64).reshape(layer["shape"]),
                np.asarray(layer["bias"], dtype=np.float64),
            )
            for layer in d["layers"]
        ]
        return cls(
            spec=MlpSpec.from_dict(d["spec"]),
            params=params,
            input_standardizer=Whitener.from_dict(d["input_standardizer"]),
            output_standardizer=Whitener.from_dict(d["output_standardizer"]),
            lag=int(d["lag"]),
            history=list(d.get("history", [])),
        )


def glorot_bound(fan_in, fan_out):
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_params(spec, seed):
    """Glorot-uniform weights and zero biases, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    params = []
    for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
        bound = glorot_bound(fan_in, fan_out)
        params.append((rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return params


def leaky_relu(u, alpha):
    return np.where(u >= 0, u, alpha * u)


def leaky_relu_slope(u, alpha):
    # slope 1 at exactly u == 0
    return np.where(u >= 0, 1.0, alpha)


def _check_batch(spec, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ShapeError(f"batch of shape {x.shape} does not match input_dim {spec.input_dim}")
    return x


def forward(params, spec, x, train=False, rng=None, stop=None):
    """Forward pass on standardized inputs.

    Parameters
    ----------
    params, spec
        Network parameters and layout.
    x : (B, N) ndarray
        Standardized input frames.
    train : bool
        Apply dropout (inverted scaling by ``1/(1-p)``); needs ``rng``.
    stop : int, optional
        Return the output of layer ``stop - 1`` instead (``spec.latent_layer
        + 1`` yields the latent vector).

    Returns
    -------
    out : ndarray
    cache : list
        Per layer ``(input, pre_activation, dropout_mask)`` for backprop.
    """
    x = _check_batch(spec, x)
    n_layers = spec.n_layers if stop is None else stop
    p = spec.dropout_p
    use_dropout = train and p > 0.0
    if use_dropout and rng is None:
        raise ValueError("train-mode forward with dropout needs an rng")
    leaky = spec.activation == "leaky_relu"
    cache = []
    a = x
    for i in range(n_layers):
        w, b = params[i]
        u = a @ w + b
        mask = None
        if spec.is_hidden(i):
            h = leaky_relu(u, spec.leaky_alpha) if leaky else u
            if use_dropout:
                mask = (rng.random(u.shape) >= p) / (1.0 - p)
                h = h * mask
        else:
            h = u
        cache.append((a, u, mask))
        a = h
    if not np.all(np.isfinite(a)):
        raise TrainingError("non-finite activations in forward pass")
    return a, cache


def backward(params, spec, cache, grad_out):
    """Backpropagate ``grad_out`` (dL/d output) through a cached forward."""
    leaky = spec.activation == "leaky_relu"
    grads = [None] * len(cache)
    g = grad_out
    for i in range(len(cache) - 1, -1, -1):
        a, u, mask = cache[i]
        if spec.is_hidden(i):
            if mask is not None:
                g = g * mask
            if leaky:
                g = g * leaky_relu_slope(u, spec.leaky_alpha)
        w = params[i][0]
        grads[i] = (a.T @ g, g.sum(axis=0))
        if i > 0:
            g = g @ w.T
    return grads


def loss_and_grad(params, spec, x, y, train=False, rng=None):
    """Mean squared lag error ``(1/B) sum_b ||f(x_b) - y_b||^2`` and its gradient."""
    out, cache = forward(params, spec, x, train=train, rng=rng)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != out.shape:
        raise ShapeError(f"targets of shape {y.shape} do not match outputs {out.shape}")
    diff = out - y
    n = x.shape[0]
    loss = float(np.sum(diff * diff) / n)
    return loss, backward(params, spec, cache, (2.0 / n) * diff)


def mse(params, spec, x, y, chunk=65536):
    """Eval-mode loss over a full data set, in chunks."""
    total = 0.0
    for start in range(0, x.shape[0], chunk):
        out, _ = forward(params, spec, x[start:start + chunk])
        diff = out - y[start:start + chunk]
        total += float(np.sum(diff * diff))
    return total / x.shape[0]


def _flatten(params):
    return [arr for layer in params for arr in layer]


def _unflatten(flat):
    return [(flat[i], flat[i + 1]) for i in range(0, len(flat), 2)]


def adam_init(params):
    flat = _flatten(params)
    return {"m": [np.zeros_like(p) for p in flat], "v": [np.zeros_like(p) for p in flat]}


def adam_step(params, grads, state, t, cfg):
    """One bias-corrected Adam update; ``t`` counts steps from 1.

    Returns new ``(params, state)``; the inputs are left untouched.
    """
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(_flatten(params), _flatten(grads), state["m"], state["v"]):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_p.append(p - cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.eps))
        new_m.append(m)
        new_v.append(v)
    return _unflatten(new_p), {"m": new_m, "v": new_v}


def _adam_inplace(flat_params, flat_grads, state, t, cfg):
    b1, b2 = cfg.beta1, cfg.beta2
    step = cfg.learning_rate * math.sqrt(1.0 - b2 ** t) / (1.0 - b1 ** t)
    eps = cfg.eps * math.sqrt(1.0 - b2 ** t)
    for p, g, m, v in zip(flat_params, flat_grads, state["m"], state["v"]):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= step * m / (np.sqrt(v) + eps)


def fit_standardizer(block, kind, rel_tol=numerics.DEFAULT_REL_TOL):
    n_dim = block.shape[1]
    mean = block.mean(axis=0)
    if kind == "none":
        return diagonal_whitener(np.zeros(n_dim), np.ones(n_dim))
    if kind == "center":
        return diagonal_whitener(mean, np.ones(n_dim))
    if kind == "zscore":
        std = block.std(axis=0)
        # constant columns keep unit scale
        std[std <= 0] = 1.0
        return diagonal_whitener(mean, std)
    centered = block - mean
    cov = numerics.symmetrize(centered.T @ centered / block.shape[0])
    return make_whitener(cov, mean, rel_tol)


def _slice_blocks(arr, blocks):
    return np.concatenate([arr[a:b] for a, b in blocks])


def train_tae(data, lag, spec, cfg=None, seed=0, validation=None):
    """Train a time-lagged autoencoder by minibatch Adam with early stopping.

    Parameters
    ----------
    data : array_like, TimeSeries or list of those
        Training trajectories; pairs are formed within each one.
    lag : int
        Time lag between input and target frames.
    spec : MlpSpec
    cfg : TrainConfig, optional
    seed : int
        Controls initialization, the train/validation split, batch order
        and dropout masks.
    validation : optional
        Separate trajectories for early stopping. When omitted the lagged
        pairs are split into contiguous blocks, ``cfg.train_fraction`` of
        them for training.

    Returns
    -------
    TaeModel
        Parameters of the epoch with the lowest validation loss, plus the
        per-epoch history.
    """
    cfg = cfg or TrainConfig()
    x_all, y_all = raw_pairs(data, lag)
    if x_all.shape[1] != spec.input_dim:
        raise ShapeError(f"data has {x_all.shape[1]} dimensions, spec expects {spec.input_dim}")
    init_seq, split_seq, shuffle_seq = np.random.SeedSequence(seed).spawn(3)
    if validation is None:
        train_blocks, val_blocks = split_blocks(
            x_all.shape[0], cfg.train_fraction, cfg.n_blocks, np.random.default_rng(split_seq)
        )
        x_tr, y_tr = _slice_blocks(x_all, train_blocks), _slice_blocks(y_all, train_blocks)
        x_va, y_va = _slice_blocks(x_all, val_blocks), _slice_blocks(y_all, val_blocks)
    else:
        x_tr, y_tr = x_all, y_all
        x_va, y_va = raw_pairs(validation, lag)

    in_std = fit_standardizer(x_tr, cfg.standardize)
    out_std = fit_standardizer(y_tr, cfg.standardize)
    x_tr, x_va = apply_whitener(in_std, x_tr), apply_whitener(in_std, x_va)
    y_tr, y_va = apply_whitener(out_std, y_tr), apply_whitener(out_std, y_va)

    params = init_params(spec, init_seq)
    flat = _flatten(params)
    state = adam_init(params)
    rng = np.random.default_rng(shuffle_seq)
    best_params = copy.deepcopy(params)
    best_val = mse(params, spec, x_va, y_va)
    history = []
    since_best = 0
    t = 0
    n = x_tr.shape[0]
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            try:
                loss, grads = loss_and_grad(params, spec, x_tr[idx], y_tr[idx], train=True, rng=rng)
            except TrainingError as exc:
                raise TrainingError(f"training diverged in epoch {epoch}: {exc}", epoch) from exc
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss in epoch {epoch}", epoch)
            total += loss * idx.size
            t += 1
            _adam_inplace(flat, _flatten(grads), state, t, cfg)
        try:
            val = mse(params, spec, x_va, y_va)
        except TrainingError as exc:
            raise TrainingError(f"training diverged in epoch {epoch}: {exc}", epoch) from exc
        history.append({"epoch": epoch, "train_loss": total / n, "val_loss": val})
        if val < best_val:
            best_val = val
            best_params = copy.deepcopy(params)
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.early_stop_patience:
                break
    return TaeModel(spec, best_params, in_std, out_std, int(lag), history)


def _map(data, fn):
    if isinstance(data, (list, tuple)):
        return [fn(t) for t in as_trajectories(data)]
    return fn(as_trajectories(data)[0])


def encode_tae(model, data):
    """Latent coordinates (eval mode) of every frame."""
    spec = model.spec

    def _enc(z):
        out, _ = forward(model.params, spec, apply_whitener(model.input_standardizer, z),
                         stop=spec.latent_layer + 1)
        return out

    return _map(data, _enc)


def predict_tae(model, data):
    """Lag-tau forecast in the original coordinates (eval mode)."""

    def _pred(z):
        out, _ = forward(model.params, model.spec, apply_whitener(model.input_standardizer, z))
        return unapply_whitener(model.output_standardizer, out)

    return _map(data, _pred)
