"""Feed-forward regression network with ELU hidden layers and MC-Dropout.

Layout: ``input -> 64 -> 64 -> 32 -> dropout -> 1`` (widths configurable).
Dropout is inverted (survivors scaled by ``1/(1-rate)``) and sits after the
last hidden layer only.  It is active during training and whenever
``dropout_on`` is requested at inference.

All parameters live in one flat float64 vector; the per-layer weight and
bias arrays are views into it, which keeps the Adam update a handful of
vector operations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datagen import derive_seed, make_rng
from .errors import TrainingDivergedError

CHECKPOINT_FORMAT = "gasshift-mlp"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int = 3
    hidden: tuple[int, ...] = (64, 64, 32)
    alpha: float = 1.0  # ELU
    dropout_rate: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))
        if self.input_dim < 1 or not self.hidden or min(self.hidden) < 1:
            raise ValueError("layer widths must be positive")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, 1)

    @property
    def n_params(self) -> int:
        s = self.layer_sizes
        return sum(s[i] * s[i + 1] + s[i + 1] for i in range(len(s) - 1))


class NetworkParams:
    """Weights ``W[l]`` of shape (fan_in, fan_out) and biases ``b[l]``, backed by ``flat``."""

    def __init__(self, config: NetworkConfig, flat=None):
        self.config = config
        self.flat = np.zeros(config.n_params) if flat is None else np.asarray(flat, dtype=float)
        if self.flat.shape != (config.n_params,):
            raise ValueError(f"expected {config.n_params} parameters, got {self.flat.shape}")
        self.weights, self.biases = _views(self.flat, config)

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.config, self.flat.copy())

    def __eq__(self, other):
        if not isinstance(other, NetworkParams):
            return NotImplemented
        return self.config == other.config and np.array_equal(self.flat, other.flat)


def _views(flat: np.ndarray, config: NetworkConfig):
    sizes = config.layer_sizes
    weights, biases = [], []
    pos = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(flat[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out))
        pos += fan_in * fan_out
        biases.append(flat[pos : pos + fan_out])
        pos += fan_out
    return weights, biases


def init(config: NetworkConfig = NetworkConfig(), seed: int = 0) -> NetworkParams:
    """He-uniform weights, limit ``sqrt(6 / fan_in)``; zero biases."""
    rng = make_rng(seed)
    params = NetworkParams(config)
    for W in params.weights:
        limit = np.sqrt(6.0 / W.shape[0])
        W[...] = rng.uniform(-limit, limit, size=W.shape)
    return params


def elu(z, alpha=1.0):
    return np.where(z > 0, z, alpha * np.expm1(np.minimum(z, 0.0)))


def elu_grad(z, alpha=1.0):
    return np.where(z > 0, 1.0, alpha * np.exp(np.minimum(z, 0.0)))


def dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    """Inverted-dropout multiplier: 0 with probability ``rate``, else ``1/(1-rate)``."""
    if rate == 0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _hidden(params: NetworkParams, X: np.ndarray):
    """Pre-activations and activations of every hidden layer."""
    alpha = params.config.alpha
    zs, hs = [], [X]
    h = X
    for W, b in zip(params.weights[:-1], params.biases[:-1]):
        z = h @ W + b
        h = elu(z, alpha)
        zs.append(z)
        hs.append(h)
    return zs, hs


def _output(params: NetworkParams, h_last: np.ndarray, mask=None) -> np.ndarray:
    if mask is not None:
        h_last = h_last * mask
    return (h_last @ params.weights[-1])[:, 0] + params.biases[-1][0]


def forward(params: NetworkParams, x, dropout_on: bool = False, rng: np.random.Generator | None = None):
    """Standardized network output for one input vector or an (n, d) batch."""
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    _, hs = _hidden(params, X)
    mask = None
    if dropout_on:
        if rng is None:
            raise ValueError("dropout_on requires an rng")
        mask = dropout_mask(rng, hs[-1].shape, params.config.dropout_rate)
    out = _output(params, hs[-1], mask)
    return float(out[0]) if single else out


def loss_and_grad(params: NetworkParams, X, y, mask=None, grad_out=None) -> tuple[float, np.ndarray]:
    """Mean squared error on a batch and its gradient w.r.t. ``params.flat``.

    ``mask`` is an optional inverted-dropout multiplier for the last hidden layer.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    cfg = params.config
    zs, hs = _hidden(params, X)
    h_last = hs[-1] if mask is None else hs[-1] * mask
    pred = (h_last @ params.weights[-1])[:, 0] + params.biases[-1][0]
    resid = pred - y
    loss = float(np.mean(resid * resid))

    grad = np.zeros(cfg.n_params) if grad_out is None else grad_out
    gW, gb = _views(grad, cfg)
    delta = (2.0 / len(y)) * resid[:, None]  # dL/dpred, shape (n, 1)
    gW[-1][...] = h_last.T @ delta
    gb[-1][...] = delta.sum(axis=0)
    dh = delta @ params.weights[-1].T
    if mask is not None:
        dh = dh * mask
    for layer in range(len(zs) - 1, -1, -1):
        dz = dh * elu_grad(zs[layer], cfg.alpha)
        gW[layer][...] = hs[layer].T @ dz
        gb[layer][...] = dz.sum(axis=0)
        if layer > 0:
            dh = dz @ params.weights[layer].T
    return loss, grad


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Z-score transform of the (T, V, N) features and the pressure target.

    A zero standard deviation is replaced by 1 so constant columns map to 0.
    """

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float

    @classmethod
    def fit(cls, X, y) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        x_std = X.std(axis=0)
        x_std = np.where(x_std > 0, x_std, 1.0)
        y_std = float(y.std())
        return cls(X.mean(axis=0), x_std, float(y.mean()), y_std if y_std > 0 else 1.0)

    def transform_x(self, X):
        return (np.asarray(X, dtype=float) - self.x_mean) / self.x_std

    def inverse_x(self, Z):
        return np.asarray(Z) * self.x_std + self.x_mean

    def transform_y(self, y):
        return (np.asarray(y, dtype=float) - self.y_mean) / self.y_std

    def inverse_y(self, z):
        return np.asarray(z) * self.y_std + self.y_mean

    def to_dict(self) -> dict:
        return {
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
            "y_mean": self.y_mean,
            "y_std": self.y_std,
        }

    @classmethod
    def from_dict(cls, d) -> "Standardizer":
        return cls(np.array(d["x_mean"], dtype=float), np.array(d["x_std"], dtype=float), float(d["y_mean"]), float(d["y_std"]))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    step_size: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or not self.step_size > 0:
            raise ValueError("epochs and batch_size must be >= 1 and step_size > 0")


@dataclass
class Adam:
    step_size: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray | None = field(default=None, repr=False)
    v: np.ndarray | None = field(default=None, repr=False)

    def update(self, theta: np.ndarray, grad: np.ndarray):
        """In-place Adam step on ``theta``."""
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m *= self.beta1
        self.m += (1 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1 - self.beta2) * grad * grad
        lr_t = self.step_size * np.sqrt(1 - self.beta2**self.t) / (1 - self.beta1**self.t)
        # eps is applied to the bias-corrected second moment
        eps_t = self.eps * np.sqrt(1 - self.beta2**self.t)
        theta -= lr_t * self.m / (np.sqrt(self.v) + eps_t)


@dataclass
class TrainResult:
    params: NetworkParams
    standardizer: Standardizer
    loss_trace: list[float]

    def __iter__(self):
        return iter((self.params, self.standardizer, self.loss_trace))


def train(dataset, net_config: NetworkConfig = NetworkConfig(), train_config: TrainConfig = TrainConfig()) -> TrainResult:
    """Fit the network to predict pressure from (T, V, N).

    ``dataset`` is a :class:`~gasshift.datagen.Dataset` or an ``(X, y)`` pair.
    Parameter init, minibatch shuffling and dropout masks each draw from a
    stream derived from ``train_config.seed``.
    """
    if isinstance(dataset, tuple):
        X, y = (np.asarray(a, dtype=float) for a in dataset)
    else:
        X, y = np.asarray(dataset.features), np.asarray(dataset.pressure)
    n = len(y)
    bs = train_config.batch_size
    if n < bs:
        raise ValueError(f"dataset size {n} is smaller than batch_size {bs}")

    std = Standardizer.fit(X, y)
    Xs = std.transform_x(X)
    ys = std.transform_y(y)

    seed = train_config.seed
    params = init(net_config, derive_seed(seed, "init"))
    shuffle_rng = make_rng(derive_seed(seed, "shuffle"))
    mask_rng = make_rng(derive_seed(seed, "dropout"))
    opt = Adam(train_config.step_size, train_config.beta1, train_config.beta2, train_config.adam_eps)
    grad = np.zeros(net_config.n_params)

    trace = []
    with np.errstate(over="ignore", invalid="ignore"):
        _fit_epochs(params, Xs, ys, train_config, opt, grad, shuffle_rng, mask_rng, trace)
    return TrainResult(params, std, trace)


def _fit_epochs(params, Xs, ys, train_config, opt, grad, shuffle_rng, mask_rng, trace):
    n = len(ys)
    bs = train_config.batch_size
    cfg = params.config
    rate = cfg.dropout_rate
    last_width = cfg.hidden[-1]
    for epoch in range(train_config.epochs):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            mask = dropout_mask(mask_rng, (len(idx), last_width), rate) if rate > 0 else None
            loss, _ = loss_and_grad(params, Xs[idx], ys[idx], mask, grad_out=grad)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
            opt.update(params.flat, grad)
            total += loss * len(idx)
        epoch_loss = total / n
        if not np.isfinite(epoch_loss) or not np.all(np.isfinite(params.flat)):
            raise TrainingDivergedError(f"non-finite loss or parameters after epoch {epoch}")
        trace.append(epoch_loss)


def predict_deterministic(params: NetworkParams, standardizer: Standardizer, x_raw):
    """Pressure prediction with dropout off, in atm."""
    X = np.asarray(x_raw, dtype=float)
    out = forward(params, standardizer.transform_x(np.atleast_2d(X)))
    out = standardizer.inverse_y(out)
    return float(out[0]) if X.ndim == 1 else out


@dataclass(frozen=True, eq=False)
class PredictiveSummary:
    """MC-Dropout mean and population standard deviation, in atm."""

    mean: np.ndarray | float
    std: np.ndarray | float
    n_passes: int


def summarize_passes(samples) -> PredictiveSummary:
    """Aggregate an (n_passes, ...) stack of predictions into mean and population std."""
    y = np.asarray(samples, dtype=float)
    # shift by the first pass so identical passes give exactly mu = y_1, sigma = 0
    d = y - y[0]
    dm = d.mean(axis=0)
    var = np.mean((d - dm) ** 2, axis=0)
    mean = y[0] + dm
    std = np.sqrt(var)
    if np.ndim(mean) == 0:
        mean, std = float(mean), float(std)
    return PredictiveSummary(mean, std, len(y))


def pass_rng(seed: int, pass_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(pass_index)])))


def mc_predict(
    params: NetworkParams,
    standardizer: Standardizer,
    x_raw,
    n_passes: int = 100,
    seed: int = 0,
    dropout_on: bool = True,
) -> PredictiveSummary:
    """Monte-Carlo-Dropout prediction for one input or an (n, 3) batch.

    Pass ``i`` draws its mask from ``SeedSequence([seed, i])`` so results do
    not depend on the order in which passes are evaluated.
    """
    if n_passes < 2:
        raise ValueError(f"n_passes must be >= 2, got {n_passes}")
    X = np.asarray(x_raw, dtype=float)
    single = X.ndim == 1
    Xs = standardizer.transform_x(np.atleast_2d(X))
    _, hs = _hidden(params, Xs)
    h_last = hs[-1]
    rate = params.config.dropout_rate
    samples = np.empty((n_passes, len(Xs)))
    for i in range(n_passes):
        mask = dropout_mask(pass_rng(seed, i), h_last.shape, rate) if dropout_on else None
        samples[i] = standardizer.inverse_y(_output(params, h_last, mask))
    if single:
        samples = samples[:, 0]
    return summarize_passes(samples)


def save_checkpoint(path, params: NetworkParams, standardizer: Standardizer) -> Path:
    """Write a JSON checkpoint; floats are stored with round-trip precision.

    Schema (version 1)::

        {"format": "gasshift-mlp", "version": 1,
         "config": {"input_dim", "hidden", "alpha", "dropout_rate"},
         "standardizer": {"x_mean", "x_std", "y_mean", "y_std"},
         "layers": [{"weight": [[...] row-major, fan_in x fan_out], "bias": [...]}, ...]}
    """
    cfg = params.config
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": {
            "input_dim": cfg.input_dim,
            "hidden": list(cfg.hidden),
            "alpha": cfg.alpha,
            "dropout_rate": cfg.dropout_rate,
        },
        "standardizer": standardizer.to_dict(),
        "layers": [{"weight": W.tolist(), "bias": b.tolist()} for W, b in zip(params.weights, params.biases)],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc) + "\n")
    return path


def load_checkpoint(path) -> tuple[NetworkParams, Standardizer]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION} checkpoint")
    c = doc["config"]
    cfg = NetworkConfig(c["input_dim"], tuple(c["hidden"]), c["alpha"], c["dropout_rate"])
    params = NetworkParams(cfg)
    if len(doc["layers"]) != len(params.weights):
        raise ValueError(f"{path}: layer count does not match config")
    for W, b, layer in zip(params.weights, params.biases, doc["layers"]):
        W[...] = np.array(layer["weight"], dtype=float).reshape(W.shape)
        b[...] = np.array(layer["bias"], dtype=float).reshape(b.shape)
    return params, Standardizer.from_dict(doc["standardizer"])
