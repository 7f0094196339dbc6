"""Fully connected regression network (numpy) trained by mini-batch gradient descent on MSE."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .trace import DataError


class DivergenceError(ArithmeticError):
    def __init__(self, epoch: int):
        super().__init__(f"training diverged (non-finite loss) at epoch {epoch}")
        self.epoch = epoch


@dataclass
class FcnModel:
    """Rectifier hidden layers, identity output. ``weights[l]`` has shape (in, out)."""

    weights: list
    biases: list
    activation: str = "relu"

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "FcnModel":
        return FcnModel([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                        self.activation)

    def _check(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_inputs:
            raise ValueError(f"model expects {self.n_inputs} inputs, got {X.shape[1]}")
        return X

    def forward(self, X):
        """Return the output and the list of layer activations (input first)."""
        acts = [self._check(X)]
        h = acts[0]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if i == last else np.maximum(z, 0.0)
            acts.append(h)
        return h[:, 0] if h.shape[1] == 1 else h, acts

    def predict(self, X) -> np.ndarray:
        return self.forward(X)[0]

    def get_params(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])

    def set_params(self, theta) -> None:
        theta = np.asarray(theta, dtype=float)
        pos = 0
        for w, b in zip(self.weights, self.biases):
            w[...] = theta[pos:pos + w.size].reshape(w.shape)
            pos += w.size
            b[...] = theta[pos:pos + b.size]
            pos += b.size

    def save(self, path) -> None:
        """Flat text: a header line, then each layer's weight rows and bias row."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"fcn 1 {self.activation} " + " ".join(map(str, self.layer_sizes)) + "\n")
            for w, b in zip(self.weights, self.biases):
                for row in w:
                    fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
                fh.write(" ".join(f"{v:.17g}" for v in b) + "\n")

    @classmethod
    def load(cls, path) -> "FcnModel":
        with open(path, encoding="utf-8") as fh:
            head = fh.readline().split()
            if len(head) < 5 or head[0] != "fcn":
                raise DataError(f"{path}: not an fcn model file")
            sizes = [int(s) for s in head[3:]]
            rows = [np.array(line.split(), dtype=float) for line in fh if line.strip()]
        weights, biases, pos = [], [], 0
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(np.vstack(rows[pos:pos + fan_in]).reshape(fan_in, fan_out))
            biases.append(rows[pos + fan_in].reshape(fan_out))
            pos += fan_in + 1
        return cls(weights, biases, head[2])


def init(layer_sizes, seed=None, zero_output: bool = False) -> FcnModel:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 3:
        raise ValueError("need input, at least one hidden layer, and output sizes")
    if min(sizes) < 1:
        raise ValueError("layer widths must be >= 1")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    if zero_output:
        weights[-1][...] = 0.0
    return FcnModel(weights, biases)


def mse_and_grad(model: FcnModel, X, y):
    """MSE loss ``mean((y - f(x))^2)`` and its gradient w.r.t. every weight and bias."""
    out, acts = model.forward(X)
    y = np.asarray(y, dtype=float).reshape(out.shape)
    n = acts[0].shape[0]
    resid = out - y
    loss = float(np.mean(resid ** 2))
    delta = (2.0 / n) * resid.reshape(n, -1)
    gw, gb = [None] * len(model.weights), [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (acts[i] > 0)
    return loss, gw, gb


def mse(model: FcnModel, X, y) -> float:
    return float(np.mean((model.predict(X) - np.asarray(y, dtype=float)) ** 2))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 0.005
    patience: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if not 0 < self.learning_rate <= 0.1:
            raise ValueError("learning_rate must lie in (0, 0.1]")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be positive")


@dataclass
class TrainResult:
    model: FcnModel
    history: list = field(default_factory=list)  # (epoch, train_mse, val_mse)
    best_epoch: int = 0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_mse", "val_mse"])
            for e, tr, va in self.history:
                w.writerow([e, f"{tr:.17g}", f"{va:.17g}"])


def train(model: FcnModel, X, y, X_val=None, y_val=None,
          config: TrainConfig = TrainConfig()) -> TrainResult:
    """Mini-batch gradient descent; returns the best-validation checkpoint.

    Epoch 0 in the history is the untrained model. Without validation data
    the training loss selects the checkpoint. ``model`` is not modified.
    """
    X = model._check(X)
    y = np.asarray(y, dtype=float)
    if y.shape[0] != X.shape[0]:
        raise ValueError("X and y lengths differ")
    if X_val is None:
        X_val, y_val = X, y
    X_val = model._check(X_val)
    rng = np.random.default_rng(config.seed)
    net = model.copy()
    n = X.shape[0]

    def record(epoch):
        tr, va = mse(net, X, y), mse(net, X_val, y_val)
        if not (np.isfinite(tr) and np.isfinite(va)):
            raise DivergenceError(epoch)
        history.append((epoch, tr, va))
        return va

    history = []
    # overflow surfaces as a non-finite loss, which record() reports as DivergenceError
    with np.errstate(over="ignore", invalid="ignore"):
        best_val = record(0)
        best, best_epoch, stale = net.copy(), 0, 0
        for epoch in range(1, config.epochs + 1):
            perm = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                idx = perm[start:start + config.batch_size]
                _, gw, gb = mse_and_grad(net, X[idx], y[idx])
                for w, b, dw, db in zip(net.weights, net.biases, gw, gb):
                    w -= config.learning_rate * dw
                    b -= config.learning_rate * db
            va = record(epoch)
            if va < best_val:
                best_val, best, best_epoch, stale = va, net.copy(), epoch, 0
            else:
                stale += 1
                if config.patience is not None and stale >= config.patience:
                    break
    return TrainResult(best, history, best_epoch)


def bootstrap_augment(X, y, n_resamples: int, seed=None) -> list[tuple[np.ndarray, np.ndarray]]:
    """``n_resamples`` independent bootstrap replicates of (X, y)."""
    if n_resamples < 1:
        raise ValueError("n_resamples must be >= 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if n < 1:
        raise DataError("cannot bootstrap an empty dataset")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_resamples):
        idx = rng.integers(0, n, size=n)
        out.append((X[idx], y[idx]))
    return out


def concatenate(samples) -> tuple[np.ndarray, np.ndarray]:
    return np.vstack([s[0] for s in samples]), np.concatenate([s[1] for s in samples])


@dataclass
class Ensemble:
    """Average of several networks (bootstrap aggregation mode)."""

    members: list

    @property
    def n_inputs(self) -> int:
        return self.members[0].n_inputs

    @property
    def n_params(self) -> int:
        return sum(m.n_params for m in self.members)

    def member_predictions(self, X) -> np.ndarray:
        return np.array([m.predict(X) for m in self.members])

    def predict(self, X) -> np.ndarray:
        return self.member_predictions(X).mean(axis=0)


def train_bootstrap(hidden, X, y, X_val=None, y_val=None, config: TrainConfig = TrainConfig(),
                    n_resamples: int = 100, mode: str = "augment", seed=None,
                    init_seed=None):
    """Train on bootstrap replicates of (X, y).

    ``mode="augment"`` trains one network on the concatenated replicates;
    ``mode="ensemble"`` trains one network per replicate and averages them.
    Returns a :class:`TrainResult` (augment) or an :class:`Ensemble`.
    """
    X = np.asarray(X, dtype=float)
    sizes = (X.shape[1], *hidden, 1)
    samples = bootstrap_augment(X, y, n_resamples, seed)
    if mode == "augment":
        Xa, ya = concatenate(samples)
        return train(init(sizes, init_seed), Xa, ya, X_val, y_val, config)
    if mode == "ensemble":
        members = []
        for i, (Xb, yb) in enumerate(samples):
            cfg = TrainConfig(config.epochs, config.batch_size, config.learning_rate,
                              config.patience, config.seed + i)
            members.append(train(init(sizes, None if init_seed is None else init_seed + i),
                                 Xb, yb, X_val, y_val, cfg).model)
        return Ensemble(members)
    raise ValueError(f"unknown bootstrap mode {mode!r}")


def evaluate(model, X, y) -> tuple[float, int]:
    """Held-out MSE and parameter count."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_inputs:
        raise ValueError(f"model expects {model.n_inputs} inputs, got {X.shape[1]}")
    return float(np.mean((model.predict(X) - np.asarray(y, dtype=float)) ** 2)), model.n_params
