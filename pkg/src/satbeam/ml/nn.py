"""Fully connected networks trained with backpropagation (numpy only)."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..dataset import FeatureScaler

log = logging.getLogger(__name__)

EPS = 1e-7
MODEL_SCHEMA = "satbeam.mlp/1"


class NumericError(FloatingPointError):
    """Non-finite values appeared during a forward or backward pass."""


class DivergenceError(NumericError):
    pass


@dataclass
class MlpModel:
    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    output: str = "sigmoid"  # or "softmax"
    scaler: FeatureScaler | None = None
    schema: str = MODEL_SCHEMA

    def __post_init__(self):
        if self.output not in ("sigmoid", "softmax"):
            raise ValueError(f"unknown output activation {self.output!r}")
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("layer count mismatch")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.layer_dims[i], self.layer_dims[i + 1]) or b.shape != (self.layer_dims[i + 1],):
                raise ValueError(f"layer {i} shape {W.shape} does not match dims {self.layer_dims}")

    @classmethod
    def init(cls, layer_dims, seed: int = 0, output: str = "sigmoid", scaler=None) -> "MlpModel":
        """Uniform init in +/- 1/sqrt(fan_in), seeded."""
        rng = np.random.default_rng(seed)
        ws, bs = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            lim = 1.0 / math.sqrt(fan_in)
            ws.append(rng.uniform(-lim, lim, (fan_in, fan_out)))
            bs.append(rng.uniform(-lim, lim, fan_out))
        return cls(list(layer_dims), ws, bs, output, scaler)

    @property
    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self) -> "MlpModel":
        return MlpModel(list(self.layer_dims), [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases], self.output, self.scaler, self.schema)

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "layer_dims": self.layer_dims,
            "output": self.output,
            "weights": [w.ravel().tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "scaler": None if self.scaler is None else self.scaler.to_dict(),
        }

    @classmethod
    def from_dict(cls, d) -> "MlpModel":
        if d.get("schema") != MODEL_SCHEMA:
            raise ValueError(f"model schema {d.get('schema')!r} != {MODEL_SCHEMA!r}")
        dims = d["layer_dims"]
        ws = [np.asarray(w, float).reshape(dims[i], dims[i + 1]) for i, w in enumerate(d["weights"])]
        bs = [np.asarray(b, float) for b in d["biases"]]
        sc = None if d.get("scaler") is None else FeatureScaler.from_dict(d["scaler"])
        return cls(dims, ws, bs, d["output"], sc)


def sigmoid(z):
    # split by sign to avoid overflow in exp
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_cache(model: MlpModel, x: np.ndarray):
    acts = [x]
    pre = []
    a = x
    last = len(model.weights) - 1
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ W + b
        if not np.isfinite(z).all():
            raise NumericError(f"non-finite pre-activation at layer {i}")
        pre.append(z)
        if i < last:
            a = np.maximum(z, 0.0)
        else:
            a = sigmoid(z) if model.output == "sigmoid" else softmax(z)
        acts.append(a)
    return acts, pre


def mlp_forward(model: MlpModel, features) -> np.ndarray:
    """Forward pass on normalized features, shape (8,) or (B, 8)."""
    x = np.asarray(features, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.layer_dims[0]:
        raise ValueError(f"expected {model.layer_dims[0]} input features, got {x.shape[1]}")
    if not np.isfinite(x).all():
        raise NumericError("non-finite input features")
    out = _forward_cache(model, x)[0][-1]
    return out[0] if single else out


def bce_loss(predictions, labels) -> float:
    """Mean binary cross-entropy with predictions clamped to [EPS, 1 - EPS]."""
    p = np.asarray(predictions, float)
    y = np.asarray(labels, float)
    if np.isnan(p).any():
        raise NumericError("NaN in predictions")
    p = np.clip(p, EPS, 1 - EPS)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def ce_loss(probs, labels) -> float:
    """Mean categorical cross-entropy for integer class labels."""
    p = np.asarray(probs, float)
    if np.isnan(p).any():
        raise NumericError("NaN in predictions")
    y = np.asarray(labels, int)
    return float(-np.mean(np.log(np.clip(p[np.arange(len(y)), y], EPS, 1.0))))


def loss_and_grads(model: MlpModel, x: np.ndarray, y: np.ndarray):
    """Loss and parameter gradients (ordered like ``model.params``)."""
    acts, pre = _forward_cache(model, x)
    out = acts[-1]
    n = len(x)
    if model.output == "sigmoid":
        loss = bce_loss(out, y)
        # d(mean BCE)/dz = (p - y) / count, zero where the clamp is active
        active = (out > EPS) & (out < 1 - EPS)
        delta = np.where(active, out - y, 0.0) / y.size
    else:
        loss = ce_loss(out, y)
        onehot = np.zeros_like(out)
        onehot[np.arange(n), y] = 1.0
        picked = out[np.arange(n), y]
        delta = np.where((picked > EPS)[:, None], out - onehot, 0.0) / n
    grads = [None] * (2 * len(model.weights))
    for i in range(len(model.weights) - 1, -1, -1):
        gW = acts[i].T @ delta
        gb = delta.sum(axis=0)
        if not (np.isfinite(gW).all() and np.isfinite(gb).all()):
            raise NumericError(f"non-finite gradient at layer {i}")
        grads[2 * i], grads[2 * i + 1] = gW, gb
        if i:
            delta = (delta @ model.weights[i].T) * (pre[i - 1] > 0)
    return loss, grads


def loss_value(model: MlpModel, x, y) -> float:
    out = _forward_cache(model, np.atleast_2d(x))[0][-1]
    return bce_loss(out, y) if model.output == "sigmoid" else ce_loss(out, y)


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 128
    learning_rate: float = 1e-3
    optimizer: str = "adam"  # or "sgd"
    patience: int = 10
    rng_seed: int = 0
    threshold: float = 0.5
    hidden: tuple = (256, 512, 384)
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0 or self.patience < 1:
            raise ValueError("epochs, batch_size, learning_rate and patience must be positive")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        self.hidden = tuple(int(h) for h in self.hidden)


@dataclass
class TrainingCurve:
    rows: list = field(default_factory=list)  # (epoch, train_loss, val_loss)
    best_epoch: int = 0

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("epoch,train_loss,val_loss\n")
            for e, tr, va in self.rows:
                fh.write(f"{e},{tr!r},{va!r}\n")


class _Adam:
    def __init__(self, params, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class _Sgd:
    def __init__(self, params, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


def fit_network(model: MlpModel, x_train, y_train, x_val, y_val, cfg: TrainConfig):
    """Mini-batch training with seeded shuffling; returns the best-validation snapshot.

    Without validation rows the final-epoch model is returned.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    opt = _Adam(model.params, cfg.learning_rate) if cfg.optimizer == "adam" else _Sgd(model.params, cfg.learning_rate)
    curve = TrainingCurve()
    has_val = x_val is not None and len(x_val) > 0
    best, best_val, stale = model.copy(), math.inf, 0
    n = len(x_train)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            try:
                loss, grads = loss_and_grads(model, x_train[idx], y_train[idx])
            except NumericError as exc:
                raise DivergenceError(f"training diverged at epoch {epoch} ({exc}); lower the learning rate") from exc
            if not math.isfinite(loss):
                raise DivergenceError(f"loss became {loss} at epoch {epoch}; lower the learning rate")
            if cfg.weight_decay:
                for i, W in enumerate(model.weights):
                    grads[2 * i] = grads[2 * i] + cfg.weight_decay * W
            opt.step(model.params, grads)
            total += loss * len(idx)
        train_loss = total / n
        val_loss = loss_value(model, x_val, y_val) if has_val else math.nan
        curve.rows.append((epoch, train_loss, val_loss))
        if has_val:
            if val_loss < best_val:
                best, best_val, stale = model.copy(), val_loss, 0
                curve.best_epoch = epoch
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    if not has_val:
        best = model.copy()
        curve.best_epoch = curve.rows[-1][0]
    log.info("trained %d epochs, best epoch %d", len(curve.rows), curve.best_epoch)
    return best, curve
