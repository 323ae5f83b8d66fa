"""Feedforward grade classifier: 202 -> 128 -> 64 -> C, trained with Adam.

Everything runs in float64 numpy.  Weight matrices are stored fan-in by
fan-out so a layer is ``z = a @ W + b``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import modelio
from .errors import ShapeMismatch, TooFewPoints
from .features import FeatureModels, StandardizationStats

log = logging.getLogger(__name__)

KIND = "coingrade-mlp"


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 97
    batch_size: int = 32
    validation_fraction: float = 0.10
    hidden: tuple[int, ...] = (128, 64)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class MlpModel:
    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    label_map: list[int]
    stats: StandardizationStats | None = None
    feature_models: FeatureModels | None = None
    train_config: dict = field(default_factory=dict)

    def __post_init__(self):
        dims = self.layer_dims
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ShapeMismatch("one weight matrix and bias vector per layer expected")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[l], dims[l + 1]) or b.shape != (dims[l + 1],):
                raise ShapeMismatch(f"layer {l}: W{w.shape} b{b.shape} vs dims {dims}")
        if len(self.label_map) != dims[-1]:
            raise ShapeMismatch("label_map length must equal the output dimension")

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def class_index(self, grade) -> int:
        return self.label_map.index(int(grade))

    def copy(self) -> "MlpModel":
        return MlpModel(list(self.layer_dims), [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases], list(self.label_map), self.stats,
                        self.feature_models, dict(self.train_config))


def init_model(layer_dims, label_map, rng: np.random.Generator) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(list(layer_dims), weights, biases, list(label_map))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_input(model: MlpModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.layer_dims[0]:
        raise ShapeMismatch(f"expected {model.layer_dims[0]} features, got {x.shape[-1]}")
    return x


def logits(model: MlpModel, x) -> np.ndarray:
    a = _check_input(model, x)
    last = len(model.weights) - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        a = a @ w + b
        if l < last:
            a = np.maximum(a, 0.0)
    return a


def forward(model: MlpModel, x) -> np.ndarray:
    """Class probabilities for standardized input(s)."""
    return softmax(logits(model, x))


def loss_and_grads(model: MlpModel, X, y_idx):
    """Mean categorical cross-entropy and its gradient for every layer.

    Returns ``(loss, [(dW, db), ...])`` in layer order.
    """
    X = _check_input(model, X)
    y_idx = np.asarray(y_idx)
    n = X.shape[0]
    acts = [X]
    pre = []
    a = X
    last = len(model.weights) - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0.0) if l < last else z
        acts.append(a)
    z = pre[-1]
    zs = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(zs).sum(axis=1))
    logp = zs - logsum[:, None]
    rows = np.arange(n)
    loss = float(-logp[rows, y_idx].mean())

    delta = np.exp(logp)
    delta[rows, y_idx] -= 1.0
    delta /= n
    grads = [None] * len(model.weights)
    for l in range(last, -1, -1):
        grads[l] = (acts[l].T @ delta, delta.sum(axis=0))
        if l > 0:
            delta = (delta @ model.weights[l].T) * (pre[l - 1] > 0)
    return loss, grads


def _flat_params(model: MlpModel):
    for l in range(len(model.weights)):
        yield model.weights[l]
        yield model.biases[l]


def gradient_check(model: MlpModel, X, y_idx, h: float = 1e-5, grad_fn=None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``grad_fn(model, X, y)`` defaults to :func:`loss_and_grads`; pass a
    different one to check a modified backward pass.
    """
    grad_fn = grad_fn or loss_and_grads
    _, grads = grad_fn(model, X, y_idx)
    analytic = [g for pair in grads for g in pair]
    probe = model.copy()
    worst = 0.0
    for param, ana in zip(_flat_params(probe), analytic):
        flat = param.reshape(-1)
        ana = np.asarray(ana).reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            lp, _ = loss_and_grads(probe, X, y_idx)
            flat[i] = old - h
            lm, _ = loss_and_grads(probe, X, y_idx)
            flat[i] = old
            num = (lp - lm) / (2.0 * h)
            denom = max(abs(num), abs(ana[i]), 1e-7)
            worst = max(worst, abs(num - ana[i]) / denom)
    return worst


def _validation_split(y_idx: np.ndarray, fraction: float, rng: np.random.Generator):
    classes, counts = np.unique(y_idx, return_counts=True)
    if counts.min() < 2:
        warnings.warn("a class has fewer than 2 samples; using an unstratified validation split",
                      RuntimeWarning, stacklevel=3)
        perm = rng.permutation(len(y_idx))
        n_val = max(1, int(round(fraction * len(y_idx))))
        return np.sort(perm[n_val:]), np.sort(perm[:n_val])
    val = []
    for cls, n in zip(classes, counts):
        idx = rng.permutation(np.flatnonzero(y_idx == cls))
        take = min(int(np.floor(fraction * n + 0.5)), n - 1)
        val.append(idx[:take])
    val = np.sort(np.concatenate(val))
    train = np.setdiff1d(np.arange(len(y_idx)), val)
    return train, val


@dataclass
class History:
    loss: list = field(default_factory=list)
    accuracy: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def train(X, grades, cfg: TrainConfig = TrainConfig(), stats: StandardizationStats | None = None,
          feature_models: FeatureModels | None = None) -> tuple[MlpModel, History]:
    """Fit the MLP on already standardized (and resampled) features."""
    X = np.asarray(X, dtype=np.float64)
    grades = np.asarray(grades).astype(np.int64)
    label_map = sorted(int(g) for g in np.unique(grades))
    lookup = {g: i for i, g in enumerate(label_map)}
    y_idx = np.array([lookup[int(g)] for g in grades])
    if len(y_idx) < len(label_map) + 1:
        raise TooFewPoints(f"need at least {len(label_map) + 1} samples for {len(label_map)} classes")

    rng = np.random.default_rng(cfg.seed)
    dims = [X.shape[1], *cfg.hidden, len(label_map)]
    model = init_model(dims, label_map, rng)
    model.stats = stats
    model.feature_models = feature_models
    model.train_config = asdict(cfg)
    tr, va = _validation_split(y_idx, cfg.validation_fraction, rng)

    params = list(_flat_params(model))
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    step = 0
    hist = History()
    for epoch in range(cfg.epochs):
        order = tr[rng.permutation(len(tr))]
        tot_loss = 0.0
        correct = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            xb, yb = X[batch], y_idx[batch]
            loss, grads = loss_and_grads(model, xb, yb)
            tot_loss += loss * len(batch)
            # accuracy on the pre-update weights, like a running Keras metric
            correct += int((np.argmax(logits(model, xb), axis=1) == yb).sum())
            step += 1
            c1 = 1.0 - cfg.beta1 ** step
            c2 = 1.0 - cfg.beta2 ** step
            flat = [g for pair in grads for g in pair]
            for p, g, mi, vi in zip(params, flat, m, v):
                mi *= cfg.beta1
                mi += (1.0 - cfg.beta1) * g
                vi *= cfg.beta2
                vi += (1.0 - cfg.beta2) * g * g
                p -= cfg.lr * (mi / c1) / (np.sqrt(vi / c2) + cfg.eps)
        hist.loss.append(tot_loss / len(order))
        hist.accuracy.append(correct / len(order))
        if len(va):
            vl, _ = loss_and_grads(model, X[va], y_idx[va])
            hist.val_loss.append(vl)
            hist.val_accuracy.append(float((np.argmax(logits(model, X[va]), axis=1) == y_idx[va]).mean()))
        log.debug("epoch %d loss %.4f acc %.3f", epoch + 1, hist.loss[-1], hist.accuracy[-1])
    return model, hist


def predict_proba(model: MlpModel, x_raw) -> np.ndarray:
    """Probabilities for unstandardized feature vector(s)."""
    x = _check_input(model, x_raw)
    if model.stats is not None:
        x = model.stats.apply(x)
    return forward(model, x)


def predict(model: MlpModel, x_raw):
    """``(grade, probabilities)`` for one raw feature vector; ties go to the lower index."""
    p = predict_proba(model, x_raw)
    return model.label_map[int(np.argmax(p))], p


def predict_grades(model: MlpModel, X_raw) -> np.ndarray:
    p = predict_proba(model, np.atleast_2d(X_raw))
    return np.asarray(model.label_map)[np.argmax(p, axis=1)]


def save(model: MlpModel, path, history: History | None = None, config: dict | None = None) -> None:
    modelio.write_model(path, KIND, {
        "layer_dims": model.layer_dims,
        "activation": {"hidden": "relu", "output": "softmax"},
        "weight_layout": "layers[l].W is layer_dims[l] x layer_dims[l+1], row-major; z = a @ W + b",
        "layers": [{"W": w.tolist(), "b": b.tolist()} for w, b in zip(model.weights, model.biases)],
        "label_map": model.label_map,
        "standardization": model.stats.to_dict() if model.stats is not None else None,
        "feature_models": model.feature_models.to_dict() if model.feature_models else None,
        "train_config": model.train_config,
        "history": history.to_dict() if history is not None else None,
        "config": config or {},
    })


def load(path) -> MlpModel:
    body = modelio.read_model(path, KIND)
    return MlpModel(
        layer_dims=[int(d) for d in body["layer_dims"]],
        weights=[np.array(layer["W"], dtype=np.float64) for layer in body["layers"]],
        biases=[np.array(layer["b"], dtype=np.float64) for layer in body["layers"]],
        label_map=[int(g) for g in body["label_map"]],
        stats=StandardizationStats.from_dict(body["standardization"]) if body["standardization"] else None,
        feature_models=FeatureModels.from_dict(body["feature_models"]) if body["feature_models"] else None,
        train_config=body.get("train_config") or {},
    )
