"""Minimal feed-forward network engine.

Dense layers with ReLU or identity activations, softmax prediction, cross
entropy, backpropagation to parameters and to the input, and exact Jacobians.
Everything is float64 numpy. Models are immutable: ``train`` returns a new
model and never touches the one it was given.

Weights are stored as ``(out_dim, in_dim)`` so a layer computes ``W @ x + b``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

ACTIVATIONS = ("relu", "identity")
MODEL_FORMAT_VERSION = 1


class ShapeError(ValueError):
    """Input dimension does not match what the model expects."""

    def __init__(self, expected: int, actual: int, what: str = "input"):
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what} dimension mismatch: expected {expected}, got {actual}")


@dataclass(frozen=True)
class Layer:
    w: np.ndarray
    b: np.ndarray
    act: str = "relu"

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64)
        b = np.array(self.b, dtype=np.float64).reshape(-1)
        if w.ndim != 2:
            raise ValueError(f"weight matrix must be 2-d, got shape {w.shape}")
        if b.shape[0] != w.shape[0]:
            raise ShapeError(w.shape[0], b.shape[0], what="bias")
        if self.act not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.act!r}; expected one of {ACTIVATIONS}")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)

    @property
    def in_dim(self) -> int:
        return self.w.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class MicroModel:
    layers: tuple[Layer, ...]
    num_classes: int
    input_dim: int

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("model needs at least one layer")
        if layers[0].in_dim != self.input_dim:
            raise ShapeError(self.input_dim, layers[0].in_dim, what="first layer input")
        for i in range(1, len(layers)):
            if layers[i].in_dim != layers[i - 1].out_dim:
                raise ShapeError(layers[i - 1].out_dim, layers[i].in_dim, what=f"layer {i} input")
        if layers[-1].out_dim != self.num_classes:
            raise ShapeError(self.num_classes, layers[-1].out_dim, what="final layer output")
        object.__setattr__(self, "layers", layers)

    def check_input(self, x: np.ndarray) -> np.ndarray:
        flat = np.asarray(x, dtype=np.float64).reshape(-1)
        if flat.shape[0] != self.input_dim:
            raise ShapeError(self.input_dim, flat.shape[0])
        return flat

    def check_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        X = X.reshape(X.shape[0], -1) if X.ndim > 1 else X.reshape(1, -1)
        if X.shape[1] != self.input_dim:
            raise ShapeError(self.input_dim, X.shape[1])
        return X


@dataclass(frozen=True)
class PredictionVector:
    probs: np.ndarray
    label: int = field(init=False)
    confidence: float = field(init=False)

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64).reshape(-1)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        # np.argmax returns the first maximal index, which is the tie rule we want.
        label = int(np.argmax(p))
        object.__setattr__(self, "label", label)
        object.__setattr__(self, "confidence", float(p[label]))

    @property
    def num_classes(self) -> int:
        return self.probs.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 0.05
    seed: int = 0
    optimizer: str = "sgd-momentum"
    momentum: float = 0.9

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.optimizer not in ("sgd", "sgd-momentum"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _activate(z: np.ndarray, act: str) -> np.ndarray:
    return np.maximum(z, 0.0) if act == "relu" else z


def _forward_cache(layers, X: np.ndarray):
    """Run a batch forward pass, keeping pre-activations for backprop."""
    inputs, pre = [], []
    a = X
    for layer in layers:
        inputs.append(a)
        z = a @ layer.w.T + layer.b
        pre.append(z)
        a = _activate(z, layer.act)
    return a, inputs, pre


def _backward(layers, inputs, pre, upstream: np.ndarray, want_params: bool = False):
    """Backpropagate ``upstream`` (dL/dlogits, batch-major) through the net.

    Returns the input gradient and, if asked, per-layer (dW, db).
    """
    grads = []
    delta = upstream
    for i in range(len(layers) - 1, -1, -1):
        layer = layers[i]
        if layer.act == "relu":
            delta = delta * (pre[i] > 0)
        if want_params:
            grads.append((delta.T @ inputs[i], delta.sum(axis=0)))
        delta = delta @ layer.w
    grads.reverse()
    return delta, grads


def logits_batch(model: MicroModel, X: np.ndarray) -> np.ndarray:
    out, _, _ = _forward_cache(model.layers, model.check_batch(X))
    return out


def logits(model: MicroModel, x: np.ndarray) -> np.ndarray:
    return logits_batch(model, model.check_input(x)[None, :])[0]


def predict_proba(model: MicroModel, X: np.ndarray) -> np.ndarray:
    return softmax(logits_batch(model, X))


def predict_labels(model: MicroModel, X: np.ndarray) -> np.ndarray:
    return np.argmax(logits_batch(model, X), axis=1)


def forward(model: MicroModel, x: np.ndarray) -> PredictionVector:
    return PredictionVector(softmax(logits(model, x)))


def _check_label(model: MicroModel, label: int) -> int:
    label = int(label)
    if not 0 <= label < model.num_classes:
        raise ValueError(f"label {label} out of range [0, {model.num_classes})")
    return label


def loss(model: MicroModel, x: np.ndarray, label: int) -> float:
    """Cross-entropy of ``x`` against ``label``, computed via log-softmax."""
    label = _check_label(model, label)
    z = logits(model, x)
    zmax = z.max()
    log_norm = zmax + np.log(np.exp(z - zmax).sum())
    return float(log_norm - z[label])


def logits_vjp(model: MicroModel, x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Gradient of ``upstream . logits(x)`` with respect to ``x``."""
    flat = model.check_input(x)
    _, inputs, pre = _forward_cache(model.layers, flat[None, :])
    g, _ = _backward(model.layers, inputs, pre, np.asarray(upstream, dtype=np.float64)[None, :])
    return g[0].reshape(np.shape(x))


def loss_and_input_gradient(model: MicroModel, x: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    label = _check_label(model, label)
    flat = model.check_input(x)
    z, inputs, pre = _forward_cache(model.layers, flat[None, :])
    p = softmax(z[0])
    up = p.copy()
    up[label] -= 1.0
    g, _ = _backward(model.layers, inputs, pre, up[None, :])
    return float(-np.log(max(p[label], 1e-300))), g[0].reshape(np.shape(x))


def input_gradient(model: MicroModel, x: np.ndarray, label: int, mode: str = "ascend-true-label") -> np.ndarray:
    """Attacker's ascent direction on the cross-entropy loss.

    ``ascend-true-label`` returns dJ(x, label)/dx (loss to be increased);
    ``descend-target-label`` returns -dJ(x, label)/dx, so that stepping along
    the result lowers the loss of the target class.
    """
    if mode not in ("ascend-true-label", "descend-target-label"):
        raise ValueError(f"unknown gradient mode {mode!r}")
    _, g = loss_and_input_gradient(model, x, label)
    return g if mode == "ascend-true-label" else -g


def logit_jacobian(model: MicroModel, x: np.ndarray) -> np.ndarray:
    flat = model.check_input(x)
    a = flat
    jac = np.eye(model.input_dim)
    for layer in model.layers:
        z = layer.w @ a + layer.b
        jac = layer.w @ jac
        if layer.act == "relu":
            mask = z > 0
            jac = jac * mask[:, None]
            a = np.where(mask, z, 0.0)
        else:
            a = z
    return jac


def jacobian(model: MicroModel, x: np.ndarray) -> np.ndarray:
    """d probs[k] / d x as a (K, input_dim) matrix."""
    jz = logit_jacobian(model, x)
    p = softmax(logits(model, x))
    return p[:, None] * jz - np.outer(p, p @ jz)


def init_model(layer_sizes: Sequence[int], seed: int, hidden_act: str = "relu",
               init_scale: float = 1.0) -> MicroModel:
    """He-initialised MLP; ``layer_sizes`` runs from input_dim to num_classes.

    ``init_scale`` multiplies the first layer's initial weights. Larger values
    leave more of each model's random initialisation in directions the
    training data never constrains, which decorrelates models off-manifold.
    """
    if len(layer_sizes) < 2:
        raise ValueError("layer_sizes needs at least input and output sizes")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (n_in, n_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
        last = i == len(layer_sizes) - 2
        w = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_out, n_in))
        if i == 0:
            w *= init_scale
        layers.append(Layer(w, np.zeros(n_out), "identity" if last else hidden_act))
    return MicroModel(tuple(layers), layer_sizes[-1], layer_sizes[0])


def _unpack_dataset(dataset):
    if hasattr(dataset, "images"):
        X, y = dataset.images, dataset.labels
    else:
        X, y = dataset
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("cannot train on an empty dataset")
    if y is None:
        raise ValueError("training needs labelled data")
    return X.reshape(X.shape[0], -1), np.asarray(y, dtype=np.int64)


class _RawLayer(NamedTuple):
    w: np.ndarray
    b: np.ndarray
    act: str


def train(model: MicroModel, dataset, cfg: TrainConfig) -> MicroModel:
    """Mini-batch SGD on mean cross-entropy.

    ``dataset`` is anything with ``images``/``labels`` or an ``(X, y)`` pair.
    Batch order is a fresh seeded permutation each epoch.
    """
    X, y = _unpack_dataset(dataset)
    X = model.check_batch(X)
    if y.shape[0] != X.shape[0]:
        raise ValueError("images and labels differ in length")
    if y.min() < 0 or y.max() >= model.num_classes:
        raise ValueError("labels out of range for model")

    ws = [layer.w.copy() for layer in model.layers]
    bs = [layer.b.copy() for layer in model.layers]
    acts = [layer.act for layer in model.layers]
    vel_w = [np.zeros_like(w) for w in ws]
    vel_b = [np.zeros_like(b) for b in bs]
    mu = cfg.momentum if cfg.optimizer == "sgd-momentum" else 0.0
    rng = np.random.default_rng(cfg.seed)
    n = X.shape[0]

    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            current = [_RawLayer(w, b, a) for w, b, a in zip(ws, bs, acts)]
            out, inputs, pre = _forward_cache(current, X[idx])
            up = softmax(out)
            up[np.arange(idx.shape[0]), y[idx]] -= 1.0
            up /= idx.shape[0]
            _, grads = _backward(current, inputs, pre, up, want_params=True)
            for i, (gw, gb) in enumerate(grads):
                vel_w[i] = mu * vel_w[i] - cfg.learning_rate * gw
                vel_b[i] = mu * vel_b[i] - cfg.learning_rate * gb
                ws[i] = ws[i] + vel_w[i]
                bs[i] = bs[i] + vel_b[i]

    return MicroModel(tuple(Layer(w, b, a) for w, b, a in zip(ws, bs, acts)),
                      model.num_classes, model.input_dim)


def accuracy(model: MicroModel, X: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(predict_labels(model, X) == np.asarray(y)))


# --- weights file -----------------------------------------------------------

def model_to_dict(model: MicroModel) -> dict:
    return {
        "version": MODEL_FORMAT_VERSION,
        "input_dim": model.input_dim,
        "num_classes": model.num_classes,
        "layers": [{"w": layer.w.tolist(), "b": layer.b.tolist(), "act": layer.act}
                   for layer in model.layers],
    }


def model_from_dict(doc: dict) -> MicroModel:
    version = doc.get("version", MODEL_FORMAT_VERSION)
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version}")
    try:
        layers = tuple(Layer(np.array(l["w"], dtype=np.float64), np.array(l["b"], dtype=np.float64), l["act"])
                       for l in doc["layers"])
        return MicroModel(layers, int(doc["num_classes"]), int(doc["input_dim"]))
    except KeyError as exc:
        raise ValueError(f"model document missing field {exc}") from None


def save_model(model: MicroModel, path) -> None:
    # json writes floats with repr(), which round-trips float64 exactly.
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path) -> MicroModel:
    return model_from_dict(json.loads(Path(path).read_text()))
