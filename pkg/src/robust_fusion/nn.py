"""Small fully-connected classifiers with hand-written backpropagation.

Weights follow the ``z = W h + b`` convention (``W`` is out x in), so the last
layer of a model is directly a :class:`~robust_fusion.jacreg.UnimodalHead`.
Batched inputs have shape (N, in).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError
from .jacreg import UnimodalHead

ACTIVATIONS = ("relu", "identity")
MODEL_MAGIC = "robust-fusion-mlp"
MODEL_VERSION = 1


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise DimensionError(f"bad layer shapes {self.weight.shape}, {self.bias.shape}")


@dataclass(frozen=True)
class MlpModel:
    layers: tuple[Layer, ...]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a model needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.weight.shape[0] != nxt.weight.shape[1]:
                raise DimensionError("consecutive layer dimensions do not chain")
        if self.layers[-1].activation != "identity":
            raise ValueError("the last layer must output raw logits")

    @property
    def n_in(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def n_classes(self) -> int:
        return self.layers[-1].weight.shape[0]

    @property
    def sizes(self) -> list[int]:
        return [self.n_in] + [layer.weight.shape[0] for layer in self.layers]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    weight_init_scale: float = 1.0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.weight_init_scale <= 0:
            raise ValueError("learning rate, batch size and init scale must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")


def init_mlp(sizes, seed: int = 0, weight_init_scale: float = 1.0) -> MlpModel:
    """He-style uniform init: ``U(-s, s)`` with ``s = scale * sqrt(6 / fan_in)``, zero biases."""
    if len(sizes) < 2:
        raise ValueError("need at least input and output sizes")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = weight_init_scale * np.sqrt(6.0 / n_in)
        w = rng.uniform(-bound, bound, size=(n_out, n_in))
        act = "identity" if i == len(sizes) - 2 else "relu"
        layers.append(Layer(w, np.zeros(n_out), act))
    return MlpModel(tuple(layers))


def _activate(x: np.ndarray, activation: str) -> np.ndarray:
    return np.maximum(x, 0.0) if activation == "relu" else x


def _as_batch(x, n_in: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != n_in:
        raise DimensionError(f"expected inputs with {n_in} features, got shape {x.shape}")
    return x, single


def forward(m: MlpModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Logits and penultimate features for one sample or a batch."""
    h, single = _as_batch(x, m.n_in)
    for layer in m.layers[:-1]:
        h = _activate(h @ layer.weight.T + layer.bias, layer.activation)
    last = m.layers[-1]
    logits = h @ last.weight.T + last.bias
    if single:
        return logits[0], h[0]
    return logits, h


def logits(m: MlpModel, x) -> np.ndarray:
    return forward(m, x)[0]


def features(m: MlpModel, x) -> np.ndarray:
    return forward(m, x)[1]


def as_head(m: MlpModel, name: str = "") -> UnimodalHead:
    last = m.layers[-1]
    return UnimodalHead(last.weight.copy(), last.bias.copy(), name)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def loss_and_grads(m: MlpModel, x, y):
    """Mean softmax cross-entropy with gradients for every parameter and the input.

    Returns ``(loss, grads, input_grad)``; ``grads`` is a list of ``(dW, db)`` per
    layer and ``input_grad`` has the shape of ``x``.
    """
    xb, single = _as_batch(x, m.n_in)
    yb = np.atleast_1d(np.asarray(y)).astype(int)
    if yb.shape[0] != xb.shape[0]:
        raise DimensionError("label count does not match batch size")
    if np.any(yb < 0) or np.any(yb >= m.n_classes):
        raise ValueError(f"labels must lie in [0, {m.n_classes})")
    loss, grads, delta = _backprop([(l.weight, l.bias, l.activation) for l in m.layers], xb, yb)
    return loss, grads, (delta[0] if single else delta)


def _backprop(params, xb: np.ndarray, yb: np.ndarray):
    """Unchecked core of :func:`loss_and_grads` over ``(W, b, activation)`` triples."""
    n = xb.shape[0]
    acts = [xb]
    pre = []
    h = xb
    for w, b, act in params:
        a = h @ w.T + b
        pre.append(a)
        h = np.maximum(a, 0.0) if act == "relu" else a
        acts.append(h)
    logp = _log_softmax(h)
    rows = np.arange(n)
    loss = float(-logp[rows, yb].mean())

    delta = np.exp(logp)
    delta[rows, yb] -= 1.0
    delta /= n
    grads = []
    for idx in range(len(params) - 1, -1, -1):
        w, _, act = params[idx]
        if act == "relu":
            delta = delta * (pre[idx] > 0)
        grads.append((delta.T @ acts[idx], delta.sum(axis=0)))
        delta = delta @ w
    grads.reverse()
    return loss, grads, delta


def train(m: MlpModel, x, y, cfg: TrainConfig, history: list | None = None) -> MlpModel:
    """Plain minibatch SGD. Deterministic for a fixed ``cfg.seed``.

    If ``history`` is given, the sample-weighted mean training loss of each
    epoch is appended to it.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y).astype(int)
    x, _ = _as_batch(x, m.n_in)
    if y.shape != (x.shape[0],) or np.any(y < 0) or np.any(y >= m.n_classes):
        raise ValueError("labels must be one class index in [0, n_classes) per sample")
    rng = np.random.default_rng(cfg.seed)
    n = x.shape[0]
    # private copies updated in place; the input model stays untouched
    params = [(l.weight.copy(), l.bias.copy(), l.activation) for l in m.layers]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads, _ = _backprop(params, x[idx], y[idx])
            total += loss * idx.shape[0]
            for (w, b, _), (dw, db) in zip(params, grads):
                w -= cfg.learning_rate * dw
                b -= cfg.learning_rate * db
        if history is not None:
            history.append(total / n)
    return MlpModel(tuple(Layer(w, b, act) for w, b, act in params))


def fit(sizes, x, y, cfg: TrainConfig, history: list | None = None) -> MlpModel:
    """Initialize from ``cfg`` and train."""
    model = init_mlp(sizes, cfg.seed, cfg.weight_init_scale)
    return train(model, x, y, cfg, history)


def predict(m: MlpModel, x) -> np.ndarray:
    return np.argmax(np.atleast_2d(logits(m, x)), axis=-1)


def accuracy(m: MlpModel, x, y) -> float:
    y = np.asarray(y).astype(int)
    if y.size == 0:
        raise ValueError("accuracy of an empty dataset is undefined")
    return float(np.mean(predict(m, x) == y))


# -- serialization --------------------------------------------------------------
#
# Plain text, one token group per line:
#   robust-fusion-mlp 1
#   layers <L>
#   then per layer:  layer <out> <in> <activation>
#                    <out*in weights, row-major>
#                    <out biases>
# Floats are written with repr() so a round trip is exact.


def dumps(m: MlpModel) -> str:
    lines = [f"{MODEL_MAGIC} {MODEL_VERSION}", f"layers {len(m.layers)}"]
    for layer in m.layers:
        n_out, n_in = layer.weight.shape
        lines.append(f"layer {n_out} {n_in} {layer.activation}")
        lines.append(" ".join(repr(float(v)) for v in layer.weight.ravel()))
        lines.append(" ".join(repr(float(v)) for v in layer.bias))
    return "\n".join(lines) + "\n"


def loads(text: str) -> MlpModel:
    lines = text.splitlines()
    try:
        magic, version = lines[0].split()
        if magic != MODEL_MAGIC or int(version) != MODEL_VERSION:
            raise ValueError(f"unsupported model header {lines[0]!r}")
        n_layers = int(lines[1].split()[1])
        layers = []
        pos = 2
        for _ in range(n_layers):
            tag, n_out, n_in, act = lines[pos].split()
            if tag != "layer":
                raise ValueError(f"line {pos + 1}: expected 'layer', got {tag!r}")
            n_out, n_in = int(n_out), int(n_in)
            w = np.array([float(t) for t in lines[pos + 1].split()]).reshape(n_out, n_in)
            b = np.array([float(t) for t in lines[pos + 2].split()])
            layers.append(Layer(w, b, act))
            pos += 3
    except (IndexError, ValueError) as exc:
        raise ValueError(f"malformed model file: {exc}") from exc
    return MlpModel(tuple(layers))


def save(m: MlpModel, path) -> None:
    Path(path).write_text(dumps(m))


def load(path) -> MlpModel:
    return loads(Path(path).read_text())
