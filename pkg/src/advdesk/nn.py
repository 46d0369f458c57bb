"""Minimal dense feed-forward network engine with exact analytic gradients.

The engine is deliberately small: fully connected layers, relu or tanh hidden
activations, a linear output layer, and a temperature-parameterized softmax on
top for classification. What it gives up in generality it returns in
auditability; every gradient (with respect to parameters *and* inputs) is
computed in closed form and checked against central finite differences in the
test suite.

Everything runs in float64. Inference functions are pure and safe to call
concurrently on a shared model; training functions operate on a private copy
and are deterministic given their seed.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import (
    DivergenceError,
    MigrationError,
    ParameterError,
    ParseError,
    ShapeError,
)
from .tolerances import TOL

Array = np.ndarray

MODEL_SCHEMA_VERSION = 1


def _relu(z: Array) -> Array:
    return np.maximum(z, 0.0)


def _relu_grad(z: Array) -> Array:
    return (z > 0).astype(np.float64)


def _tanh_grad(z: Array) -> Array:
    t = np.tanh(z)
    return 1.0 - t * t


_ACTIVATIONS: dict[str, tuple[Callable[[Array], Array], Callable[[Array], Array]]] = {
    "relu": (_relu, _relu_grad),
    "tanh": (np.tanh, _tanh_grad),
}


def _activation(name: str) -> tuple[Callable[[Array], Array], Callable[[Array], Array]]:
    try:
        return _ACTIVATIONS[name]
    except KeyError:
        raise ParameterError(f"unknown activation '{name}' (expected one of {sorted(_ACTIVATIONS)})")


@dataclass
class Model:
    """A dense feed-forward network.

    ``weights[l]`` has shape ``(layer_dims[l], layer_dims[l+1])`` and
    ``biases[l]`` has shape ``(layer_dims[l+1],)``; the forward pass is
    ``a @ W + b`` per layer. The final layer is linear; classification ops
    apply ``softmax_t(logits, temperature)`` on top. Output width 1 networks
    (critics, regressors) are allowed and simply ignore the softmax.
    """

    layer_dims: tuple[int, ...]
    weights: list[Array]
    biases: list[Array]
    hidden_activation: str = "relu"
    temperature: float = 1.0

    def __post_init__(self) -> None:
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.layer_dims) < 2:
            raise ShapeError("a model needs at least an input and an output layer")
        if any(d < 1 for d in self.layer_dims):
            raise ShapeError(f"layer dims must be positive, got {self.layer_dims}")
        _activation(self.hidden_activation)
        if not (self.temperature > 0):
            raise ParameterError(f"temperature must be > 0, got {self.temperature}")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        n_layers = len(self.layer_dims) - 1
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise ShapeError(
                f"expected {n_layers} weight/bias pairs, got {len(self.weights)}/{len(self.biases)}"
            )
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (self.layer_dims[l], self.layer_dims[l + 1])
            if w.shape != want:
                raise ShapeError(f"weights[{l}] has shape {w.shape}, expected {want}")
            if b.shape != (self.layer_dims[l + 1],):
                raise ShapeError(f"biases[{l}] has shape {b.shape}, expected ({self.layer_dims[l + 1]},)")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ParameterError(f"layer {l} contains non-finite parameters")

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    def copy(self) -> "Model":
        return Model(
            layer_dims=self.layer_dims,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            hidden_activation=self.hidden_activation,
            temperature=self.temperature,
        )


@dataclass
class Sample:
    """One labelled input: features in [0, 1], hard class index or soft target."""

    x: Array
    y: int | Array

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=np.float64).ravel()
        if self.x.size == 0:
            raise ShapeError("sample has no features")
        if np.any(self.x < 0.0) or np.any(self.x > 1.0):
            raise ParameterError("sample features must lie in [0, 1]")
        if np.ndim(self.y) == 0:
            self.y = int(self.y)
            if self.y < 0:
                raise ParameterError(f"class index must be >= 0, got {self.y}")
        else:
            self.y = np.asarray(self.y, dtype=np.float64).ravel()
            if abs(float(self.y.sum()) - 1.0) > TOL.prob_sum:
                raise ParameterError("soft label must sum to 1")

    @property
    def label(self) -> int:
        """Hard class index (argmax for soft targets)."""
        if isinstance(self.y, int):
            return self.y
        return int(np.argmax(self.y))


class ForwardResult(NamedTuple):
    logits: Array
    probs: Array
    hidden: list[Array]


@dataclass
class TrainConfig:
    """SGD hyperparameters bundled for the higher-level training drivers."""

    epochs: int = 200
    lr: float = 0.5
    batch_size: int = 32
    seed: int = 0
    shuffle: bool = True


@dataclass
class GradReport:
    """Gradients of the cross-entropy loss for one sample."""

    param_grads: list[tuple[Array, Array]]  # (dW, db) per layer
    input_grad: Array
    loss: float


def init_model(
    layer_dims: Sequence[int],
    activation: str = "relu",
    temperature: float = 1.0,
    seed: int = 0,
) -> Model:
    """Create a model with uniform Glorot weights drawn from the given seed."""
    rng = np.random.default_rng(seed)
    dims = tuple(int(d) for d in layer_dims)
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Model(dims, weights, biases, hidden_activation=activation, temperature=temperature)


def softmax_t(z: Array, temperature: float) -> Array:
    """Temperature softmax ``exp(z_i/T) / sum_j exp(z_j/T)``.

    The logits are divided by T first, so ``softmax_t(z, T)`` equals
    ``softmax_t(z / T, 1)`` bit for bit. Max subtraction keeps the exp from
    overflowing. Works on a vector or row-wise on a matrix.
    """
    if not (temperature > 0):
        raise ParameterError(f"temperature must be > 0, got {temperature}")
    z = np.asarray(z, dtype=np.float64) / temperature
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _as_batch(x: Array, input_dim: int) -> Array:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != input_dim:
        raise ShapeError(f"input has shape {x.shape}, expected (*, {input_dim})")
    return x


def _forward_full(model: Model, x_batch: Array) -> tuple[Array, list[Array], list[Array]]:
    """Forward pass keeping pre-activations; returns (logits, hidden, pre)."""
    act, _ = _activation(model.hidden_activation)
    a = x_batch
    hidden: list[Array] = []
    pre: list[Array] = []
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        z = a @ w + b
        pre.append(z)
        a = act(z)
        hidden.append(a)
    logits = a @ model.weights[-1] + model.biases[-1]
    return logits, hidden, pre


def forward(model: Model, x: Array) -> ForwardResult:
    """Run the network on one sample.

    Returns logits, temperature-softmax probabilities, and the per-layer
    hidden activations (retained so detectors can reuse them).
    """
    xb = _as_batch(x, model.input_dim)
    if xb.shape[0] != 1:
        raise ShapeError("forward takes one sample; use forward_batch for matrices")
    logits, hidden, _ = _forward_full(model, xb)
    probs = softmax_t(logits, model.temperature)
    return ForwardResult(logits[0], probs[0], [h[0] for h in hidden])


def forward_batch(model: Model, x_batch: Array) -> ForwardResult:
    """Row-wise forward pass; fields carry one row per sample."""
    xb = _as_batch(x_batch, model.input_dim)
    logits, hidden, _ = _forward_full(model, xb)
    probs = softmax_t(logits, model.temperature)
    return ForwardResult(logits, probs, hidden)


def predict(model: Model, x: Array) -> int:
    return int(np.argmax(forward(model, x).logits))


def predict_batch(model: Model, x_batch: Array) -> Array:
    return np.argmax(forward_batch(model, x_batch).logits, axis=1)


def accuracy(model: Model, features: Array, labels: Array) -> float:
    return float(np.mean(predict_batch(model, features) == np.asarray(labels)))


def one_hot(labels: Array, n_classes: int) -> Array:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ParameterError(f"labels must lie in [0, {n_classes})")
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _targets(y, n_classes: int) -> Array:
    """Normalize a hard index or soft vector into a (1, C) target row."""
    if np.ndim(y) == 0:
        return one_hot(np.array([int(y)]), n_classes)
    t = np.asarray(y, dtype=np.float64).ravel()
    if t.shape != (n_classes,):
        raise ShapeError(f"soft target has shape {t.shape}, expected ({n_classes},)")
    if abs(float(t.sum()) - 1.0) > TOL.prob_sum:
        raise ParameterError("soft target must sum to 1")
    return t[None, :]


def _cross_entropy(probs: Array, targets: Array) -> Array:
    """Per-row cross-entropy with the log argument clamped at the floor."""
    return -np.sum(targets * np.log(np.maximum(probs, TOL.log_floor)), axis=1)


def loss(model: Model, x: Array, y) -> float:
    """Cross-entropy of the temperature-softmax output against a hard or soft target."""
    xb = _as_batch(x, model.input_dim)
    logits, _, _ = _forward_full(model, xb)
    probs = softmax_t(logits, model.temperature)
    t = _targets(y, model.output_dim)
    return float(_cross_entropy(probs, t)[0])


def _backprop(
    model: Model,
    x_batch: Array,
    hidden: list[Array],
    pre: list[Array],
    d_logits: Array,
    want_params: bool = True,
) -> tuple[list[tuple[Array, Array]], Array]:
    """Propagate d(loss)/d(logits) back to parameters and inputs."""
    _, dact = _activation(model.hidden_activation)
    n_layers = len(model.weights)
    grads: list[tuple[Array, Array]] = [None] * n_layers  # type: ignore[list-item]
    d = d_logits
    for l in range(n_layers - 1, -1, -1):
        a_in = hidden[l - 1] if l > 0 else x_batch
        if want_params:
            grads[l] = (a_in.T @ d, d.sum(axis=0))
        d_a = d @ model.weights[l].T
        if l > 0:
            d = d_a * dact(pre[l - 1])
        else:
            d_input = d_a
    return grads, d_input


def backward(model: Model, x: Array, y) -> GradReport:
    """Exact analytic gradients of ``loss(model, x, y)``.

    With probabilities p from the temperature softmax and target t, the
    logit gradient is (p - t)/T; the rest is the usual chain rule.
    """
    xb = _as_batch(x, model.input_dim)
    logits, hidden, pre = _forward_full(model, xb)
    probs = softmax_t(logits, model.temperature)
    t = _targets(y, model.output_dim)
    d_logits = (probs - t) / model.temperature
    grads, d_input = _backprop(model, xb, hidden, pre, d_logits)
    return GradReport(
        param_grads=grads,
        input_grad=d_input[0],
        loss=float(_cross_entropy(probs, t)[0]),
    )


def input_loss_grads(model: Model, x_batch: Array, targets: Array) -> Array:
    """Per-sample gradient of each sample's own loss with respect to its input.

    ``targets`` is a (n, C) matrix of hard one-hot or soft rows. Shared by the
    batched attack generators.
    """
    xb = _as_batch(x_batch, model.input_dim)
    logits, hidden, pre = _forward_full(model, xb)
    probs = softmax_t(logits, model.temperature)
    d_logits = (probs - targets) / model.temperature
    _, d_input = _backprop(model, xb, hidden, pre, d_logits, want_params=False)
    return d_input


def input_jacobian(model: Model, x: Array, wrt: str = "probs") -> Array:
    """Jacobian of the network output with respect to the input, shape (C, n).

    Entry (j, i) is the derivative of output j at input coordinate i. By
    default the output is the softmax at temperature 1 of the raw logits
    (the class-probability reading used by the saliency attack); pass
    ``wrt="logits"`` to differentiate the raw logits instead.
    """
    if wrt not in ("probs", "logits"):
        raise ParameterError(f"wrt must be 'probs' or 'logits', got '{wrt}'")
    xb = _as_batch(x, model.input_dim)
    if xb.shape[0] != 1:
        raise ShapeError("input_jacobian takes one sample")
    logits, hidden, pre = _forward_full(model, xb)
    c = model.output_dim
    if wrt == "logits":
        seed = np.eye(c)
    else:
        p = softmax_t(logits, 1.0)[0]
        seed = np.diag(p) - np.outer(p, p)
    # Treat the C output seeds as a batch; hidden/pre rows broadcast (1, h).
    _, jac = _backprop(model, xb, hidden, pre, seed, want_params=False)
    return jac


def _sgd_loop(
    model: Model,
    features: Array,
    targets: Array,
    epochs: int,
    lr: float,
    batch_size: int,
    seed: int,
    grad_fn,
    shuffle: bool = True,
) -> tuple[Model, list[float]]:
    """Shared SGD driver. ``grad_fn(model, xb, tb) -> (loss, grads)``.

    Deterministic given the seed. With ``batch_size >= n`` the single batch
    is taken in natural order (a full batch needs no shuffle), which makes
    shuffled and unshuffled full-batch epochs bitwise identical.
    """
    if epochs < 0:
        raise ParameterError(f"epochs must be >= 0, got {epochs}")
    if lr < 0:
        raise ParameterError(f"lr must be >= 0, got {lr}")
    if batch_size < 1:
        raise ParameterError(f"batch_size must be >= 1, got {batch_size}")
    n = features.shape[0]
    if n == 0:
        raise ParameterError("dataset is empty")
    m = model.copy()
    rng = np.random.default_rng(seed)
    history: list[float] = []
    for epoch in range(epochs):
        if shuffle and batch_size < n:
            order = rng.permutation(n)
        else:
            order = np.arange(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            batch_loss, grads = grad_fn(m, features[idx], targets[idx])
            if not np.isfinite(batch_loss):
                raise DivergenceError(f"training diverged (non-finite loss) at epoch {epoch}")
            for l, (dw, db) in enumerate(grads):
                m.weights[l] -= lr * dw
                m.biases[l] -= lr * db
            total += batch_loss * len(idx)
        history.append(total / n)
    return m, history


def _classification_grad_fn(model: Model, xb: Array, tb: Array):
    logits, hidden, pre = _forward_full(model, xb)
    probs = softmax_t(logits, model.temperature)
    batch_loss = float(np.mean(_cross_entropy(probs, tb)))
    d_logits = (probs - tb) / (model.temperature * xb.shape[0])
    grads, _ = _backprop(model, xb, hidden, pre, d_logits)
    return batch_loss, grads


def _unpack_dataset(dataset) -> tuple[Array, Array]:
    if isinstance(dataset, tuple):
        features, labels = dataset
    else:
        features, labels = dataset.features, dataset.labels
    return np.asarray(features, dtype=np.float64), np.asarray(labels)


def train_sgd(
    model: Model,
    dataset,
    epochs: int,
    lr: float,
    batch_size: int,
    seed: int,
    soft_labels: Array | None = None,
    shuffle: bool = True,
) -> tuple[Model, list[float]]:
    """Minibatch SGD on cross-entropy; returns (trained copy, per-epoch loss).

    ``dataset`` is anything with ``.features``/``.labels`` (or a tuple of the
    two arrays). Soft targets replace the hard labels when given, which is how
    the distillation student trains. Bit-reproducible given (seed, dataset,
    config).
    """
    features, labels = _unpack_dataset(dataset)
    if soft_labels is not None:
        targets = np.asarray(soft_labels, dtype=np.float64)
        if targets.shape != (features.shape[0], model.output_dim):
            raise ShapeError(
                f"soft_labels has shape {targets.shape}, expected {(features.shape[0], model.output_dim)}"
            )
    else:
        targets = one_hot(labels, model.output_dim)
    return _sgd_loop(
        model, features, targets, epochs, lr, batch_size, seed, _classification_grad_fn, shuffle
    )


def gradient_check(model: Model, x: Array, y, h: float = TOL.fd_step) -> float:
    """Max relative error of backward() against central finite differences.

    Checks every parameter and every input coordinate. Relative error is
    |analytic - fd| / max(|analytic|, |fd|), with 0/0 defined as 0. Step
    h must lie in (0, 1e-2]; at h near 1e-12 the difference quotient hits
    the float64 rounding floor and the reported error grows.
    """
    if not (0 < h <= 1e-2):
        raise ParameterError(f"h must lie in (0, 1e-2], got {h}")
    report = backward(model, x, y)
    m = model.copy()
    worst = 0.0

    def rel(a: float, b: float) -> float:
        scale = max(abs(a), abs(b))
        return 0.0 if scale == 0.0 else abs(a - b) / scale

    for l in range(len(m.weights)):
        for arr, grad in ((m.weights[l], report.param_grads[l][0]), (m.biases[l], report.param_grads[l][1])):
            flat = arr.reshape(-1)
            gflat = np.asarray(grad).reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = loss(m, x, y)
                flat[i] = orig - h
                down = loss(m, x, y)
                flat[i] = orig
                worst = max(worst, rel(gflat[i], (up - down) / (2 * h)))
    xv = np.asarray(x, dtype=np.float64).copy()
    for i in range(xv.size):
        orig = xv[i]
        xv[i] = orig + h
        up = loss(model, xv, y)
        xv[i] = orig - h
        down = loss(model, xv, y)
        xv[i] = orig
        worst = max(worst, rel(report.input_grad[i], (up - down) / (2 * h)))
    return worst


# ---------------------------------------------------------------------------
# Persistence: one JSON document per model, floats at 17 significant digits
# so that save -> load reproduces forward outputs bit for bit.
# ---------------------------------------------------------------------------


def _json_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if not np.isfinite(v):
            raise ParameterError("cannot serialize non-finite value")
        return format(float(v), ".17g")
    if isinstance(v, str):
        return json.dumps(v)
    raise ParameterError(f"cannot serialize {type(v).__name__}")


def _json_value(v) -> str:
    if isinstance(v, np.ndarray):
        v = v.tolist()
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_json_value(e) for e in v) + "]"
    return _json_scalar(v)


def model_to_json(model: Model) -> str:
    fields = [
        ("schema_version", _json_scalar(MODEL_SCHEMA_VERSION)),
        ("layer_dims", _json_value(list(model.layer_dims))),
        ("activation", _json_scalar(model.hidden_activation)),
        ("temperature", _json_scalar(float(model.temperature))),
        ("weights", _json_value([w.tolist() for w in model.weights])),
        ("biases", _json_value([b.tolist() for b in model.biases])),
    ]
    body = ",\n".join(f'  "{k}": {v}' for k, v in fields)
    return "{\n" + body + "\n}\n"


def model_from_json(text: str, source: str = "<string>") -> Model:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{source}: invalid model JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{source}: model JSON must be an object")
    version = doc.get("schema_version")
    if version != MODEL_SCHEMA_VERSION:
        raise MigrationError(
            f"{source}: schema_version {version!r} is not supported (expected {MODEL_SCHEMA_VERSION})"
        )
    try:
        return Model(
            layer_dims=tuple(doc["layer_dims"]),
            weights=[np.asarray(w, dtype=np.float64) for w in doc["weights"]],
            biases=[np.asarray(b, dtype=np.float64) for b in doc["biases"]],
            hidden_activation=doc["activation"],
            temperature=float(doc["temperature"]),
        )
    except KeyError as exc:
        raise ParseError(f"{source}: model JSON is missing field {exc}") from exc


def save_model(model: Model, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(model_to_json(model))


def load_model(path) -> Model:
    with open(path, "r", encoding="ascii") as fh:
        return model_from_json(fh.read(), source=str(path))
