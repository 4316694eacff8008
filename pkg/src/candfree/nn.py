"""Small float64 networks: MLP and CNN, trained with SGD + momentum.

Parameters live in one flat vector; each layer owns a contiguous slice
(weights first, then biases). That keeps momentum, weight decay, gradient
checking and checkpointing trivial.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence, Union

import numpy as np

CHECKPOINT_VERSION = 1
FORWARD_CHUNK = 4096


class InvalidSpecError(ValueError):
    pass


class ShapeMismatchError(ValueError):
    pass


class EmptyTrainingSetError(ValueError):
    pass


class NonFiniteLossError(FloatingPointError):
    """Training produced a NaN/inf loss, usually from a too-large learning rate."""


# --- layer specs -----------------------------------------------------------


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int
    activation: str = "relu"

    def to_dict(self):
        return {"type": "dense", "in_dim": self.in_dim, "out_dim": self.out_dim, "activation": self.activation}


@dataclass(frozen=True)
class Conv2d:
    in_channels: int
    out_channels: int
    kernel: int = 3
    stride: int = 1
    activation: str = "relu"

    def to_dict(self):
        return {
            "type": "conv2d",
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel": self.kernel,
            "stride": self.stride,
            "activation": self.activation,
        }


@dataclass(frozen=True)
class Flatten:
    def to_dict(self):
        return {"type": "flatten"}


@dataclass(frozen=True)
class Softmax:
    classes: int

    def to_dict(self):
        return {"type": "softmax", "classes": self.classes}


Layer = Union[Dense, Conv2d, Flatten, Softmax]
_LAYER_TYPES = {"dense": Dense, "conv2d": Conv2d, "flatten": Flatten, "softmax": Softmax}
_ACTIVATIONS = ("relu", "none")


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple[int, ...]
    layers: tuple[Layer, ...]

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        self.shapes()  # validates

    @property
    def num_classes(self) -> int:
        return self.layers[-1].classes

    def shapes(self) -> list[tuple[int, ...]]:
        """Activation shape after each layer (per sample). Raises InvalidSpecError."""
        if not self.input_shape or any(d < 1 for d in self.input_shape):
            raise InvalidSpecError(f"bad input shape {self.input_shape}")
        if not self.layers:
            raise InvalidSpecError("spec has no layers")
        heads = [i for i, l in enumerate(self.layers) if isinstance(l, Softmax)]
        if heads != [len(self.layers) - 1]:
            raise InvalidSpecError("exactly one softmax head is required, as the last layer")
        shape = self.input_shape
        out = []
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Dense):
                if layer.activation not in _ACTIVATIONS:
                    raise InvalidSpecError(f"layer {i}: unknown activation {layer.activation!r}")
                if shape != (layer.in_dim,):
                    raise InvalidSpecError(f"layer {i}: dense expects ({layer.in_dim},), got {shape}")
                if layer.out_dim < 1:
                    raise InvalidSpecError(f"layer {i}: out_dim must be >= 1")
                shape = (layer.out_dim,)
            elif isinstance(layer, Conv2d):
                if layer.activation not in _ACTIVATIONS:
                    raise InvalidSpecError(f"layer {i}: unknown activation {layer.activation!r}")
                if len(shape) != 3 or shape[0] != layer.in_channels:
                    raise InvalidSpecError(f"layer {i}: conv2d expects ({layer.in_channels}, H, W), got {shape}")
                if layer.kernel < 1 or layer.stride < 1 or layer.out_channels < 1:
                    raise InvalidSpecError(f"layer {i}: kernel, stride and channels must be >= 1")
                h = (shape[1] - layer.kernel) // layer.stride + 1
                w = (shape[2] - layer.kernel) // layer.stride + 1
                if h < 1 or w < 1:
                    raise InvalidSpecError(f"layer {i}: kernel {layer.kernel} larger than input {shape[1:]}")
                shape = (layer.out_channels, h, w)
            elif isinstance(layer, Flatten):
                shape = (int(np.prod(shape)),)
            elif isinstance(layer, Softmax):
                if layer.classes < 2:
                    raise InvalidSpecError("softmax head needs at least 2 classes")
                if shape != (layer.classes,):
                    raise InvalidSpecError(f"softmax head expects ({layer.classes},), got {shape}")
            else:
                raise InvalidSpecError(f"layer {i}: unknown layer {layer!r}")
            out.append(shape)
        return out

    def param_layout(self) -> list[tuple[int, tuple[int, ...], tuple[int, ...]] | None]:
        """Per layer: (offset, weight shape, bias shape), or None if parameter-free."""
        layout = []
        offset = 0
        for layer in self.layers:
            if isinstance(layer, Dense):
                ws, bs = (layer.in_dim, layer.out_dim), (layer.out_dim,)
            elif isinstance(layer, Conv2d):
                ws = (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
                bs = (layer.out_channels,)
            else:
                layout.append(None)
                continue
            layout.append((offset, ws, bs))
            offset += math.prod(ws) + math.prod(bs)
        return layout

    @property
    def num_params(self) -> int:
        total = 0
        for entry in self.param_layout():
            if entry is not None:
                total += math.prod(entry[1]) + math.prod(entry[2])
        return total

    def to_dict(self) -> dict:
        return {"input_shape": list(self.input_shape), "layers": [l.to_dict() for l in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        layers = []
        for ld in d["layers"]:
            ld = dict(ld)
            kind = ld.pop("type")
            if kind not in _LAYER_TYPES:
                raise InvalidSpecError(f"unknown layer type {kind!r}")
            layers.append(_LAYER_TYPES[kind](**ld))
        return cls(tuple(d["input_shape"]), tuple(layers))


def mlp_small(input_shape: Sequence[int], num_classes: int) -> NetworkSpec:
    """input -> 128 -> 64 -> K."""
    input_shape = tuple(input_shape)
    layers: list[Layer] = []
    if len(input_shape) > 1:
        layers.append(Flatten())
    d = math.prod(input_shape)
    layers += [
        Dense(d, 128, "relu"),
        Dense(128, 64, "relu"),
        Dense(64, num_classes, "none"),
        Softmax(num_classes),
    ]
    return NetworkSpec(input_shape, tuple(layers))


def cnn_small(input_shape: Sequence[int], num_classes: int) -> NetworkSpec:
    """conv3x3x16 -> relu -> conv3x3x32 -> relu -> flatten -> dense K."""
    input_shape = tuple(input_shape)
    if len(input_shape) == 2:
        input_shape = (1,) + input_shape
    if len(input_shape) != 3:
        raise InvalidSpecError(f"cnn-small needs (C, H, W) or (H, W) input, got {input_shape}")
    c, h, w = input_shape
    conv_out = 32 * (h - 4) * (w - 4)
    return NetworkSpec(
        input_shape,
        (
            Conv2d(c, 16, 3, 1, "relu"),
            Conv2d(16, 32, 3, 1, "relu"),
            Flatten(),
            Dense(conv_out, num_classes, "none"),
            Softmax(num_classes),
        ),
    )


PRESETS = {"mlp-small": mlp_small, "cnn-small": cnn_small}


def preset(name: str, input_shape: Sequence[int], num_classes: int) -> NetworkSpec:
    try:
        builder = PRESETS[name]
    except KeyError:
        raise InvalidSpecError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return builder(input_shape, num_classes)


# --- model -----------------------------------------------------------------


@dataclass
class NetworkModel:
    spec: NetworkSpec
    params: np.ndarray
    seed: int

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.shape != (self.spec.num_params,):
            raise InvalidSpecError(
                f"parameter vector has shape {self.params.shape}, spec needs ({self.spec.num_params},)"
            )
        if not np.all(np.isfinite(self.params)):
            raise ValueError("model parameters must be finite")

    def copy(self) -> "NetworkModel":
        return NetworkModel(self.spec, self.params.copy(), self.seed)

    def layer_params(self, index: int) -> tuple[np.ndarray, np.ndarray] | None:
        entry = self.spec.param_layout()[index]
        if entry is None:
            return None
        return _views(self.params, entry)


def _views(flat: np.ndarray, entry) -> tuple[np.ndarray, np.ndarray]:
    off, ws, bs = entry
    nw = math.prod(ws)
    w = flat[off : off + nw].reshape(ws)
    b = flat[off + nw : off + nw + math.prod(bs)]
    return w, b


def init_random(spec: NetworkSpec, seed: int) -> NetworkModel:
    """Fan-in scaled uniform init: every weight and bias ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    if not isinstance(spec, NetworkSpec):
        raise InvalidSpecError("init_random needs a NetworkSpec")
    rng = np.random.default_rng(seed)
    params = np.empty(spec.num_params, dtype=np.float64)
    for layer, entry in zip(spec.layers, spec.param_layout()):
        if entry is None:
            continue
        bound = 1.0 / math.sqrt(fan_in(layer))
        off, ws, bs = entry
        n = math.prod(ws) + math.prod(bs)
        params[off : off + n] = rng.uniform(-bound, bound, size=n)
    return NetworkModel(spec, params, int(seed))


def fan_in(layer: Layer) -> int:
    if isinstance(layer, Dense):
        return layer.in_dim
    if isinstance(layer, Conv2d):
        return layer.in_channels * layer.kernel * layer.kernel
    raise TypeError(f"{type(layer).__name__} has no parameters")


# --- forward / backward ----------------------------------------------------


def _conv_forward(x, w, b, stride):
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    ho = (h - k) // stride + 1
    wo = (wd - k) // stride + 1
    out = np.broadcast_to(b[None, :, None, None], (n, o, ho, wo)).copy()
    for u in range(k):
        for v in range(k):
            patch = x[:, :, u : u + stride * (ho - 1) + 1 : stride, v : v + stride * (wo - 1) + 1 : stride]
            out += np.einsum("nchw,oc->nohw", patch, w[:, :, u, v], optimize=True)
    return out


def _conv_backward(x, w, stride, dout):
    _, _, k, _ = w.shape
    _, _, ho, wo = dout.shape
    dx = np.zeros_like(x)
    dw = np.empty_like(w)
    for u in range(k):
        for v in range(k):
            sl = (slice(None), slice(None), slice(u, u + stride * (ho - 1) + 1, stride), slice(v, v + stride * (wo - 1) + 1, stride))
            dw[:, :, u, v] = np.einsum("nohw,nchw->oc", dout, x[sl], optimize=True)
            dx[sl] += np.einsum("nohw,oc->nchw", dout, w[:, :, u, v], optimize=True)
    db = dout.sum(axis=(0, 2, 3))
    return dx, dw, db


def _as_batch(spec: NetworkSpec, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    per = math.prod(spec.input_shape)
    if x.ndim == 0 or x.size % per != 0 or (x.ndim > 1 and math.prod(x.shape[1:]) != per) or (x.ndim == 1 and x.size != per):
        raise ShapeMismatchError(f"inputs of shape {x.shape} do not match network input {spec.input_shape}")
    return x.reshape((-1,) + spec.input_shape)


def _logits(spec: NetworkSpec, params: np.ndarray, x: np.ndarray, cache: list | None = None) -> np.ndarray:
    layout = spec.param_layout()
    h = x
    for layer, entry in zip(spec.layers, layout):
        if isinstance(layer, Softmax):
            break
        if cache is not None:
            cache.append(h)
        if isinstance(layer, Dense):
            w, b = _views(params, entry)
            h = h @ w + b
        elif isinstance(layer, Conv2d):
            w, b = _views(params, entry)
            h = _conv_forward(h, w, b, layer.stride)
        elif isinstance(layer, Flatten):
            h = h.reshape(h.shape[0], -1)
            continue
        if layer.activation == "relu":
            h = np.maximum(h, 0.0)
    return h


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward_probs(model: NetworkModel, inputs) -> np.ndarray:
    """Class probabilities, shape (N, K). Processes the batch in chunks."""
    x = _as_batch(model.spec, inputs)
    out = np.empty((x.shape[0], model.spec.num_classes), dtype=np.float64)
    for start in range(0, x.shape[0], FORWARD_CHUNK):
        sl = slice(start, start + FORWARD_CHUNK)
        out[sl] = softmax(_logits(model.spec, model.params, x[sl]))
    return out


def predict(model: NetworkModel, inputs) -> np.ndarray:
    # argmax returns the lowest index on ties
    return forward_probs(model, inputs).argmax(axis=1)


def _cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    z = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(logz - z[np.arange(len(labels)), labels]))


def loss_and_grad(spec: NetworkSpec, params: np.ndarray, x: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the flat params."""
    cache: list = []
    logits = _logits(spec, params, x, cache)
    n = x.shape[0]
    probs = softmax(logits)
    loss = _cross_entropy(logits, labels)
    delta = probs
    delta[np.arange(n), labels] -= 1.0
    delta /= n

    grad = np.zeros_like(params)
    layout = spec.param_layout()
    # walk back over non-head layers; `delta` is d loss / d (layer output)
    post = logits
    for idx in range(len(spec.layers) - 2, -1, -1):
        layer = spec.layers[idx]
        inp = cache[idx]
        if isinstance(layer, Flatten):
            delta = delta.reshape(inp.shape)
            post = inp
            continue
        if layer.activation == "relu":
            delta = delta * (post > 0.0)
        w, _ = _views(params, layout[idx])
        gw, gb = _views(grad, layout[idx])
        if isinstance(layer, Dense):
            gw[...] = inp.T @ delta
            gb[...] = delta.sum(axis=0)
            delta = delta @ w.T
        else:
            dx, dw, db = _conv_backward(inp, w, layer.stride, delta)
            gw[...] = dw
            gb[...] = db
            delta = dx
        post = inp
    return loss, grad


def mean_loss(model: NetworkModel, features, labels) -> float:
    x = _as_batch(model.spec, features)
    y = np.asarray(labels, dtype=np.int64)
    total = 0.0
    for start in range(0, x.shape[0], FORWARD_CHUNK):
        sl = slice(start, start + FORWARD_CHUNK)
        total += _cross_entropy(_logits(model.spec, model.params, x[sl]), y[sl]) * len(y[sl])
    return total / len(y)


# --- training --------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    batch_size: int = 64
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-3
    warm_start: bool = True
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        # lr == 0 is accepted so a zero step can be exercised
        if not self.lr >= 0.0:
            raise ValueError("learning rate must be >= 0")
        if self.weight_decay < 0.0:
            raise ValueError("weight_decay must be >= 0")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "momentum": self.momentum,
            "weight_decay": self.weight_decay,
            "warm_start": self.warm_start,
            "shuffle_seed": self.shuffle_seed,
        }


def train(model: NetworkModel, features, labels, cfg: TrainConfig) -> NetworkModel:
    """Mini-batch SGD with momentum on mean cross-entropy. Returns a new model.

    With ``cfg.warm_start`` False the parameters are re-drawn from the model's
    own init seed first, so the result does not depend on prior training.
    """
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.size == 0:
        raise EmptyTrainingSetError("cannot train on an empty labeled set")
    x = _as_batch(model.spec, features)
    if x.shape[0] != y.size:
        raise ShapeMismatchError(f"{x.shape[0]} feature rows but {y.size} labels")
    k = model.spec.num_classes
    if y.min() < 0 or y.max() >= k:
        raise ValueError(f"labels must lie in [0, {k})")

    start = model if cfg.warm_start else init_random(model.spec, model.seed)
    params = start.params.copy()
    velocity = np.zeros_like(params)
    rng = np.random.default_rng(cfg.shuffle_seed)
    n = y.size
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for s in range(0, n, cfg.batch_size):
            idx = order[s : s + cfg.batch_size]
            loss, grad = loss_and_grad(model.spec, params, x[idx], y[idx])
            if not math.isfinite(loss):
                raise NonFiniteLossError(f"loss became {loss}; learning rate {cfg.lr} is probably too large")
            if cfg.weight_decay:
                grad += cfg.weight_decay * params
            velocity *= cfg.momentum
            velocity += grad
            params -= cfg.lr * velocity
    if not np.all(np.isfinite(params)):
        raise NonFiniteLossError("parameters diverged to non-finite values")
    return NetworkModel(model.spec, params, model.seed)


def evaluate(model: NetworkModel, features, labels) -> float:
    """Fraction of samples whose argmax prediction equals the label."""
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.size == 0:
        raise ValueError("test set must be nonempty")
    return float(np.mean(predict(model, features) == y))


# --- gradient check --------------------------------------------------------


def grad_check_layers(model: NetworkModel, sample, epsilon: float = 1e-5) -> dict[str, float]:
    """Max relative error between analytic and central-difference gradients, per layer.

    ``sample`` is a ``(features, label)`` pair, or ``(features, labels)`` for a
    small batch. Keys look like ``"1:dense"``.
    """
    if not 0.0 < epsilon <= 1e-2:
        raise ValueError("epsilon must be in (0, 1e-2]")
    features, labels = sample
    spec = model.spec
    x = _as_batch(spec, features)
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    _, analytic = loss_and_grad(spec, model.params, x, y)
    params = model.params.copy()

    errors = {}
    for idx, (layer, entry) in enumerate(zip(spec.layers, spec.param_layout())):
        if entry is None:
            continue
        off, ws, bs = entry
        worst = 0.0
        for j in range(off, off + math.prod(ws) + math.prod(bs)):
            orig = params[j]
            params[j] = orig + epsilon
            up = _cross_entropy(_logits(spec, params, x), y)
            params[j] = orig - epsilon
            down = _cross_entropy(_logits(spec, params, x), y)
            params[j] = orig
            numeric = (up - down) / (2.0 * epsilon)
            a = analytic[j]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
        name = type(layer).__name__.lower()
        errors[f"{idx}:{name}"] = worst
    return errors


def grad_check(model: NetworkModel, sample, epsilon: float = 1e-5) -> float:
    errors = grad_check_layers(model, sample, epsilon)
    return max(errors.values()) if errors else 0.0


# --- checkpoints -----------------------------------------------------------


def save_checkpoint(model: NetworkModel, path) -> Path:
    """Write an ``.npz`` holding the parameter vector and a JSON header.

    Header keys: ``version``, ``spec`` (layer list + input shape), ``seed``.
    """
    path = Path(path)
    header = json.dumps({"version": CHECKPOINT_VERSION, "spec": model.spec.to_dict(), "seed": model.seed})
    with open(path, "wb") as fh:
        np.savez(fh, params=model.params, header=np.array(header))
    return path


def load_checkpoint(path) -> NetworkModel:
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        params = data["params"].copy()
    if header.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('version')!r}")
    return NetworkModel(NetworkSpec.from_dict(header["spec"]), params, int(header["seed"]))
