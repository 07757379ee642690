"""Layered classifier: specs, parameter layout, and the forward pass.

Layers operate on float64 batches. Dense layers see (n, d) activations;
convolutional layers see (n, channels, height, width). Convolutions are
fixed at 3x3 kernels, stride 1, same padding; max-pooling is 2x2, stride 2.
The final layer must be a sigmoid over a single logit (binary, expanded to
[1-p, p]) or a softmax over K >= 2 units.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ClassDistribution, FeatureVector, ImageGrid
from .rng import Prng, derive_seed


@dataclass(frozen=True)
class Dense:
    units: int


@dataclass(frozen=True)
class Conv2D:
    filters: int


@dataclass(frozen=True)
class MaxPool:
    pass


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Activation:
    fn: str

    def __post_init__(self) -> None:
        if self.fn not in ("relu", "sigmoid", "softmax"):
            raise ValueError(f"unknown activation {self.fn!r}")


def dense(units: int) -> Dense:
    return Dense(units)


def conv2d(filters: int) -> Conv2D:
    return Conv2D(filters)


def maxpool() -> MaxPool:
    return MaxPool()


def flatten() -> Flatten:
    return Flatten()


def relu() -> Activation:
    return Activation("relu")


def sigmoid() -> Activation:
    return Activation("sigmoid")


def softmax() -> Activation:
    return Activation("softmax")


@dataclass(frozen=True)
class LayoutEntry:
    name: str
    offset: int
    shape: tuple


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    """Ordered layer stack over a fixed input shape; shapes chain-check at
    construction and the parameter layout is derived once."""

    input_shape: tuple
    layers: tuple

    def __post_init__(self) -> None:
        layers = tuple(self.layers)
        input_shape = tuple(int(s) for s in self.input_shape)
        if len(input_shape) == 1:
            shape: tuple = input_shape
        elif len(input_shape) == 2:
            shape = (1, *input_shape)  # grayscale image -> one channel
        else:
            raise ValueError("input shape must be (d,) or (height, width)")
        if not layers:
            raise ValueError("network needs at least one layer")
        layout: list[LayoutEntry] = []
        offset = 0
        for idx, layer in enumerate(layers):
            if isinstance(layer, Dense):
                if len(shape) != 1:
                    raise ValueError(f"layer {idx}: dense needs a flat input")
                w_shape = (shape[0], layer.units)
                layout.append(LayoutEntry(f"{idx}.dense.W", offset, w_shape))
                offset += shape[0] * layer.units
                layout.append(LayoutEntry(f"{idx}.dense.b", offset, (layer.units,)))
                offset += layer.units
                shape = (layer.units,)
            elif isinstance(layer, Conv2D):
                if len(shape) != 3:
                    raise ValueError(f"layer {idx}: conv2d needs a (c, h, w) input")
                c = shape[0]
                w_shape = (layer.filters, c, 3, 3)
                layout.append(LayoutEntry(f"{idx}.conv.W", offset, w_shape))
                offset += layer.filters * c * 9
                layout.append(LayoutEntry(f"{idx}.conv.b", offset, (layer.filters,)))
                offset += layer.filters
                shape = (layer.filters, shape[1], shape[2])
            elif isinstance(layer, MaxPool):
                if len(shape) != 3 or shape[1] < 2 or shape[2] < 2:
                    raise ValueError(f"layer {idx}: maxpool needs a (c, h>=2, w>=2) input")
                shape = (shape[0], shape[1] // 2, shape[2] // 2)
            elif isinstance(layer, Flatten):
                shape = (int(np.prod(shape)),)
            elif isinstance(layer, Activation):
                if layer.fn == "softmax":
                    if idx != len(layers) - 1:
                        raise ValueError("softmax is only valid as the final layer")
                    if len(shape) != 1 or shape[0] < 2:
                        raise ValueError("softmax head needs >= 2 units")
            else:
                raise TypeError(f"layer {idx}: unknown layer {layer!r}")
        head = layers[-1]
        if not isinstance(head, Activation) or head.fn == "relu":
            raise ValueError("final layer must be a sigmoid or softmax activation")
        if head.fn == "sigmoid" and shape != (1,):
            raise ValueError("sigmoid head needs exactly one logit")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "input_shape", input_shape)
        object.__setattr__(self, "_layout", tuple(layout))
        object.__setattr__(self, "_n_params", offset)
        object.__setattr__(self, "_head", head.fn)
        object.__setattr__(self, "_out_units", shape[0])

    @property
    def layout(self) -> tuple:
        return self._layout

    @property
    def n_params(self) -> int:
        return self._n_params

    @property
    def n_classes(self) -> int:
        return 2 if self._head == "sigmoid" else self._out_units

    def to_json(self) -> dict:
        spec: list[dict] = []
        for layer in self.layers:
            if isinstance(layer, Dense):
                spec.append({"kind": "dense", "units": layer.units})
            elif isinstance(layer, Conv2D):
                spec.append({"kind": "conv2d", "filters": layer.filters})
            elif isinstance(layer, MaxPool):
                spec.append({"kind": "maxpool"})
            elif isinstance(layer, Flatten):
                spec.append({"kind": "flatten"})
            else:
                spec.append({"kind": "activation", "fn": layer.fn})
        return {"input_shape": list(self.input_shape), "layers": spec}

    @classmethod
    def from_json(cls, doc: dict) -> "NetworkSpec":
        layers: list = []
        for entry in doc["layers"]:
            kind = entry["kind"]
            if kind == "dense":
                layers.append(Dense(int(entry["units"])))
            elif kind == "conv2d":
                layers.append(Conv2D(int(entry["filters"])))
            elif kind == "maxpool":
                layers.append(MaxPool())
            elif kind == "flatten":
                layers.append(Flatten())
            elif kind == "activation":
                layers.append(Activation(entry["fn"]))
            else:
                raise ValueError(f"unknown layer kind {kind!r}")
        return cls(tuple(doc["input_shape"]), tuple(layers))


@dataclass(frozen=True, eq=False)
class Parameters:
    """Flat parameter vector plus the layout mapping slices to layers."""

    values: np.ndarray
    layout: tuple

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        expected = self.layout[-1].offset + int(np.prod(self.layout[-1].shape)) if self.layout else 0
        if values.ndim != 1 or values.size != expected:
            raise ValueError("parameter vector does not match the layout")
        if not np.all(np.isfinite(values)):
            raise ValueError("parameters must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "layout", tuple(self.layout))

    def tensor(self, name: str) -> np.ndarray:
        for entry in self.layout:
            if entry.name == name:
                size = int(np.prod(entry.shape))
                return self.values[entry.offset : entry.offset + size].reshape(entry.shape)
        raise KeyError(name)

    def with_values(self, values: np.ndarray) -> "Parameters":
        return Parameters(np.array(values, dtype=float), self.layout)

    def to_json(self) -> dict:
        return {
            "layout": [
                {"name": e.name, "offset": e.offset, "shape": list(e.shape)}
                for e in self.layout
            ],
            "values": list(self.values),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Parameters":
        layout = tuple(
            LayoutEntry(e["name"], int(e["offset"]), tuple(e["shape"]))
            for e in doc["layout"]
        )
        return cls(np.array(doc["values"], dtype=float), layout)


def init_parameters(spec: NetworkSpec, seed: int) -> Parameters:
    """Glorot-uniform weights, zero biases, drawn from the seeded stream.

    Each weight tensor uses limit sqrt(6 / (fan_in + fan_out)); draws happen
    in layout order, elementwise in row-major order.
    """
    prng = Prng(derive_seed(seed, "init"))
    values = np.zeros(spec.n_params)
    for entry in spec.layout:
        if entry.name.endswith(".b"):
            continue
        if len(entry.shape) == 2:  # dense
            fan_in, fan_out = entry.shape
        else:  # conv (filters, c, 3, 3)
            fan_in = entry.shape[1] * 9
            fan_out = entry.shape[0] * 9
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        size = int(np.prod(entry.shape))
        block = np.empty(size)
        for i in range(size):
            block[i] = (2.0 * prng.uniform() - 1.0) * limit
        values[entry.offset : entry.offset + size] = block
    return Parameters(values, spec.layout)


def as_batch(inputs) -> np.ndarray:
    """Stack inputs into a dense (n, d) or image (n, 1, h, w) batch."""
    if isinstance(inputs, np.ndarray):
        arr = np.asarray(inputs, dtype=float)
        if arr.ndim == 3:  # (n, h, w) -> add channel axis
            arr = arr[:, None, :, :]
        return arr
    items = list(inputs)
    if not items:
        raise ValueError("empty batch")
    if isinstance(items[0], FeatureVector):
        return np.stack([fv.values for fv in items])
    if isinstance(items[0], ImageGrid):
        return np.stack([img.to_matrix() for img in items])[:, None, :, :]
    return np.asarray(items, dtype=float)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)


def _conv_cols(x_pad: np.ndarray, h: int, w: int) -> np.ndarray:
    n, c = x_pad.shape[0], x_pad.shape[1]
    stacked = np.empty((n, c, 3, 3, h, w))
    for di in range(3):
        for dj in range(3):
            stacked[:, :, di, dj] = x_pad[:, :, di : di + h, dj : dj + w]
    return stacked.transpose(0, 4, 5, 1, 2, 3).reshape(n, h * w, c * 9)


def run_layers(
    spec: NetworkSpec, params: Parameters, batch: np.ndarray, keep_cache: bool = False
):
    """Run every layer except the output activation; returns (logits, caches).

    ``caches`` holds, per layer, whatever the backward pass needs; empty
    unless ``keep_cache``.
    """
    x = np.asarray(batch, dtype=float)
    expected = spec.input_shape if len(spec.input_shape) == 1 else (1, *spec.input_shape)
    if x.shape[1:] != expected:
        raise ValueError(f"input shape {x.shape[1:]} does not match spec {expected}")
    caches: list = []
    for layer in spec.layers[:-1]:
        idx = len(caches)
        if isinstance(layer, Dense):
            w = params.tensor(f"{idx}.dense.W")
            b = params.tensor(f"{idx}.dense.b")
            caches.append(("dense", x) if keep_cache else None)
            x = x @ w + b
        elif isinstance(layer, Conv2D):
            w = params.tensor(f"{idx}.conv.W")
            b = params.tensor(f"{idx}.conv.b")
            n, c, h, wd = x.shape
            x_pad = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
            cols = _conv_cols(x_pad, h, wd)
            w_mat = w.transpose(1, 2, 3, 0).reshape(c * 9, layer.filters)
            y = cols @ w_mat + b
            caches.append(("conv", cols, (n, c, h, wd)) if keep_cache else None)
            x = y.transpose(0, 2, 1).reshape(n, layer.filters, h, wd)
        elif isinstance(layer, MaxPool):
            n, c, h, wd = x.shape
            h2, w2 = h // 2, wd // 2
            x = x[:, :, : 2 * h2, : 2 * w2]
            windows = (
                x.reshape(n, c, h2, 2, w2, 2)
                .transpose(0, 1, 2, 4, 3, 5)
                .reshape(n, c, h2, w2, 4)
            )
            arg = windows.argmax(axis=-1)
            caches.append(("pool", arg, (n, c, h, wd)) if keep_cache else None)
            x = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
        elif isinstance(layer, Flatten):
            caches.append(("flatten", x.shape) if keep_cache else None)
            x = x.reshape(x.shape[0], -1)
        elif isinstance(layer, Activation):
            if layer.fn == "relu":
                caches.append(("relu", x) if keep_cache else None)
                x = np.maximum(x, 0.0)
            elif layer.fn == "sigmoid":
                x = _sigmoid(x)
                caches.append(("sigmoid", x) if keep_cache else None)
            else:  # pragma: no cover - construction forbids inner softmax
                raise AssertionError("softmax before the final layer")
    return x, caches


def head_probabilities(spec: NetworkSpec, logits: np.ndarray) -> np.ndarray:
    """(n, K) class probabilities from the output logits."""
    if spec._head == "sigmoid":
        p = _sigmoid(logits[:, 0])
        return np.column_stack([1.0 - p, p])
    return _softmax(logits)


def backprop_layers(
    spec: NetworkSpec, params: Parameters, caches: list, d_logits: np.ndarray
) -> np.ndarray:
    """Backpropagate d(loss)/d(logits) into a flat parameter gradient."""
    grad = np.zeros(spec.n_params)
    dx = d_logits
    for rev, layer in enumerate(reversed(spec.layers[:-1])):
        idx = len(spec.layers) - 2 - rev
        cache = caches[idx]
        if isinstance(layer, Dense):
            _, x_in = cache
            w = params.tensor(f"{idx}.dense.W")
            _write(grad, params, f"{idx}.dense.W", x_in.T @ dx)
            _write(grad, params, f"{idx}.dense.b", dx.sum(axis=0))
            dx = dx @ w.T
        elif isinstance(layer, Conv2D):
            _, cols, (n, c, h, wd) = cache
            w = params.tensor(f"{idx}.conv.W")
            w_mat = w.transpose(1, 2, 3, 0).reshape(c * 9, layer.filters)
            dy = dx.reshape(n, layer.filters, h * wd).transpose(0, 2, 1)
            dw_mat = np.tensordot(cols, dy, axes=([0, 1], [0, 1]))
            _write(
                grad,
                params,
                f"{idx}.conv.W",
                dw_mat.reshape(c, 3, 3, layer.filters).transpose(3, 0, 1, 2),
            )
            _write(grad, params, f"{idx}.conv.b", dy.sum(axis=(0, 1)))
            d_cols = (dy @ w_mat.T).reshape(n, h, wd, c, 3, 3).transpose(0, 3, 4, 5, 1, 2)
            dx_pad = np.zeros((n, c, h + 2, wd + 2))
            for di in range(3):
                for dj in range(3):
                    dx_pad[:, :, di : di + h, dj : dj + wd] += d_cols[:, :, di, dj]
            dx = dx_pad[:, :, 1 : h + 1, 1 : wd + 1]
        elif isinstance(layer, MaxPool):
            _, arg, (n, c, h, wd) = cache
            h2, w2 = h // 2, wd // 2
            windows = np.zeros((n, c, h2, w2, 4))
            np.put_along_axis(windows, arg[..., None], dx[..., None], axis=-1)
            up = (
                windows.reshape(n, c, h2, w2, 2, 2)
                .transpose(0, 1, 2, 4, 3, 5)
                .reshape(n, c, 2 * h2, 2 * w2)
            )
            if up.shape[2:] != (h, wd):  # odd edges were cropped in forward
                full = np.zeros((n, c, h, wd))
                full[:, :, : 2 * h2, : 2 * w2] = up
                up = full
            dx = up
        elif isinstance(layer, Flatten):
            _, in_shape = cache
            dx = dx.reshape(in_shape)
        elif isinstance(layer, Activation):
            if layer.fn == "relu":
                _, x_in = cache
                dx = dx * (x_in > 0.0)
            else:  # sigmoid
                _, s = cache
                dx = dx * s * (1.0 - s)
    return grad


def _write(grad: np.ndarray, params: Parameters, name: str, value: np.ndarray) -> None:
    for entry in params.layout:
        if entry.name == name:
            size = int(np.prod(entry.shape))
            grad[entry.offset : entry.offset + size] = value.ravel()
            return
    raise KeyError(name)


def predict_proba(spec: NetworkSpec, params: Parameters, inputs) -> np.ndarray:
    """(n, K) class probabilities for a batch of inputs."""
    logits, _ = run_layers(spec, params, as_batch(inputs))
    return head_probabilities(spec, logits)


def forward(spec: NetworkSpec, params: Parameters, x) -> ClassDistribution:
    """Class distribution for a single input."""
    if isinstance(x, (FeatureVector, ImageGrid)):
        batch = as_batch([x])
    else:
        batch = as_batch(np.asarray(x, dtype=float)[None, ...])
    return ClassDistribution(predict_proba(spec, params, batch)[0])


def save_model(spec: NetworkSpec, params: Parameters, path: str | Path) -> None:
    """Write spec + parameters as one self-contained JSON document."""
    doc = {"spec": spec.to_json(), "params": params.to_json()}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_model(path: str | Path) -> tuple[NetworkSpec, Parameters]:
    doc = json.loads(Path(path).read_text())
    return NetworkSpec.from_json(doc["spec"]), Parameters.from_json(doc["params"])
