"""Feedforward ConvNet representation, weight-file IO, and inference.

The weight file is the contract between this package and any external
training code, so its layout is documented here in full:

    {
      "format_version": 1,
      "input_spec": {"height": H, "width": W, "channels": C, "scale": 255.0},
      "layers": [
        {"type": "conv", "in_channels": ..., "out_channels": ...,
         "kernel": ..., "stride": ..., "padding": ...,
         "weights": [...], "bias": [...]},
        {"type": "relu"},
        {"type": "flatten"},
        {"type": "dense", "in_features": ..., "out_features": ...,
         "weights": [...], "bias": [...]},
        {"type": "linear_output", "in_features": ..., "out_features": ...,
         "weights": [...], "bias": [...]}
      ],
      "metadata": {...}   # optional, ignored by the loader
    }

Weights are flat JSON arrays of decimal floats in row-major order: conv as
(out_channels, in_channels, kernel, kernel), dense and linear_output as
(out_features, in_features). Flatten order is channel-major then row-major,
i.e. feature index = channel*(H*W) + row*W + col, and a dense layer after
flatten must be trained against that order. Input images are divided by
"scale" before the first layer. "linear_output" is affine like "dense";
the distinct name marks the network head so a file cannot accidentally
omit the final layer.
"""

import json
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _kernels

FORMAT_VERSION = 1


class WeightFormatError(ValueError):
    """Raised when a weight file is structurally invalid."""


class Conv2D:
    def __init__(self, weights, bias, stride, padding):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        self.stride = int(stride)
        self.padding = int(padding)
        if self.weights.ndim != 4:
            raise WeightFormatError("conv weights must be 4-dimensional")
        if self.bias.shape != (self.weights.shape[0],):
            raise WeightFormatError("conv bias length must equal out_channels")

    @cached_property
    def wpos(self):
        return np.maximum(self.weights, 0.0)

    @cached_property
    def wneg(self):
        return np.minimum(self.weights, 0.0)

    def out_shape(self, shape):
        c, h, w = shape
        if c != self.weights.shape[1]:
            raise WeightFormatError(
                f"conv expects {self.weights.shape[1]} input channels, got {c}")
        k = self.weights.shape[2]
        ho = (h + 2 * self.padding - k) // self.stride + 1
        wo = (w + 2 * self.padding - k) // self.stride + 1
        if ho <= 0 or wo <= 0:
            raise WeightFormatError("conv output would be empty")
        return (self.weights.shape[0], ho, wo)

    def __call__(self, x):
        return _kernels.active().conv_forward(
            self.weights, self.bias, x, self.stride, self.padding)


class ReLU:
    def out_shape(self, shape):
        return shape

    def __call__(self, x):
        return np.maximum(x, 0.0)


class Flatten:
    def out_shape(self, shape):
        return (int(np.prod(shape)),)

    def __call__(self, x):
        return np.ascontiguousarray(x).reshape(-1)


class Dense:
    def __init__(self, weights, bias):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise WeightFormatError("dense weights must be 2-dimensional")
        if self.bias.shape != (self.weights.shape[0],):
            raise WeightFormatError("dense bias length must equal out_features")

    @cached_property
    def wpos(self):
        return np.maximum(self.weights, 0.0)

    @cached_property
    def wneg(self):
        return np.minimum(self.weights, 0.0)

    def out_shape(self, shape):
        if len(shape) != 1 or shape[0] != self.weights.shape[1]:
            raise WeightFormatError(
                f"dense expects flat input of {self.weights.shape[1]}, got {shape}")
        return (self.weights.shape[0],)

    def __call__(self, x):
        return _kernels.active().dense_forward(self.weights, self.bias, x)


class LinearOutput(Dense):
    """Affine network head; same math as Dense, distinct role."""


class Network:
    """Immutable layer stack plus the input contract it was trained with."""

    def __init__(self, layers, input_spec):
        self.layers = tuple(layers)
        self.input_spec = dict(input_spec)
        shape = (self.input_spec["channels"],
                 self.input_spec["height"],
                 self.input_spec["width"])
        for idx, layer in enumerate(self.layers):
            try:
                shape = layer.out_shape(shape)
            except WeightFormatError as exc:
                raise WeightFormatError(f"layer {idx}: {exc}") from None
        if len(shape) != 1:
            raise WeightFormatError("network must end with a flat output")
        self.output_dim = shape[0]

    @property
    def input_shape(self):
        return (self.input_spec["channels"],
                self.input_spec["height"],
                self.input_spec["width"])

    def scale_input(self, image):
        x = np.asarray(image, dtype=np.float64)
        if x.ndim == 2:
            x = x[None, :, :]
        if x.shape != self.input_shape:
            raise ValueError(
                f"image shape {x.shape} does not match input {self.input_shape}")
        return x / self.input_spec["scale"]


def forward(net, image):
    """Network output for one image, as a 1-d float vector."""
    x = net.scale_input(image)
    for layer in net.layers:
        x = layer(x)
    return x


def forward_batch(net, images):
    """Vectorized forward pass over a stack of images, one row per output.

    Pure-numpy path regardless of the kernel engine: the batched matmuls
    are already the fast route, and this path never feeds the soundness
    checks, only empirical estimates.
    """
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 3:
        x = x[:, None, :, :]
    if x.shape[1:] != net.input_shape:
        raise ValueError(
            f"batch shape {x.shape[1:]} does not match input {net.input_shape}")
    return forward_scaled_batch(net, x / net.input_spec["scale"])


def forward_scaled_batch(net, x):
    """Batched forward on inputs already divided by the input scale."""
    x = np.asarray(x, dtype=np.float64)
    for layer in net.layers:
        if isinstance(layer, Conv2D):
            k = layer.weights.shape[2]
            p, s = layer.padding, layer.stride
            xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
            win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
            win = win[:, :, ::s, ::s]
            bsz, _, ho, wo = win.shape[:4]
            cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(
                bsz, -1, ho * wo)
            flat = layer.weights.reshape(layer.weights.shape[0], -1)
            x = (flat @ cols + layer.bias[None, :, None]).reshape(
                bsz, flat.shape[0], ho, wo)
        elif isinstance(layer, Flatten):
            x = x.reshape(x.shape[0], -1)
        elif isinstance(layer, ReLU):
            x = np.maximum(x, 0.0)
        else:
            x = x @ layer.weights.T + layer.bias
    return x


def _require(obj, key, where):
    if key not in obj:
        raise WeightFormatError(f"{where}: missing field '{key}'")
    return obj[key]


def _float_array(values, shape, where):
    arr = np.asarray(values, dtype=np.float64)
    if arr.size != int(np.prod(shape)):
        raise WeightFormatError(
            f"{where}: expected {int(np.prod(shape))} values, got {arr.size}")
    if not np.isfinite(arr).all():
        raise WeightFormatError(f"{where}: non-finite values")
    return arr.reshape(shape)


def _parse_layer(idx, spec):
    where = f"layers[{idx}]"
    kind = _require(spec, "type", where)
    if kind == "relu":
        return ReLU()
    if kind == "flatten":
        return Flatten()
    if kind == "conv":
        cin = _require(spec, "in_channels", where)
        cout = _require(spec, "out_channels", where)
        k = _require(spec, "kernel", where)
        w = _float_array(_require(spec, "weights", where),
                         (cout, cin, k, k), where + ".weights")
        b = _float_array(_require(spec, "bias", where), (cout,), where + ".bias")
        return Conv2D(w, b, _require(spec, "stride", where),
                      _require(spec, "padding", where))
    if kind in ("dense", "linear_output"):
        nin = _require(spec, "in_features", where)
        nout = _require(spec, "out_features", where)
        w = _float_array(_require(spec, "weights", where),
                         (nout, nin), where + ".weights")
        b = _float_array(_require(spec, "bias", where), (nout,), where + ".bias")
        return (Dense if kind == "dense" else LinearOutput)(w, b)
    raise WeightFormatError(f"{where}: unknown layer type '{kind}'")


def load_weights(path):
    """Parse a weight file into a shape-validated Network."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise WeightFormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise WeightFormatError(f"{path}: top level must be an object")
    version = _require(doc, "format_version", str(path))
    if version != FORMAT_VERSION:
        raise WeightFormatError(
            f"{path}: unsupported format_version {version}")
    spec = _require(doc, "input_spec", str(path))
    for key in ("height", "width", "channels", "scale"):
        _require(spec, key, "input_spec")
    if spec["scale"] <= 0:
        raise WeightFormatError("input_spec.scale must be positive")
    layers = [_parse_layer(i, entry)
              for i, entry in enumerate(_require(doc, "layers", str(path)))]
    unknown = set(doc) - {"format_version", "input_spec", "layers", "metadata"}
    if unknown:
        raise WeightFormatError(f"{path}: unknown fields {sorted(unknown)}")
    return Network(layers, {k: spec[k] for k in
                            ("height", "width", "channels", "scale")})


def save_weights(path, net, metadata=None):
    """Write a Network back to the documented JSON layout."""
    layers = []
    for layer in net.layers:
        if isinstance(layer, Conv2D):
            layers.append({
                "type": "conv",
                "in_channels": layer.weights.shape[1],
                "out_channels": layer.weights.shape[0],
                "kernel": layer.weights.shape[2],
                "stride": layer.stride,
                "padding": layer.padding,
                "weights": layer.weights.reshape(-1).tolist(),
                "bias": layer.bias.tolist(),
            })
        elif isinstance(layer, ReLU):
            layers.append({"type": "relu"})
        elif isinstance(layer, Flatten):
            layers.append({"type": "flatten"})
        else:
            layers.append({
                "type": "linear_output" if isinstance(layer, LinearOutput) else "dense",
                "in_features": layer.weights.shape[1],
                "out_features": layer.weights.shape[0],
                "weights": layer.weights.reshape(-1).tolist(),
                "bias": layer.bias.tolist(),
            })
    doc = {
        "format_version": FORMAT_VERSION,
        "input_spec": dict(net.input_spec),
        "layers": layers,
    }
    if metadata:
        doc["metadata"] = metadata
    Path(path).write_text(json.dumps(doc))
