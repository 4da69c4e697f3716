"""Weight export/import in the shared JSON format.

The format is the binding contract with the verifier package:

    {"format_version": 1,
     "input_spec": {"height", "width", "channels", "scale"},
     "layers": [{"type": "conv" | "relu" | "flatten" | "dense"
                         | "linear_output", ...shape fields...,
                 "weights": [flat row-major floats], "bias": [...]},
                ...],
     "metadata": {...}}

Conv weights are flat (out_channels, in_channels, k, k); dense weights
flat (out_features, in_features); flatten is channel-major then
row-major. torch stores both tensors in exactly that layout, so export is
a reshape-free tolist. Weights are written at float64 precision of their
float32 values; reloading on either side reproduces the same numbers.
"""

import json
from pathlib import Path

import numpy as np
import torch
from torch import nn

FORMAT_VERSION = 1


def export_weights(path, model, input_side, scale, metadata=None):
    """Serialize a sequential model to the shared weight-file layout."""
    layers = []
    last_linear = max(i for i, m in enumerate(model)
                     if isinstance(m, nn.Linear))
    for idx, module in enumerate(model):
        if isinstance(module, nn.Conv2d):
            w = module.weight.detach().numpy().astype(np.float64)
            layers.append({
                "type": "conv",
                "in_channels": w.shape[1],
                "out_channels": w.shape[0],
                "kernel": w.shape[2],
                "stride": module.stride[0],
                "padding": module.padding[0],
                "weights": w.reshape(-1).tolist(),
                "bias": module.bias.detach().numpy()
                              .astype(np.float64).tolist(),
            })
        elif isinstance(module, nn.ReLU):
            layers.append({"type": "relu"})
        elif isinstance(module, nn.Flatten):
            layers.append({"type": "flatten"})
        elif isinstance(module, nn.Linear):
            w = module.weight.detach().numpy().astype(np.float64)
            layers.append({
                "type": "linear_output" if idx == last_linear else "dense",
                "in_features": w.shape[1],
                "out_features": w.shape[0],
                "weights": w.reshape(-1).tolist(),
                "bias": module.bias.detach().numpy()
                              .astype(np.float64).tolist(),
            })
        else:
            raise TypeError(f"cannot export layer {type(module).__name__}")
    doc = {
        "format_version": FORMAT_VERSION,
        "input_spec": {"height": input_side, "width": input_side,
                       "channels": 1, "scale": scale},
        "layers": layers,
    }
    if metadata:
        doc["metadata"] = metadata
    Path(path).write_text(json.dumps(doc))


def import_weights(path):
    """Rebuild a torch model from a shared-format weight file.

    Returns (model, input_spec). Used for evaluation of exported files
    and for the round-trip tests; the verifier package has its own
    independent reader.
    """
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported format_version "
                         f"{doc.get('format_version')!r}")
    spec = doc["input_spec"]
    modules = []
    for entry in doc["layers"]:
        kind = entry["type"]
        if kind == "relu":
            modules.append(nn.ReLU())
        elif kind == "flatten":
            modules.append(nn.Flatten())
        elif kind == "conv":
            conv = nn.Conv2d(entry["in_channels"], entry["out_channels"],
                             kernel_size=entry["kernel"],
                             stride=entry["stride"],
                             padding=entry["padding"])
            shape = (entry["out_channels"], entry["in_channels"],
                     entry["kernel"], entry["kernel"])
            _load(conv, entry, shape)
            modules.append(conv)
        elif kind in ("dense", "linear_output"):
            lin = nn.Linear(entry["in_features"], entry["out_features"])
            _load(lin, entry, (entry["out_features"], entry["in_features"]))
            modules.append(lin)
        else:
            raise ValueError(f"unknown layer type {kind!r}")
    return nn.Sequential(*modules), spec


def _load(module, entry, shape):
    w = np.asarray(entry["weights"], dtype=np.float64).reshape(shape)
    b = np.asarray(entry["bias"], dtype=np.float64)
    with torch.no_grad():
        module.weight.copy_(torch.from_numpy(w))
        module.bias.copy_(torch.from_numpy(b))
