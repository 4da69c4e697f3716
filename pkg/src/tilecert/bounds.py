"""Sound output ranges of a network over an input box.

Two methods, one contract: every network output for every input inside the
box lies inside the returned intervals.

- `ibp_bounds` pushes the box forward layer by layer. Affine layers split
  weights by sign (lower = W+ @ lo + W- @ hi + b), ReLU clamps both ends
  at 0. Coarse but fast, and elementwise monotone: nested input boxes give
  nested output intervals even in floating point.
- `linear_relaxation_bounds` walks backward keeping one linear lower and
  one linear upper function per output. Affine layers compose exactly;
  ReLU is replaced by its triangle relaxation (upper chord, lower line
  through the origin with slope 0 or 1, whichever halves the box better),
  using pre-activation intervals from a single interval sweep. Usually
  tighter than the box method, never claimed tighter per-instance.
- `grid_oracle` brute-forces forward passes over a sample grid, giving an
  empirical inner range: any sound method's interval must contain it. Test
  scaffolding, not a verification method.

Boxes can be given either as a pixel-level PixelBox (scaled through the
network's input rule) or as an already-scaled (lo, hi) pair of arrays, so
small synthetic nets can be exercised on real-valued boxes directly.

Both methods are real-arithmetic sound; no outward rounding is applied, so
comparisons against them allow a 1e-9 slack for accumulated floating-point
noise. Practical tightness comes from shrinking tiles, not from the bound
method, and absolute values here are looser than a complete solver's.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .network import Conv2D, Dense, Flatten, ReLU, forward_scaled_batch
from .tiling import PixelBox

_ORACLE_BUDGET = 1_000_000
# Cartesian sampling only up to this many input dims; beyond it the oracle
# switches to random samples plus the two extreme corners.
_CARTESIAN_MAX_DIM = 6


@dataclass(frozen=True)
class OutputIntervals:
    """Per-output [lo, hi] bounds."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=np.float64))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("output intervals must be matching 1-d arrays")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("non-finite output bounds")
        if (lo > hi).any():
            raise ValueError("output interval with lo > hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def width(self):
        return self.hi - self.lo

    def encloses(self, other, slack=0.0):
        return bool((self.lo <= other.lo + slack).all()
                    and (other.hi <= self.hi + slack).all())


def _input_interval(net, box):
    """Normalize a box argument to scaled (lo, hi) arrays of input shape."""
    if isinstance(box, PixelBox):
        scale = net.input_spec["scale"]
        lo = box.low.astype(np.float64)[None, :, :] / scale
        hi = box.high.astype(np.float64)[None, :, :] / scale
    else:
        lo, hi = box
        lo = np.asarray(lo, dtype=np.float64).reshape(net.input_shape)
        hi = np.asarray(hi, dtype=np.float64).reshape(net.input_shape)
    if lo.shape != net.input_shape:
        raise ValueError(
            f"box shape {lo.shape} does not match input {net.input_shape}")
    if (lo > hi).any():
        raise ValueError("input box with lo > hi")
    return lo, hi


def _interval_sweep(net, lo, hi):
    """Propagate [lo, hi] through all layers.

    Returns (per-layer input intervals, final lo, final hi). The recorded
    inputs are what the backward relaxation needs at each ReLU.
    """
    eng = _kernels.active()
    inputs = []
    for layer in net.layers:
        inputs.append((lo, hi))
        if isinstance(layer, Conv2D):
            lo, hi = eng.conv_interval(layer.wpos, layer.wneg, layer.bias,
                                       lo, hi, layer.stride, layer.padding)
        elif isinstance(layer, Dense):
            lo, hi = eng.dense_interval(layer.wpos, layer.wneg, layer.bias,
                                        lo, hi)
        elif isinstance(layer, Flatten):
            lo = np.ascontiguousarray(lo).reshape(-1)
            hi = np.ascontiguousarray(hi).reshape(-1)
        elif isinstance(layer, ReLU):
            lo = np.maximum(lo, 0.0)
            hi = np.maximum(hi, 0.0)
        else:
            raise TypeError(f"unsupported layer {type(layer).__name__}")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("non-finite intermediate interval")
    return inputs, lo, hi


def ibp_bounds(net, box):
    """Interval propagation through the network; sound outer bounds."""
    lo, hi = _input_interval(net, box)
    _, flo, fhi = _interval_sweep(net, lo, hi)
    return OutputIntervals(flo, fhi)


def _relu_lines(lo, hi):
    """Triangle relaxation of ReLU per neuron.

    Returns slopes/intercepts (ls, li, us, ui) with
    ls*x + li <= relu(x) <= us*x + ui on [lo, hi].
    """
    ls = np.zeros_like(lo)
    li = np.zeros_like(lo)
    us = np.zeros_like(lo)
    ui = np.zeros_like(lo)
    active = lo >= 0.0
    ls[active] = 1.0
    us[active] = 1.0
    unstable = (lo < 0.0) & (hi > 0.0)
    if unstable.any():
        l_u = lo[unstable]
        h_u = hi[unstable]
        s = h_u / (h_u - l_u)
        us[unstable] = s
        ui[unstable] = -s * l_u
        ls[unstable] = (h_u > -l_u).astype(np.float64)
    return ls, li, us, ui


def _conv_backward(coeff, layer, in_shape):
    """Pull linear coefficients back through a conv layer (exact adjoint).

    coeff has shape (K,) + out_shape; result has shape (K,) + in_shape.
    Also returns the bias contribution picked up by each output row.
    """
    kdim = coeff.shape[0]
    ci, hin, win = in_shape
    w = layer.weights
    ksz = w.shape[2]
    s, p = layer.stride, layer.padding
    ho, wo = coeff.shape[2], coeff.shape[3]
    acc = np.zeros((kdim, ci, hin + 2 * p, win + 2 * p))
    for ky in range(ksz):
        for kx in range(ksz):
            # (K, co, ho, wo) x (co, ci) -> (K, ho, wo, ci)
            contrib = np.tensordot(coeff, w[:, :, ky, kx], axes=([1], [0]))
            acc[:, :, ky:ky + s * ho:s, kx:kx + s * wo:s] += (
                contrib.transpose(0, 3, 1, 2))
    back = acc[:, :, p:p + hin, p:p + win]
    bias_part = coeff.sum(axis=(2, 3)) @ layer.bias
    return back, bias_part


def linear_relaxation_bounds(net, box):
    """Backward linear bounding functions; sound, usually tighter than IBP."""
    blo, bhi = _input_interval(net, box)
    inputs, _, _ = _interval_sweep(net, blo, bhi)

    kdim = net.output_dim
    eye = np.eye(kdim)
    a_lo = eye.copy()
    a_hi = eye.copy()
    c_lo = np.zeros(kdim)
    c_hi = np.zeros(kdim)

    for layer, (in_lo, in_hi) in zip(reversed(net.layers), reversed(inputs)):
        if isinstance(layer, Dense):
            c_lo = c_lo + a_lo @ layer.bias
            c_hi = c_hi + a_hi @ layer.bias
            a_lo = a_lo @ layer.weights
            a_hi = a_hi @ layer.weights
        elif isinstance(layer, Conv2D):
            out_shape = layer.out_shape(in_lo.shape)
            a_lo, blo_part = _conv_backward(
                a_lo.reshape((kdim,) + out_shape), layer, in_lo.shape)
            a_hi, bhi_part = _conv_backward(
                a_hi.reshape((kdim,) + out_shape), layer, in_lo.shape)
            c_lo = c_lo + blo_part
            c_hi = c_hi + bhi_part
        elif isinstance(layer, Flatten):
            a_lo = a_lo.reshape((kdim,) + in_lo.shape)
            a_hi = a_hi.reshape((kdim,) + in_lo.shape)
        elif isinstance(layer, ReLU):
            ls, li, us, ui = _relu_lines(in_lo.reshape(-1), in_hi.reshape(-1))
            flat_lo = a_lo.reshape(kdim, -1)
            flat_hi = a_hi.reshape(kdim, -1)
            lo_pos = np.maximum(flat_lo, 0.0)
            lo_neg = np.minimum(flat_lo, 0.0)
            hi_pos = np.maximum(flat_hi, 0.0)
            hi_neg = np.minimum(flat_hi, 0.0)
            c_lo = c_lo + lo_pos @ li + lo_neg @ ui
            c_hi = c_hi + hi_pos @ ui + hi_neg @ li
            a_lo = (lo_pos * ls + lo_neg * us).reshape(a_lo.shape)
            a_hi = (hi_pos * us + hi_neg * ls).reshape(a_hi.shape)
        else:
            raise TypeError(f"unsupported layer {type(layer).__name__}")

    flat_lo = a_lo.reshape(kdim, -1)
    flat_hi = a_hi.reshape(kdim, -1)
    flat_blo = blo.reshape(-1)
    flat_bhi = bhi.reshape(-1)
    lo = (np.maximum(flat_lo, 0.0) @ flat_blo
          + np.minimum(flat_lo, 0.0) @ flat_bhi + c_lo)
    hi = (np.maximum(flat_hi, 0.0) @ flat_bhi
          + np.minimum(flat_hi, 0.0) @ flat_blo + c_hi)
    return OutputIntervals(lo, hi)


def grid_oracle(net, box, resolution, seed=0):
    """Empirical inner range of the network over a box.

    Low-dimensional inputs get a Cartesian grid with `resolution` points
    per axis; image-sized inputs get `resolution` random points plus the
    two extreme corners. Point budget is capped; exceeding it is an error,
    not a silent subsample.
    """
    lo, hi = _input_interval(net, box)
    flat_lo = lo.reshape(-1)
    flat_hi = hi.reshape(-1)
    dim = flat_lo.size
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    if dim <= _CARTESIAN_MAX_DIM:
        total = resolution ** dim
        if total > _ORACLE_BUDGET:
            raise ValueError(f"oracle budget exceeded: {total} grid points")
        axes = [np.linspace(flat_lo[i], flat_hi[i], resolution)
                for i in range(dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
    else:
        if resolution + 2 > _ORACLE_BUDGET:
            raise ValueError(f"oracle budget exceeded: {resolution} samples")
        rng = np.random.default_rng(seed)
        pts = rng.uniform(flat_lo, flat_hi, size=(resolution, dim))
        pts = np.vstack([flat_lo[None, :], flat_hi[None, :], pts])

    shape = net.input_shape
    outs = []
    for start in range(0, len(pts), 4096):
        chunk = pts[start:start + 4096].reshape((-1,) + shape)
        outs.append(forward_scaled_batch(net, chunk))
    vals = np.concatenate(outs, axis=0)
    return OutputIntervals(vals.min(axis=0), vals.max(axis=0))
