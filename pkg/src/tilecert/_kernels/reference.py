"""Pure-numpy kernel implementations.

This module is the fallback engine used when the compiled extension is not
available, and the reference that `_core.pyx` must agree with.

The scene kernels (ray x-coordinates, shading, quantization) are written so
that the compiled engine can reproduce them bit-for-bit: every per-pixel
value is produced by the same sequence of IEEE double operations, and no
transcendental function is evaluated inside a kernel (callers pass
precomputed cos/sin). The interval kernels for network layers may differ
from the compiled engine in summation order only.
"""

import numpy as np

NAME = "python"


# ---------------------------------------------------------------------------
# scene kernels
#
# Pixel (row i, col j) maps to the virtual image plane at
#   horizontal  xc = d*j + half_w
#   vertical    zpix = -(d*i + half_w)
# with half_w = d/2 - n*d/2 precomputed by the caller. A pixel is sky iff
# zpix >= 0. For ground pixels the ray from the focal point (offset, 0, zc)
# hits the road plane at
#   x = offset - (zc*xf)/zpix,   xf = ct*xc - st*f
#   y = -(zc*yf)/zpix,           yf = st*xc + ct*f
# ---------------------------------------------------------------------------


def _plane_coords(n, d, half_w):
    j = np.arange(n, dtype=np.float64)
    xc = d * j + half_w
    zpix = -(d * j + half_w)
    return xc, zpix


def ray_ground_x(offset, ct, st, n, d, half_w, f, zc):
    """World x of each pixel's road intersection, NaN on sky rows; (n, n)."""
    xc, zpix = _plane_coords(n, d, half_w)
    xf = ct * xc - st * f
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -((zc * xf)[None, :] / zpix[:, None])
    x = offset + h
    x[zpix >= 0.0, :] = np.nan
    return x


def shade(x, knots_x, knots_v, knots_s, outside):
    """Intensity at world x-positions; piecewise linear in x.

    Plateau segments carry slope 0 so their value is reproduced exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    idx = np.searchsorted(knots_x, x, side="right") - 1
    inside = (idx >= 0) & (idx < len(knots_x) - 1)
    k = np.clip(idx, 0, len(knots_x) - 2)
    v = knots_v[k] + knots_s[k] * (x - knots_x[k])
    return np.where(inside, v, outside)


def quantize_scaled(v):
    """Scale [0,1] intensities to [0,255] ints, ties away from zero."""
    t = np.clip(v, 0.0, 1.0) * 255.0
    return np.floor(t + 0.5).astype(np.int64)


def render_image(offset, ct, st, n, d, half_w, f, zc,
                 knots_x, knots_v, knots_s, outside, sky_q):
    x = ray_ground_x(offset, ct, st, n, d, half_w, f, zc)
    ground = ~np.isnan(x)
    img = np.full((n, n), sky_q, dtype=np.uint8)
    vals = quantize_scaled(shade(x[ground], knots_x, knots_v, knots_s, outside))
    img[ground] = vals.astype(np.uint8)
    return img


def ground_x_extrema(d1, d2, cand_ct, cand_st, perp_ct, perp_st, perp_ok,
                     n, d, half_w, f, zc):
    """Per-pixel extrema of the road-intersection x over a state rectangle.

    x(offset, theta) = offset + h(theta) with h evaluated at the candidate
    angles: the two cell corner angles (`cand_ct/st`, length 2) plus the
    per-column perpendicular-ray angles (`perp_*`, shape (K, n), masked by
    `perp_ok`). Returns (xlo, xhi), NaN on sky rows.
    """
    xc, zpix = _plane_coords(n, d, half_w)
    hs = []
    for ct, st in zip(cand_ct, cand_st):
        xf = ct * xc - st * f
        with np.errstate(divide="ignore", invalid="ignore"):
            hs.append(-((zc * xf)[None, :] / zpix[:, None]))
    hmin = np.minimum(hs[0], hs[1])
    hmax = np.maximum(hs[0], hs[1])
    for k in range(perp_ct.shape[0]):
        if not perp_ok[k].any():
            continue
        xfp = perp_ct[k] * xc - perp_st[k] * f
        with np.errstate(divide="ignore", invalid="ignore"):
            hp = -((zc * xfp)[None, :] / zpix[:, None])
        use = perp_ok[k][None, :] & np.isfinite(hp)
        hmin = np.where(use, np.minimum(hmin, hp), hmin)
        hmax = np.where(use, np.maximum(hmax, hp), hmax)
    xlo = d1 + hmin
    xhi = d2 + hmax
    xlo[zpix >= 0.0, :] = np.nan
    xhi[zpix >= 0.0, :] = np.nan
    return xlo, xhi


def shade_range(xlo, xhi, knots_x, knots_v, knots_s, outside):
    """Min/max intensity over [xlo, xhi] per pixel (piecewise-linear profile).

    Extrema of a piecewise-linear function over an interval sit at the
    endpoints or at interior knots, so it suffices to scan both.
    """
    vlo = shade(xlo, knots_x, knots_v, knots_s, outside)
    vhi = shade(xhi, knots_x, knots_v, knots_s, outside)
    vmin = np.minimum(vlo, vhi)
    vmax = np.maximum(vlo, vhi)
    for kx, kv in zip(knots_x, knots_v):
        inside = (xlo < kx) & (kx < xhi)
        vmin = np.where(inside, np.minimum(vmin, kv), vmin)
        vmax = np.where(inside, np.maximum(vmax, kv), vmax)
    return vmin, vmax


def quantize_box(vmin, vmax):
    """Quantize an intensity interval endpoint-wise to 8-bit levels.

    Both ends use the renderer's half-away rounding. Quantization is
    monotone, so [quantize(vmin), quantize(vmax)] contains the quantized
    value of every intensity in [vmin, vmax], and a degenerate interval
    collapses to the exact rendered level.
    """
    lo = np.floor(np.clip(vmin, 0.0, 1.0) * 255.0 + 0.5)
    hi = np.floor(np.clip(vmax, 0.0, 1.0) * 255.0 + 0.5)
    return lo.astype(np.int64), hi.astype(np.int64)


def bounding_box(d1, d2, cand_ct, cand_st, perp_ct, perp_st, perp_ok,
                 n, d, half_w, f, zc,
                 knots_x, knots_v, knots_s, outside, sky_q):
    """Per-pixel [low, high] uint8 bounds over a state rectangle."""
    xlo, xhi = ground_x_extrema(d1, d2, cand_ct, cand_st, perp_ct, perp_st,
                                perp_ok, n, d, half_w, f, zc)
    ground = ~np.isnan(xlo)
    vmin, vmax = shade_range(xlo[ground], xhi[ground],
                             knots_x, knots_v, knots_s, outside)
    qlo, qhi = quantize_box(vmin, vmax)
    low = np.full((n, n), sky_q, dtype=np.uint8)
    high = np.full((n, n), sky_q, dtype=np.uint8)
    low[ground] = qlo.astype(np.uint8)
    high[ground] = qhi.astype(np.uint8)
    return low, high


# ---------------------------------------------------------------------------
# network kernels
# ---------------------------------------------------------------------------


def _im2col(x, kh, kw, stride, pad):
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    win = win[:, ::stride, ::stride]
    ho, wo = win.shape[1], win.shape[2]
    cols = win.transpose(0, 3, 4, 1, 2).reshape(c * kh * kw, ho * wo)
    return np.ascontiguousarray(cols), ho, wo


def conv_forward(w, b, x, stride, pad):
    co = w.shape[0]
    cols, ho, wo = _im2col(x, w.shape[2], w.shape[3], stride, pad)
    out = w.reshape(co, -1) @ cols + b[:, None]
    return out.reshape(co, ho, wo)


def dense_forward(w, b, x):
    return w @ x + b


def conv_interval(wpos, wneg, b, lo, hi, stride, pad):
    """Sound output interval of a conv layer over an input interval.

    Sign-split form: lo' = W+ @ lo + W- @ hi + b (and symmetrically), which
    is monotone in (lo, hi) elementwise, so nested input boxes give nested
    output boxes even in floating point.
    """
    co, _, kh, kw = wpos.shape
    clo, ho, wo = _im2col(lo, kh, kw, stride, pad)
    chi, _, _ = _im2col(hi, kh, kw, stride, pad)
    wp = wpos.reshape(co, -1)
    wn = wneg.reshape(co, -1)
    olo = wp @ clo + wn @ chi + b[:, None]
    ohi = wp @ chi + wn @ clo + b[:, None]
    return olo.reshape(co, ho, wo), ohi.reshape(co, ho, wo)


def dense_interval(wpos, wneg, b, lo, hi):
    olo = wpos @ lo + wneg @ hi + b
    ohi = wpos @ hi + wneg @ lo + b
    return olo, ohi
