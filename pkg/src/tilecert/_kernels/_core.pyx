# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel engine.

Scalar-loop versions of the kernels in ``reference.py``. The scene kernels
(`render_image`, `ground_x_extrema`, `bounding_box`) replay the reference
arithmetic operation for operation, so with contraction disabled at compile
time they return bit-identical doubles and therefore identical quantized
images. The network kernels accumulate in plain loops, which may order
sums differently from BLAS; parity with the reference engine is approximate
there (and tested with tolerances), while soundness and monotonicity hold
in either engine because every elementary step is monotone.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport NAN, floor, isfinite

cnp.import_array()

NAME = "ext"


# ---------------------------------------------------------------------------
# scene kernels
# ---------------------------------------------------------------------------


cdef inline double _clip01(double v) noexcept nogil:
    if v < 0.0:
        return 0.0
    if v > 1.0:
        return 1.0
    return v


cdef inline int _quant(double v) noexcept nogil:
    return <int>floor(_clip01(v) * 255.0 + 0.5)


cdef inline double _shade1(double x, const double[::1] kx, const double[::1] kv,
                           const double[::1] ks, double outside) noexcept nogil:
    # Segment k is the largest index with kx[k] <= x; past either end the
    # profile is the constant outside value.
    cdef Py_ssize_t m = kx.shape[0]
    cdef Py_ssize_t i, k
    if x < kx[0] or x >= kx[m - 1]:
        return outside
    k = m - 2
    for i in range(m - 1):
        if x < kx[i + 1]:
            k = i
            break
    return kv[k] + ks[k] * (x - kx[k])


def render_image(double offset, double ct, double st,
                 int n, double d, double half_w, double f, double zc,
                 knots_x, knots_v, knots_s, double outside, long sky_q):
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] out = np.empty((n, n), dtype=np.uint8)
    cdef const double[::1] kx = np.ascontiguousarray(knots_x, dtype=np.float64)
    cdef const double[::1] kv = np.ascontiguousarray(knots_v, dtype=np.float64)
    cdef const double[::1] ks = np.ascontiguousarray(knots_s, dtype=np.float64)
    cdef unsigned char skyv = <unsigned char>sky_q
    cdef double zpix, xc, xf, t, u, h, x
    cdef Py_ssize_t i, j
    for i in range(n):
        zpix = -(d * i + half_w)
        if zpix >= 0.0:
            for j in range(n):
                out[i, j] = skyv
            continue
        for j in range(n):
            xc = d * j + half_w
            xf = ct * xc - st * f
            t = zc * xf
            u = t / zpix
            h = -u
            x = offset + h
            out[i, j] = <unsigned char>_quant(
                _shade1(x, kx, kv, ks, outside))
    return out


def ground_x_extrema(double d1, double d2, cand_ct, cand_st,
                     perp_ct, perp_st, perp_ok,
                     int n, double d, double half_w, double f, double zc):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] xlo = np.empty((n, n))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] xhi = np.empty((n, n))
    cdef const double[::1] cct = np.ascontiguousarray(cand_ct, dtype=np.float64)
    cdef const double[::1] cst = np.ascontiguousarray(cand_st, dtype=np.float64)
    cdef const double[:, ::1] pct = np.ascontiguousarray(perp_ct, dtype=np.float64)
    cdef const double[:, ::1] pst = np.ascontiguousarray(perp_st, dtype=np.float64)
    cdef const unsigned char[:, ::1] pok = np.ascontiguousarray(perp_ok, dtype=np.uint8)
    cdef Py_ssize_t nperp = pct.shape[0]
    cdef double zpix, xc, xf, t, u, h0, h1, hp, hmin, hmax
    cdef Py_ssize_t i, j, k
    for i in range(n):
        zpix = -(d * i + half_w)
        if zpix >= 0.0:
            for j in range(n):
                xlo[i, j] = NAN
                xhi[i, j] = NAN
            continue
        for j in range(n):
            xc = d * j + half_w
            xf = cct[0] * xc - cst[0] * f
            t = zc * xf
            u = t / zpix
            h0 = -u
            xf = cct[1] * xc - cst[1] * f
            t = zc * xf
            u = t / zpix
            h1 = -u
            hmin = h0 if h0 < h1 else h1
            hmax = h0 if h0 > h1 else h1
            for k in range(nperp):
                if not pok[k, j]:
                    continue
                xf = pct[k, j] * xc - pst[k, j] * f
                t = zc * xf
                u = t / zpix
                hp = -u
                if not isfinite(hp):
                    continue
                if hp < hmin:
                    hmin = hp
                if hp > hmax:
                    hmax = hp
            xlo[i, j] = d1 + hmin
            xhi[i, j] = d2 + hmax
    return xlo, xhi


def bounding_box(double d1, double d2, cand_ct, cand_st,
                 perp_ct, perp_st, perp_ok,
                 int n, double d, double half_w, double f, double zc,
                 knots_x, knots_v, knots_s, double outside, long sky_q):
    xlo_a, xhi_a = ground_x_extrema(d1, d2, cand_ct, cand_st,
                                    perp_ct, perp_st, perp_ok,
                                    n, d, half_w, f, zc)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] low = np.empty((n, n), dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] high = np.empty((n, n), dtype=np.uint8)
    cdef const double[:, ::1] xlo = xlo_a
    cdef const double[:, ::1] xhi = xhi_a
    cdef const double[::1] kx = np.ascontiguousarray(knots_x, dtype=np.float64)
    cdef const double[::1] kv = np.ascontiguousarray(knots_v, dtype=np.float64)
    cdef const double[::1] ks = np.ascontiguousarray(knots_s, dtype=np.float64)
    cdef unsigned char skyv = <unsigned char>sky_q
    cdef Py_ssize_t m = kx.shape[0]
    cdef double zpix, vlo, vhi, vmin, vmax
    cdef Py_ssize_t i, j, k
    for i in range(n):
        zpix = -(d * i + half_w)
        if zpix >= 0.0:
            for j in range(n):
                low[i, j] = skyv
                high[i, j] = skyv
            continue
        for j in range(n):
            vlo = _shade1(xlo[i, j], kx, kv, ks, outside)
            vhi = _shade1(xhi[i, j], kx, kv, ks, outside)
            vmin = vlo if vlo < vhi else vhi
            vmax = vlo if vlo > vhi else vhi
            for k in range(m):
                if xlo[i, j] < kx[k] and kx[k] < xhi[i, j]:
                    if kv[k] < vmin:
                        vmin = kv[k]
                    if kv[k] > vmax:
                        vmax = kv[k]
            low[i, j] = <unsigned char>_quant(vmin)
            high[i, j] = <unsigned char>_quant(vmax)
    return low, high


# ---------------------------------------------------------------------------
# network kernels
# ---------------------------------------------------------------------------


def conv_forward(w, b, x, int stride, int pad):
    cdef const double[:, :, :, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef const double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t co = wv.shape[0], ci = wv.shape[1]
    cdef Py_ssize_t kh = wv.shape[2], kw = wv.shape[3]
    cdef Py_ssize_t h = xv.shape[1], wd = xv.shape[2]
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (wd + 2 * pad - kw) // stride + 1
    cdef cnp.ndarray[cnp.float64_t, ndim=3] out = np.empty((co, ho, wo))
    cdef double acc
    cdef Py_ssize_t oc, oy, ox, c, ky, kx, iy, ix
    for oc in range(co):
        for oy in range(ho):
            for ox in range(wo):
                acc = 0.0
                for c in range(ci):
                    for ky in range(kh):
                        iy = oy * stride + ky - pad
                        if iy < 0 or iy >= h:
                            continue
                        for kx in range(kw):
                            ix = ox * stride + kx - pad
                            if 0 <= ix < wd:
                                acc += wv[oc, c, ky, kx] * xv[c, iy, ix]
                out[oc, oy, ox] = acc + bv[oc]
    return out


def dense_forward(w, b, x):
    cdef const double[:, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t no = wv.shape[0], ni = wv.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(no)
    cdef double acc
    cdef Py_ssize_t i, j
    for i in range(no):
        acc = 0.0
        for j in range(ni):
            acc += wv[i, j] * xv[j]
        out[i] = acc + bv[i]
    return out


def conv_interval(wpos, wneg, b, lo, hi, int stride, int pad):
    cdef const double[:, :, :, ::1] wp = np.ascontiguousarray(wpos, dtype=np.float64)
    cdef const double[:, :, :, ::1] wn = np.ascontiguousarray(wneg, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef const double[:, :, ::1] lov = np.ascontiguousarray(lo, dtype=np.float64)
    cdef const double[:, :, ::1] hiv = np.ascontiguousarray(hi, dtype=np.float64)
    cdef Py_ssize_t co = wp.shape[0], ci = wp.shape[1]
    cdef Py_ssize_t kh = wp.shape[2], kw = wp.shape[3]
    cdef Py_ssize_t h = lov.shape[1], wd = lov.shape[2]
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (wd + 2 * pad - kw) // stride + 1
    cdef cnp.ndarray[cnp.float64_t, ndim=3] olo = np.empty((co, ho, wo))
    cdef cnp.ndarray[cnp.float64_t, ndim=3] ohi = np.empty((co, ho, wo))
    cdef double alo, ahi, p, q
    cdef Py_ssize_t oc, oy, ox, c, ky, kx, iy, ix
    for oc in range(co):
        for oy in range(ho):
            for ox in range(wo):
                alo = 0.0
                ahi = 0.0
                for c in range(ci):
                    for ky in range(kh):
                        iy = oy * stride + ky - pad
                        if iy < 0 or iy >= h:
                            continue
                        for kx in range(kw):
                            ix = ox * stride + kx - pad
                            if 0 <= ix < wd:
                                p = wp[oc, c, ky, kx]
                                q = wn[oc, c, ky, kx]
                                alo += p * lov[c, iy, ix] + q * hiv[c, iy, ix]
                                ahi += p * hiv[c, iy, ix] + q * lov[c, iy, ix]
                olo[oc, oy, ox] = alo + bv[oc]
                ohi[oc, oy, ox] = ahi + bv[oc]
    return olo, ohi


def dense_interval(wpos, wneg, b, lo, hi):
    cdef const double[:, ::1] wp = np.ascontiguousarray(wpos, dtype=np.float64)
    cdef const double[:, ::1] wn = np.ascontiguousarray(wneg, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef const double[::1] lov = np.ascontiguousarray(lo, dtype=np.float64)
    cdef const double[::1] hiv = np.ascontiguousarray(hi, dtype=np.float64)
    cdef Py_ssize_t no = wp.shape[0], ni = wp.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] olo = np.empty(no)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ohi = np.empty(no)
    cdef double alo, ahi
    cdef Py_ssize_t i, j
    for i in range(no):
        alo = 0.0
        ahi = 0.0
        for j in range(ni):
            alo += wp[i, j] * lov[j] + wn[i, j] * hiv[j]
            ahi += wp[i, j] * hiv[j] + wn[i, j] * lov[j]
        olo[i] = alo + bv[i]
        ohi[i] = ahi + bv[i]
    return olo, ohi
