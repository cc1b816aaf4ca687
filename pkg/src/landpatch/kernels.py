"""Hot numeric kernels: convolution, max-pooling, and affine resampling.

Each kernel has two implementations: a numba ``@njit`` version and a pure
numpy version. The numba path is used when numba imports successfully and
the environment variable ``LANDPATCH_NO_NUMBA`` is unset; set
``LANDPATCH_NO_NUMBA=1`` to force the numpy path (useful for debugging and
for the benchmark in benchmarks/bench_kernels.py, which times both).

Layout conventions: activations are float64 NHWC, conv weights are
(kh, kw, c_in, c_out). The affine sampler works on float64 HWC images and
is shared by the augmentation module.

Tie-breaking in max-pooling is "first maximum in row-major window order"
on both paths, so gradients land on the same element either way.
"""
from __future__ import annotations

import os

import numpy as np

_FORCE_NUMPY = os.environ.get("LANDPATCH_NO_NUMBA", "") not in ("", "0")

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only where numba is absent
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


USE_NUMBA = HAS_NUMBA and not _FORCE_NUMPY

# Fill-mode / interpolation codes shared with the augment module.
FILL_CONSTANT = 0
FILL_NEAREST = 1
FILL_REFLECT = 2
FILL_WRAP = 3
INTERP_NEAREST = 0
INTERP_BILINEAR = 1


def get_backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# conv2d
# ---------------------------------------------------------------------------


def conv2d_forward_np(x, w, b, stride):
    n, h, ww, _ = x.shape
    kh, kw, _, co = w.shape
    ho = (h - kh) // stride + 1
    wo = (ww - kw) // stride + 1
    y = np.zeros((n, ho, wo, co), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            xs = x[:, i : i + ho * stride : stride, j : j + wo * stride : stride, :]
            y += np.matmul(xs, w[i, j])
    return y + b


@njit(cache=True)
def _im2col_nb(x, kh, kw, stride, ho, wo):  # pragma: no cover - via dispatch
    n, h, ww, ci = x.shape
    cols = np.empty((n * ho * wo, kh * kw * ci), dtype=np.float64)
    row = 0
    for ni in range(n):
        for oi in range(ho):
            for oj in range(wo):
                col = 0
                for i in range(kh):
                    for j in range(kw):
                        xv = x[ni, oi * stride + i, oj * stride + j]
                        for c in range(ci):
                            cols[row, col] = xv[c]
                            col += 1
                row += 1
    return cols


@njit(cache=True)
def conv2d_forward_nb(x, w, b, stride):  # pragma: no cover - via dispatch
    # gather patch columns at native speed, then one BLAS GEMM
    n, h, ww, ci = x.shape
    kh, kw, _, co = w.shape
    ho = (h - kh) // stride + 1
    wo = (ww - kw) // stride + 1
    cols = _im2col_nb(x, kh, kw, stride, ho, wo)
    wm = np.ascontiguousarray(w).reshape(kh * kw * ci, co)
    y2 = np.dot(cols, wm)
    y = np.empty((n, ho, wo, co), dtype=np.float64)
    row = 0
    for ni in range(n):
        for oi in range(ho):
            for oj in range(wo):
                for oc in range(co):
                    y[ni, oi, oj, oc] = y2[row, oc] + b[oc]
                row += 1
    return y


def conv2d_backward_np(x, w, dy, stride):
    n, h, ww, ci = x.shape
    kh, kw, _, co = w.shape
    _, ho, wo, _ = dy.shape
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    for i in range(kh):
        for j in range(kw):
            xs = x[:, i : i + ho * stride : stride, j : j + wo * stride : stride, :]
            dw[i, j] = np.tensordot(xs, dy, axes=([0, 1, 2], [0, 1, 2]))
            dx[:, i : i + ho * stride : stride, j : j + wo * stride : stride, :] += np.matmul(
                dy, w[i, j].T
            )
    db = dy.sum(axis=(0, 1, 2))
    return dx, dw, db


@njit(cache=True)
def conv2d_backward_nb(x, w, dy, stride):  # pragma: no cover - via dispatch
    n, h, ww, ci = x.shape
    kh, kw, _, co = w.shape
    _, ho, wo, _ = dy.shape
    k = kh * kw * ci
    rows = n * ho * wo
    cols = _im2col_nb(x, kh, kw, stride, ho, wo)
    dy2 = np.ascontiguousarray(dy).reshape(rows, co)
    dw = np.dot(cols.T, dy2).reshape(kh, kw, ci, co)
    dcols = np.dot(dy2, np.ascontiguousarray(w).reshape(k, co).T)
    db = np.zeros(co, dtype=np.float64)
    for r in range(rows):
        for oc in range(co):
            db[oc] += dy2[r, oc]
    dx = np.zeros(x.shape, dtype=np.float64)
    row = 0
    for ni in range(n):
        for oi in range(ho):
            for oj in range(wo):
                col = 0
                for i in range(kh):
                    for j in range(kw):
                        dxv = dx[ni, oi * stride + i, oj * stride + j]
                        for c in range(ci):
                            dxv[c] += dcols[row, col]
                            col += 1
                row += 1
    return dx, dw, db


# ---------------------------------------------------------------------------
# max-pool (kernel k, stride k, floor semantics: trailing remainder dropped)
# ---------------------------------------------------------------------------


def maxpool_forward_np(x, k):
    n, h, w, c = x.shape
    ho, wo = h // k, w // k
    xc = x[:, : ho * k, : wo * k, :]
    win = xc.reshape(n, ho, k, wo, k, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, ho, wo, c, k * k)
    idx = np.argmax(win, axis=-1)
    y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return y, idx.astype(np.int64)


@njit(cache=True)
def maxpool_forward_nb(x, k):  # pragma: no cover
    n, h, w, c = x.shape
    ho, wo = h // k, w // k
    y = np.empty((n, ho, wo, c), dtype=np.float64)
    idx = np.zeros((n, ho, wo, c), dtype=np.int64)
    for ni in range(n):
        for oi in range(ho):
            for oj in range(wo):
                for ci in range(c):
                    best = x[ni, oi * k, oj * k, ci]
                    bi = 0
                    for i in range(k):
                        for j in range(k):
                            v = x[ni, oi * k + i, oj * k + j, ci]
                            if v > best:
                                best = v
                                bi = i * k + j
                    y[ni, oi, oj, ci] = best
                    idx[ni, oi, oj, ci] = bi
    return y, idx


def maxpool_backward_np(dy, idx, k, in_shape):
    n, h, w, c = in_shape
    ho, wo = h // k, w // k
    win = np.zeros((n, ho, wo, c, k * k), dtype=np.float64)
    np.put_along_axis(win, idx[..., None], dy[..., None], axis=-1)
    dxc = win.reshape(n, ho, wo, c, k, k).transpose(0, 1, 4, 2, 5, 3).reshape(n, ho * k, wo * k, c)
    if ho * k == h and wo * k == w:
        return dxc
    dx = np.zeros(in_shape, dtype=np.float64)
    dx[:, : ho * k, : wo * k, :] = dxc
    return dx


@njit(cache=True)
def maxpool_backward_nb(dy, idx, k, in_shape):  # pragma: no cover
    n, h, w, c = in_shape
    ho, wo = h // k, w // k
    dx = np.zeros((n, h, w, c), dtype=np.float64)
    for ni in range(n):
        for oi in range(ho):
            for oj in range(wo):
                for ci in range(c):
                    b = idx[ni, oi, oj, ci]
                    dx[ni, oi * k + b // k, oj * k + b % k, ci] += dy[ni, oi, oj, ci]
    return dx


# ---------------------------------------------------------------------------
# affine resampling (inverse mapping) for the augmentation module
# ---------------------------------------------------------------------------


def _map_index_np(i, n, mode):
    if mode == FILL_NEAREST:
        return np.clip(i, 0, n - 1)
    if mode == FILL_REFLECT:
        # symmetric reflection: ... 1 0 | 0 1 .. n-1 | n-1 n-2 ...
        m = np.mod(i, 2 * n)
        return np.where(m >= n, 2 * n - 1 - m, m)
    if mode == FILL_WRAP:
        return np.mod(i, n)
    return np.clip(i, 0, n - 1)  # constant handled by caller's in-bounds mask


def affine_sample_np(src, m00, m01, m02, m10, m11, m12, fill_mode, fill_value, interp):
    h, w, c = src.shape
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    u = m00 * xs[None, :] + m01 * ys[:, None] + m02
    v = m10 * xs[None, :] + m11 * ys[:, None] + m12

    if interp == INTERP_NEAREST:
        xi = np.floor(u + 0.5).astype(np.int64)
        yi = np.floor(v + 0.5).astype(np.int64)
        inb = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        xm = _map_index_np(xi, w, fill_mode)
        ym = _map_index_np(yi, h, fill_mode)
        out = src[ym, xm, :].copy()
        if fill_mode == FILL_CONSTANT:
            out[~inb] = fill_value
        return out

    x0 = np.floor(u).astype(np.int64)
    y0 = np.floor(v).astype(np.int64)
    fx = (u - x0)[..., None]
    fy = (v - y0)[..., None]
    out = np.zeros((h, w, c), dtype=np.float64)
    for dyi in (0, 1):
        for dxi in (0, 1):
            cx = x0 + dxi
            cy = y0 + dyi
            wgt = (fx if dxi else 1.0 - fx) * (fy if dyi else 1.0 - fy)
            xm = _map_index_np(cx, w, fill_mode)
            ym = _map_index_np(cy, h, fill_mode)
            val = src[ym, xm, :]
            if fill_mode == FILL_CONSTANT:
                inb = ((cx >= 0) & (cx < w) & (cy >= 0) & (cy < h))[..., None]
                val = np.where(inb, val, float(fill_value))
            out += wgt * val
    return out


@njit(cache=True)
def _map_index_nb(i, n, mode):  # pragma: no cover
    if mode == FILL_NEAREST:
        if i < 0:
            return 0
        if i > n - 1:
            return n - 1
        return i
    if mode == FILL_REFLECT:
        m = i % (2 * n)
        if m >= n:
            return 2 * n - 1 - m
        return m
    if mode == FILL_WRAP:
        return i % n
    if i < 0:
        return 0
    if i > n - 1:
        return n - 1
    return i


@njit(cache=True)
def affine_sample_nb(src, m00, m01, m02, m10, m11, m12, fill_mode, fill_value, interp):  # pragma: no cover
    h, w, c = src.shape
    out = np.zeros((h, w, c), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            u = m00 * x + m01 * y + m02
            v = m10 * x + m11 * y + m12
            if interp == INTERP_NEAREST:
                xi = int(np.floor(u + 0.5))
                yi = int(np.floor(v + 0.5))
                if fill_mode == FILL_CONSTANT and (xi < 0 or xi >= w or yi < 0 or yi >= h):
                    for ci in range(c):
                        out[y, x, ci] = fill_value
                else:
                    xm = _map_index_nb(xi, w, fill_mode)
                    ym = _map_index_nb(yi, h, fill_mode)
                    for ci in range(c):
                        out[y, x, ci] = src[ym, xm, ci]
            else:
                x0 = int(np.floor(u))
                y0 = int(np.floor(v))
                fx = u - x0
                fy = v - y0
                for dyi in range(2):
                    for dxi in range(2):
                        cx = x0 + dxi
                        cy = y0 + dyi
                        wx = fx if dxi == 1 else 1.0 - fx
                        wy = fy if dyi == 1 else 1.0 - fy
                        wgt = wx * wy
                        if fill_mode == FILL_CONSTANT and (cx < 0 or cx >= w or cy < 0 or cy >= h):
                            for ci in range(c):
                                out[y, x, ci] += wgt * fill_value
                        else:
                            xm = _map_index_nb(cx, w, fill_mode)
                            ym = _map_index_nb(cy, h, fill_mode)
                            for ci in range(c):
                                out[y, x, ci] += wgt * src[ym, xm, ci]
    return out


# Active bindings. Both paths stay importable for the benchmark and the
# cross-path equivalence tests.
if USE_NUMBA:
    conv2d_forward = conv2d_forward_nb
    conv2d_backward = conv2d_backward_nb
    maxpool_forward = maxpool_forward_nb
    maxpool_backward = maxpool_backward_nb
    affine_sample = affine_sample_nb
else:
    conv2d_forward = conv2d_forward_np
    conv2d_backward = conv2d_backward_np
    maxpool_forward = maxpool_forward_np
    maxpool_backward = maxpool_backward_np
    affine_sample = affine_sample_np
