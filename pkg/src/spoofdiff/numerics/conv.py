"""Convolution-family operations on Tensor: vanilla conv2d, central-difference
conv2d, max pooling, and matrix-based 2-D resampling (bilinear / nearest).

All operations accept either a single image ``[C, H, W]`` or a batch
``[B, C, H, W]`` and are differentiable w.r.t. every Tensor argument.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, _deposit


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _all_finite(arr: np.ndarray) -> bool:
    # min/max propagate NaN and expose infinities without a bool temp
    return bool(np.isfinite(arr.min()) and np.isfinite(arr.max()))


def _check_conv_args(x: Tensor, kernel: Tensor, stride: int, padding: int) -> None:
    if kernel.ndim != 4 or kernel.shape[2] != kernel.shape[3]:
        raise ValueError(f"kernel must be [C_out, C_in, k, k], got {kernel.shape}")
    k = kernel.shape[2]
    if k % 2 != 1:
        raise ValueError(f"kernel size must be odd, got {k}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ValueError(f"padding must be >= 0, got {padding}")
    if x.ndim not in (3, 4):
        raise ValueError(f"input must be [C,H,W] or [B,C,H,W], got shape {x.shape}")
    c_in = x.shape[-3]
    if c_in != kernel.shape[1]:
        raise ValueError(
            f"input channels ({c_in}) do not match kernel C_in ({kernel.shape[1]})")


def _pad_zeros(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    b, c, h, w = x.shape
    xp = np.zeros((b, c, h + 2 * padding, w + 2 * padding), dtype=x.dtype)
    xp[:, :, padding:-padding, padding:-padding] = x
    return xp


def _im2col(xp: np.ndarray, k: int, stride: int, oh: int, ow: int) -> np.ndarray:
    """[B,C,Hp,Wp] -> [B, C*k*k, oh*ow] patch matrix (single strided pass)."""
    b, c, _, _ = xp.shape
    cols = np.empty((b, c, k, k, oh, ow), dtype=xp.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = xp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride]
    return cols.reshape(b, c * k * k, oh * ow)


def _col2im(cols: np.ndarray, shape: tuple, k: int, stride: int, padding: int,
            oh: int, ow: int) -> np.ndarray:
    """Scatter-add the inverse of _im2col back to an unpadded image gradient."""
    b, c, h, w = shape
    hp, wp = h + 2 * padding, w + 2 * padding
    dxp = np.zeros((b, c, hp, wp), dtype=cols.dtype)
    win = cols.reshape(b, c, k, k, oh, ow)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += win[:, :, i, j]
    if padding:
        return dxp[:, :, padding:-padding, padding:-padding]
    return dxp


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x`` with ``kernel`` (no bias term).

    Output spatial size is ``(H + 2*padding - k) // stride + 1`` per axis.
    """
    _check_conv_args(x, kernel, stride, padding)
    if not (_all_finite(x.data) and _all_finite(kernel.data)):
        raise ValueError("conv2d requires finite inputs")
    single = x.ndim == 3
    xb = x.data[None] if single else x.data
    b, c, h, w = xb.shape
    cout, _, k, _ = kernel.shape
    oh = conv_output_size(h, k, stride, padding)
    ow = conv_output_size(w, k, stride, padding)
    if oh < 1 or ow < 1:
        raise ValueError(f"conv2d output would be empty for input {h}x{w}, "
                         f"k={k}, stride={stride}, padding={padding}")

    cols = _im2col(_pad_zeros(xb, padding), k, stride, oh, ow)
    kmat = kernel.data.reshape(cout, -1)
    out = np.matmul(kmat, cols).reshape(b, cout, oh, ow)
    if single:
        out = out[0]

    def backward(g, x=x, kernel=kernel, cols=cols, kmat=kmat):
        gb = g[None] if single else g
        gflat = np.ascontiguousarray(gb.reshape(b, cout, oh * ow))
        if kernel.requires_grad:
            dk = np.matmul(gflat, cols.transpose(0, 2, 1)).sum(axis=0)
            _deposit(kernel, dk.reshape(kernel.shape))
        if x.requires_grad:
            dcols = np.matmul(kmat.T, gflat)
            dx = _col2im(dcols, (b, c, h, w), k, stride, padding, oh, ow)
            _deposit(x, dx[0] if single else dx)

    return Tensor._from_op(out, (x, kernel), backward)


def cdc2d(x: Tensor, kernel: Tensor, theta: float = 0.7,
          stride: int = 1, padding: int = 0) -> Tensor:
    """Central-difference convolution.

    y(p0) = sum_pn w(pn) x(p0+pn) - theta * x(p0) * sum_pn w(pn),
    realised as the vanilla output minus a theta-scaled 1x1 convolution of the
    window-center samples with the spatially summed kernel. theta = 0 returns
    the vanilla convolution unchanged (bit-identical).
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must be in [0, 1], got {theta}")
    out = conv2d(x, kernel, stride=stride, padding=padding)
    if theta == 0.0:
        return out
    k = kernel.shape[2]
    c0 = (k - 1) // 2
    oh = out.shape[-2]
    ow = out.shape[-1]
    centers = x.pad2d(padding)[..., c0:c0 + stride * (oh - 1) + 1:stride,
                               c0:c0 + stride * (ow - 1) + 1:stride]
    ksum = kernel.sum(axis=(2, 3)).reshape(kernel.shape[0], kernel.shape[1], 1, 1)
    return out - theta * conv2d(centers, ksum)


def max_pool2d(x: Tensor, window: int = 2) -> Tensor:
    """Non-overlapping max pooling; spatial dims must divide by ``window``."""
    single = x.ndim == 3
    xb = x.data[None] if single else x.data
    b, c, h, w = xb.shape
    if h % window or w % window:
        raise ValueError(f"spatial dims {h}x{w} not divisible by window {window}")
    oh, ow = h // window, w // window
    patches = xb.reshape(b, c, oh, window, ow, window).transpose(0, 1, 2, 4, 3, 5)
    patches = patches.reshape(b, c, oh, ow, window * window)
    idx = patches.argmax(axis=-1)
    out = np.take_along_axis(patches, idx[..., None], axis=-1)[..., 0]
    if single:
        out = out[0]

    def backward(g, x=x):
        gb = g[None] if single else g
        dpatch = np.zeros((b, c, oh, ow, window * window), dtype=gb.dtype)
        np.put_along_axis(dpatch, idx[..., None], gb[..., None], axis=-1)
        dx = dpatch.reshape(b, c, oh, ow, window, window).transpose(0, 1, 2, 4, 3, 5)
        dx = dx.reshape(b, c, h, w)
        _deposit(x, dx[0] if single else dx)

    return Tensor._from_op(out, (x,), backward)


def resize2d(x: Tensor, row_weights: np.ndarray, col_weights: np.ndarray) -> Tensor:
    """Linear resampling of the last two axes: out = R @ x @ C^T.

    ``row_weights`` is [H_out, H_in], ``col_weights`` is [W_out, W_in]; each row
    holds the interpolation weights of one output coordinate. Exact transpose
    is used for the gradient, so any linear resampler built this way passes
    gradient checks to machine precision.
    """
    r = row_weights.astype(x.dtype, copy=False)
    c = col_weights.astype(x.dtype, copy=False)
    lead = x.shape[:-2]
    h, w = x.shape[-2:]
    flat = x.data.reshape(-1, h, w)
    tmp = np.einsum("oh,nhw->now", r, flat, optimize=True)
    out = np.einsum("pw,now->nop", c, tmp, optimize=True)
    out = out.reshape(*lead, r.shape[0], c.shape[0])

    def backward(g, x=x):
        gf = g.reshape(-1, r.shape[0], c.shape[0])
        t = np.einsum("oh,now->nhw", r, np.einsum("pw,nop->now", c, gf, optimize=True),
                      optimize=True)
        _deposit(x, t.reshape(x.shape))

    return Tensor._from_op(out, (x,), backward)


def bilinear_weights(n_in: int, n_out: int, scale: float, offset: float) -> np.ndarray:
    """Row-interpolation matrix for sampling at src = (i + 0.5)*scale + offset - 0.5.

    Source coordinates are clamped to the valid range, so constants are
    preserved exactly and border samples clamp rather than read zeros.
    """
    w = np.zeros((n_out, n_in), dtype=np.float64)
    for i in range(n_out):
        s = (i + 0.5) * scale + offset - 0.5
        s = min(max(s, 0.0), float(n_in - 1))
        lo = int(np.floor(s))
        hi = min(lo + 1, n_in - 1)
        frac = s - lo
        w[i, lo] += 1.0 - frac
        w[i, hi] += frac
    return w


def upsample_weights(n_in: int, factor: int) -> np.ndarray:
    """Nearest-neighbour integer upsampling matrix [n_in*factor, n_in]."""
    w = np.zeros((n_in * factor, n_in), dtype=np.float64)
    w[np.arange(n_in * factor), np.arange(n_in * factor) // factor] = 1.0
    return w


def upsample_nearest2d(x: Tensor, factor: int = 2) -> Tensor:
    h, w = x.shape[-2:]
    return resize2d(x, upsample_weights(h, factor), upsample_weights(w, factor))


def resize_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    h, w = x.shape[-2:]
    return resize2d(x, bilinear_weights(h, out_h, h / out_h, 0.0),
                    bilinear_weights(w, out_w, w / out_w, 0.0))
