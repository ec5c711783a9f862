"""Differentiable operators for the enhancement network.

Convolution has two forward paths that must agree: ``conv2d_direct`` is the
quadruple-loop reference, and the production path lowers to an im2col
matrix product so the heavy lifting runs in BLAS. Everything allocates
fresh outputs; inputs are never written to.
"""

from __future__ import annotations

from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import as_strided

from ..errors import ShapeError
from .tensor import Tensor, record

__all__ = [
    "conv2d",
    "conv2d_direct",
    "conv2d_backward",
    "leaky_relu",
    "max_pool2",
    "upsample2",
    "depth_to_space",
    "space_to_depth",
    "concat",
    "l1_loss",
]


def _check_conv_shapes(x: np.ndarray, w: np.ndarray, b: Optional[np.ndarray]) -> None:
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be NCHW, got {x.ndim} dims")
    if w.ndim != 4:
        raise ShapeError(f"conv2d kernel must be (Cout, Cin, kh, kw), got {w.ndim} dims")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"conv2d channel mismatch: input has Cin={x.shape[1]}, kernel expects Cin={w.shape[1]}"
        )
    if b is not None and b.shape != (w.shape[0],):
        raise ShapeError(
            f"conv2d bias shape {b.shape} does not match Cout={w.shape[0]}"
        )


def _out_hw(h: int, w: int, kh: int, kw: int, stride: int, padding: int) -> Tuple[int, int]:
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError(
            f"conv2d output would be empty: input {h}x{w}, kernel {kh}x{kw}, "
            f"stride {stride}, padding {padding}"
        )
    return ho, wo


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(N, C, Hp, Wp) -> (N, C*kh*kw, Ho*Wo) patch matrix (copies)."""
    n, c, hp, wp = xp.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    sn, sc, sh, sw = xp.strides
    windows = as_strided(
        xp,
        shape=(n, c, kh, kw, ho, wo),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride),
    )
    return windows.reshape(n, c * kh * kw, ho * wo)


def _col2im(
    cols: np.ndarray,
    x_shape: Tuple[int, int, int, int],
    kh: int,
    kw: int,
    stride: int,
    padding: int,
) -> np.ndarray:
    """Scatter-add inverse of :func:`_im2col` (gradient routing)."""
    n, c, h, w = x_shape
    hp, wp = h + 2 * padding, w + 2 * padding
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    cols6 = cols.reshape(n, c, kh, kw, ho, wo)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols6[
                :, :, i, j
            ]
    if padding:
        out = out[:, :, padding : padding + h, padding : padding + w]
    return np.ascontiguousarray(out)


def conv2d_forward(
    x: np.ndarray,
    w: np.ndarray,
    b: Optional[np.ndarray],
    stride: int = 1,
    padding: int = 0,
) -> np.ndarray:
    """Blocked (im2col) cross-correlation, the production forward path."""
    _check_conv_shapes(x, w, b)
    n, _, h, wd = x.shape
    cout, cin, kh, kw = w.shape
    ho, wo = _out_hw(h, wd, kh, kw, stride, padding)
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    cols = _im2col(xp, kh, kw, stride)
    wmat = w.reshape(cout, cin * kh * kw)
    out = np.matmul(wmat, cols)  # (N, Cout, Ho*Wo) via broadcasting
    out = out.reshape(n, cout, ho, wo)
    if b is not None:
        out = out + b.reshape(1, cout, 1, 1)
    return np.ascontiguousarray(out)


def conv2d_direct(
    x: np.ndarray,
    w: np.ndarray,
    b: Optional[np.ndarray],
    stride: int = 1,
    padding: int = 0,
) -> np.ndarray:
    """Loop-nest reference convolution. Slow; exists to validate the blocked path."""
    _check_conv_shapes(x, w, b)
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    ho, wo = _out_hw(h, wd, kh, kw, stride, padding)
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    out = np.zeros((n, cout, ho, wo), dtype=x.dtype)
    for ni in range(n):
        for co in range(cout):
            for yo in range(ho):
                for xo in range(wo):
                    acc = 0.0
                    for ci in range(cin):
                        for i in range(kh):
                            for j in range(kw):
                                acc += (
                                    xp[ni, ci, yo * stride + i, xo * stride + j]
                                    * w[co, ci, i, j]
                                )
                    out[ni, co, yo, xo] = acc + (b[co] if b is not None else 0.0)
    return out


def _conv_grad_input(
    upstream: np.ndarray, x_shape, w: np.ndarray, stride: int, padding: int
) -> np.ndarray:
    n = upstream.shape[0]
    cout, cin, kh, kw = w.shape
    up = upstream.reshape(n, cout, -1)
    wmat = w.reshape(cout, cin * kh * kw)
    grad_cols = np.matmul(wmat.T, up)  # (N, Cin*kh*kw, L)
    return _col2im(grad_cols, x_shape, kh, kw, stride, padding)


def _conv_grad_kernel(
    upstream: np.ndarray, saved_input: np.ndarray, w_shape, stride: int, padding: int
) -> np.ndarray:
    n = saved_input.shape[0]
    cout, cin, kh, kw = w_shape
    xp = (
        np.pad(saved_input, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        if padding
        else saved_input
    )
    cols = _im2col(xp, kh, kw, stride)  # (N, Cin*kh*kw, L)
    up = upstream.reshape(n, cout, -1)
    gw = np.matmul(up, cols.transpose(0, 2, 1)).sum(axis=0)
    return gw.reshape(w_shape)


def conv2d_backward(
    upstream: np.ndarray,
    saved_input: np.ndarray,
    w: np.ndarray,
    stride: int = 1,
    padding: int = 0,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of the conv output sum w.r.t. (input, kernel, bias)."""
    if saved_input is None:
        raise ShapeError("conv2d backward has no saved input; forward ran in no-grad mode")
    grad_x = _conv_grad_input(upstream, saved_input.shape, w, stride, padding)
    grad_w = _conv_grad_kernel(upstream, saved_input, w.shape, stride, padding)
    grad_b = upstream.sum(axis=(0, 2, 3))
    return grad_x, grad_w, grad_b


def conv2d(
    x: Tensor,
    w: Tensor,
    b: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """Differentiable 2-D cross-correlation over NCHW tensors."""
    bdata = b.data if b is not None else None
    out = Tensor(conv2d_forward(x.data, w.data, bdata, stride, padding))
    saved = x.data
    x_shape = x.data.shape

    def backward(upstream: np.ndarray) -> None:
        if x.requires_grad or x._backward is not None:
            x.accumulate_grad(_conv_grad_input(upstream, x_shape, w.data, stride, padding))
        if w.requires_grad:
            w.accumulate_grad(_conv_grad_kernel(upstream, saved, w.data.shape, stride, padding))
        if b is not None and b.requires_grad:
            b.accumulate_grad(upstream.sum(axis=(0, 2, 3)))

    parents = (x, w) if b is None else (x, w, b)
    return record(out, parents, backward)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    """x for x >= 0, slope*x otherwise; subgradient at 0 is slope."""
    if not 0.0 <= slope < 1.0:
        raise ShapeError(f"leaky_relu slope must be in [0, 1), got {slope}")
    positive = x.data > 0
    out = Tensor(np.where(positive, x.data, x.data * slope))

    def backward(upstream: np.ndarray) -> None:
        x.accumulate_grad(np.where(positive, upstream, upstream * slope))

    return record(out, (x,), backward)


def max_pool2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; backward routes to the argmax element."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"max_pool2 needs even spatial dims, got {h}x{w}")
    windows = (
        x.data.reshape(n, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h // 2, w // 2, 4)
    )
    idx = windows.argmax(axis=-1)
    out = Tensor(np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0])

    def backward(upstream: np.ndarray) -> None:
        gwin = np.zeros_like(windows)
        np.put_along_axis(gwin, idx[..., None], upstream[..., None], axis=-1)
        gx = (
            gwin.reshape(n, c, h // 2, w // 2, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, h, w)
        )
        x.accumulate_grad(np.ascontiguousarray(gx))

    return record(out, (x,), backward)


def upsample2(x: Tensor) -> Tensor:
    """Nearest-neighbor x2 upsampling; backward sums each 2x2 block."""
    out = Tensor(np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3))

    def backward(upstream: np.ndarray) -> None:
        n, c, h2, w2 = upstream.shape
        gx = upstream.reshape(n, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5))
        x.accumulate_grad(gx)

    return record(out, (x,), backward)


def _d2s(data: np.ndarray) -> np.ndarray:
    n, c, h, w = data.shape
    co = c // 4
    v = data.reshape(n, co, 2, 2, h, w).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(v.reshape(n, co, 2 * h, 2 * w))


def _s2d(data: np.ndarray) -> np.ndarray:
    n, c, h2, w2 = data.shape
    v = data.reshape(n, c, h2 // 2, 2, w2 // 2, 2).transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(v.reshape(n, c * 4, h2 // 2, w2 // 2))


def depth_to_space(x: Tensor) -> Tensor:
    """Sub-pixel rearrangement: (N, 4c, H, W) -> (N, c, 2H, 2W).

    Element mapping is out[n, c, 2y+dy, 2x+dx] = in[n, 4c + 2dy + dx, y, x];
    the op is a bijection and backward is the exact inverse shuffle.
    """
    n, c, h, w = x.shape
    if c % 4:
        raise ShapeError(f"depth_to_space needs channels divisible by 4, got {c}")
    out = Tensor(_d2s(x.data))

    def backward(upstream: np.ndarray) -> None:
        x.accumulate_grad(_s2d(upstream))

    return record(out, (x,), backward)


def space_to_depth(x: Tensor) -> Tensor:
    """Inverse of :func:`depth_to_space`."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"space_to_depth needs even spatial dims, got {h}x{w}")
    out = Tensor(_s2d(x.data))

    def backward(upstream: np.ndarray) -> None:
        x.accumulate_grad(_d2s(upstream))

    return record(out, (x,), backward)


def concat(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate along the channel axis (NCHW)."""
    if not tensors:
        raise ShapeError("concat of an empty sequence")
    spatial = {(t.shape[0],) + t.shape[2:] for t in tensors}
    if len(spatial) != 1:
        raise ShapeError(f"concat inputs disagree outside the channel axis: {sorted(spatial)}")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=1))
    sizes = [t.shape[1] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(upstream: np.ndarray) -> None:
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad or t._backward is not None:
                t.accumulate_grad(np.ascontiguousarray(upstream[:, lo:hi]))

    return record(out, tuple(tensors), backward)


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute difference; gradient is sign(pred - target) / numel."""
    if pred.shape != target.shape:
        raise ShapeError(f"l1_loss shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    out = Tensor(np.abs(diff).mean(dtype=pred.dtype))

    def backward(upstream: np.ndarray) -> None:
        g = np.sign(diff) * (upstream / diff.size)
        if pred.requires_grad or pred._backward is not None:
            pred.accumulate_grad(g.astype(pred.dtype))
        if target.requires_grad or target._backward is not None:
            target.accumulate_grad(-g.astype(target.dtype))

    return record(out, (pred, target), backward)
