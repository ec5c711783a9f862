"""Independent reference implementations used only by tests.

Each oracle deliberately avoids the code path it validates: convolution by
explicit loops, gradients by central finite differences, SSIM by a python
window loop, sub-pixel shuffles by the index formula, parameter counts by
direct enumeration of the layer plan.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np


def fd_gradient(
    f: Callable[[Sequence[np.ndarray]], float],
    arrays: Sequence[np.ndarray],
    wrt: int,
    h: float = 1e-3,
) -> np.ndarray:
    """Central finite-difference gradient of a scalar function.

    Arrays must be float64; the function is re-evaluated 2*size times.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    target = arrays[wrt]
    grad = np.zeros_like(target)
    it = np.nditer(target, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = target[idx]
        target[idx] = orig + h
        fp = f(arrays)
        target[idx] = orig - h
        fm = f(arrays)
        target[idx] = orig
        grad[idx] = (fp - fm) / (2.0 * h)
        it.iternext()
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Max elementwise relative error with an absolute floor on the scale."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def conv2d_loops(x, w, b, stride=1, padding=0):
    """Quadruple-nested-loop cross-correlation (the conv reference oracle)."""
    n, cin, hh, ww = x.shape
    cout, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (hh + 2 * padding - kh) // stride + 1
    wo = (ww + 2 * padding - kw) // stride + 1
    out = np.zeros((n, cout, ho, wo), dtype=np.float64)
    for ni in range(n):
        for co in range(cout):
            for yo in range(ho):
                for xo in range(wo):
                    acc = 0.0
                    for ci in range(cin):
                        for i in range(kh):
                            for j in range(kw):
                                acc += float(xp[ni, ci, yo * stride + i, xo * stride + j]) * float(
                                    w[co, ci, i, j]
                                )
                    out[ni, co, yo, xo] = acc + (float(b[co]) if b is not None else 0.0)
    return out


def depth_to_space_indexed(x: np.ndarray) -> np.ndarray:
    """Index-formula sub-pixel shuffle: out[n,c,2y+dy,2x+dx] = in[n,4c+2dy+dx,y,x]."""
    n, c, h, w = x.shape
    co = c // 4
    out = np.zeros((n, co, 2 * h, 2 * w), dtype=x.dtype)
    for ni in range(n):
        for ci in range(co):
            for y in range(h):
                for xx in range(w):
                    for dy in range(2):
                        for dx in range(2):
                            out[ni, ci, 2 * y + dy, 2 * xx + dx] = x[
                                ni, ci * 4 + dy * 2 + dx, y, xx
                            ]
    return out


def psnr_formula(a: np.ndarray, b: np.ndarray) -> float:
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0:
        return 100.0
    return min(10.0 * math.log10(1.0 / mse), 100.0)


def ssim_window_loop(
    x: np.ndarray, y: np.ndarray, size: int = 11, sigma: float = 1.5
) -> float:
    """Per-window python-loop SSIM on single-channel float64 images."""
    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    kernel /= kernel.sum()
    c1 = 0.01**2
    c2 = 0.03**2
    h, w = x.shape
    scores = []
    for i in range(h - size + 1):
        for j in range(w - size + 1):
            wx = x[i : i + size, j : j + size].astype(np.float64)
            wy = y[i : i + size, j : j + size].astype(np.float64)
            mx = float((kernel * wx).sum())
            my = float((kernel * wy).sum())
            vx = float((kernel * wx * wx).sum()) - mx * mx
            vy = float((kernel * wy * wy).sum()) - my * my
            cov = float((kernel * wx * wy).sum()) - mx * my
            scores.append(
                ((2 * mx * my + c1) * (2 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2))
            )
    return float(np.mean(scores))


def unet_parameter_count(depth: int, base: int, cin: int = 4, cout: int = 12) -> int:
    """Enumerate the layer plan independently and sum parameter sizes."""
    total = 0

    def conv(ci, co, k):
        return co * ci * k * k + co

    prev = cin
    for i in range(depth):
        c = base * (2**i)
        total += conv(prev, c, 3) + conv(c, c, 3)
        prev = c
    cb = base * (2**depth)
    total += conv(prev, cb, 3) + conv(cb, cb, 3)
    for i in reversed(range(depth)):
        c = base * (2**i)
        total += conv(base * (2 ** (i + 1)), c, 3)  # up-projection
        total += conv(2 * c, c, 3) + conv(c, c, 3)
    total += conv(base, cout, 1)
    return total


def modulation_parameter_count(depth: int, base: int, ksize: int) -> int:
    """Identity-initialized modulation layers: one per internal conv."""
    total = 0
    for i in range(depth):
        c = base * (2**i)
        total += 2 * (c * c * ksize * ksize + c)
    cb = base * (2**depth)
    total += 2 * (cb * cb * ksize * ksize + cb)
    for i in reversed(range(depth)):
        c = base * (2**i)
        total += 3 * (c * c * ksize * ksize + c)
    return total


def bright_channel_stats(values: np.ndarray, bins: int = 32) -> float:
    """Fraction of [0,1] histogram bins occupied by the values."""
    hist, _ = np.histogram(values.ravel(), bins=bins, range=(0.0, 1.0))
    return float((hist > 0).sum()) / bins
