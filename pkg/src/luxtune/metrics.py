"""Image quality metrics: PSNR and Gaussian-windowed SSIM.

SSIM follows the classic recipe: 11x11 Gaussian window with sigma 1.5,
stability constants K1=0.01 and K2=0.03 at dynamic range 1.0, computed on
the luminance channel and averaged over all fully-valid windows.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError

PSNR_CAP_DB = 100.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"metric inputs differ in shape: {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE) in dB, capped at 100 for (near-)identical pairs."""
    _check_pair(a, b)
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(peak * peak / mse), PSNR_CAP_DB)


def luminance(img: np.ndarray) -> np.ndarray:
    """(3, H, W) sRGB -> (H, W) luminance with fixed Rec.601 weights."""
    if img.ndim != 3 or img.shape[0] != 3:
        raise ShapeError(f"expected (3, H, W) image, got {img.shape}")
    r, g, b = LUMA_WEIGHTS
    return r * img[0] + g * img[1] + b * img[2]


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 2-D Gaussian kernel."""
    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _windowed_mean(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Weighted mean over every fully-contained window (valid mode)."""
    wins = sliding_window_view(img, kernel.shape)
    return np.einsum("ijkl,kl->ij", wins, kernel, optimize=True)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local SSIM over luminance; inputs are (3, H, W) or (H, W) in [0, 1]."""
    _check_pair(a, b)
    x = luminance(a) if a.ndim == 3 else np.asarray(a, dtype=np.float64)
    y = luminance(b) if b.ndim == 3 else np.asarray(b, dtype=np.float64)
    x = x.astype(np.float64)
    y = y.astype(np.float64)
    if min(x.shape) < SSIM_WINDOW:
        raise ShapeError(
            f"image {x.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )

    kernel = gaussian_window()
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2

    mu_x = _windowed_mean(x, kernel)
    mu_y = _windowed_mean(y, kernel)
    xx = _windowed_mean(x * x, kernel) - mu_x * mu_x
    yy = _windowed_mean(y * y, kernel) - mu_y * mu_y
    xy = _windowed_mean(x * y, kernel) - mu_x * mu_y

    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    return float(np.mean(num / den))
