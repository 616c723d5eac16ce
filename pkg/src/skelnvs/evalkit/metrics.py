"""Pixel metrics: L1, PSNR, and single-scale SSIM.

All take images as float arrays in [0, 1], either (H, W) grayscale or
(H, W, 3) RGB, and are symmetric in their two arguments.
"""

from __future__ import annotations

import numpy as np

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def metric_l1(a, b) -> float:
    a, b = _check_pair(a, b)
    return float(np.mean(np.abs(a - b)))


def metric_psnr(a, b, cap: float = 99.0) -> float:
    """10*log10(1/MSE) for unit dynamic range, capped at `cap` dB."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float(cap)
    return float(min(cap, 10.0 * np.log10(1.0 / mse)))


def _to_gray(img: np.ndarray) -> np.ndarray:
    if img.ndim == 3:
        if img.shape[2] != 3:
            raise ValueError(f"expected 3 channels, got {img.shape[2]}")
        return img @ LUMA_WEIGHTS
    return img


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _windowed(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    """Weighted local mean of every valid window position."""
    k = window.shape[0]
    view = np.lib.stride_tricks.sliding_window_view(img, (k, k))
    return np.einsum("ijkl,kl->ij", view, window)


def metric_ssim(a, b) -> float:
    """Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5), luma only,
    dynamic range 1."""
    a, b = _check_pair(a, b)
    x = _to_gray(a)
    y = _to_gray(b)
    if x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise ValueError(f"image {x.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")

    w = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    mu_x = _windowed(x, w)
    mu_y = _windowed(y, w)
    xx = _windowed(x * x, w) - mu_x**2
    yy = _windowed(y * y, w) - mu_y**2
    xy = _windowed(x * y, w) - mu_x * mu_y

    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (xx + yy + c2)
    return float(np.mean(num / den))
