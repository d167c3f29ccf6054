"""Image-quality and matting metrics.

All computations run in float64.  Signed [-1, +1] images use max_val=2.0 for
PSNR; SSIM and the texture statistic operate on [0, 1] grayscale obtained via
`luma01`.  Alpha metrics take coverage maps in [0, 1].
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "psnr",
    "ssim",
    "soft_iou",
    "matting_errors",
    "texture_logvar_laplacian",
    "luma01",
    "PSNR_CAP_DB",
]

PSNR_CAP_DB = 99.0
_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5


def luma01(rgb_signed: np.ndarray) -> np.ndarray:
    """Map signed [-1,1] RGB (H, W, 3) to [0,1] grayscale."""
    rgb = (np.asarray(rgb_signed, np.float64) + 1.0) / 2.0
    if rgb.ndim != 3 or rgb.shape[2] < 3:
        raise ValueError(f"expected (H, W, >=3) array, got {rgb.shape}")
    return rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114


def psnr(a: np.ndarray, b: np.ndarray, max_val: float = 2.0) -> float:
    """10*log10(max_val^2 / MSE), capped at 99 dB for (near-)identical inputs."""
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(max_val * max_val / mse), PSNR_CAP_DB)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a: np.ndarray, b: np.ndarray, value_range: float = 1.0) -> float:
    """Mean windowed SSIM over all valid 11x11 positions (Gaussian sigma 1.5)."""
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise ValueError("ssim expects 2-D grayscale images")
    n = _SSIM_WINDOW
    if a.shape[0] < n or a.shape[1] < n:
        raise ValueError(f"image {a.shape} smaller than {n}x{n} window")
    w = _gaussian_window(n, _SSIM_SIGMA)
    c1 = (0.01 * value_range) ** 2
    c2 = (0.03 * value_range) ** 2

    wa = np.lib.stride_tricks.sliding_window_view(a, (n, n))
    wb = np.lib.stride_tricks.sliding_window_view(b, (n, n))
    mu_a = np.einsum("ijkl,kl->ij", wa, w)
    mu_b = np.einsum("ijkl,kl->ij", wb, w)
    e_aa = np.einsum("ijkl,kl->ij", wa * wa, w)
    e_bb = np.einsum("ijkl,kl->ij", wb * wb, w)
    e_ab = np.einsum("ijkl,kl->ij", wa * wb, w)
    var_a = e_aa - mu_a * mu_a
    var_b = e_bb - mu_b * mu_b
    cov = e_ab - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def soft_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Sum of element minima over sum of maxima; 1.0 when both maps are empty."""
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    denom = float(np.maximum(a, b).sum())
    if denom == 0.0:
        return 1.0
    return float(np.minimum(a, b).sum()) / denom


def matting_errors(a_hat: np.ndarray, a: np.ndarray) -> dict:
    """SAD (kilo-scaled sum), MAD, and MSE between two coverage maps."""
    a_hat = np.asarray(a_hat, np.float64)
    a = np.asarray(a, np.float64)
    if a_hat.shape != a.shape:
        raise ValueError(f"shape mismatch {a_hat.shape} vs {a.shape}")
    diff = np.abs(a_hat - a)
    return {
        "sad": float(diff.sum()) / 1000.0,
        "mad": float(diff.mean()),
        "mse": float(np.mean(diff * diff)),
    }


def texture_logvar_laplacian(img: np.ndarray) -> float:
    """ln(var + 1e-12) of the valid-region 3x3 Laplacian response."""
    x = np.asarray(img, np.float64)
    if x.ndim != 2 or x.shape[0] < 3 or x.shape[1] < 3:
        raise ValueError(f"need a 2-D image of at least 3x3, got {x.shape}")
    lap = (x[:-2, 1:-1] + x[2:, 1:-1] + x[1:-1, :-2] + x[1:-1, 2:]
           - 4.0 * x[1:-1, 1:-1])
    return float(np.log(lap.var() + 1e-12))
