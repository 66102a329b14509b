"""
Métricas de calidad de imagen con rango dinámico 1.0
"""
import math

import numpy as np
from skimage.metrics import peak_signal_noise_ratio, structural_similarity

from .errors import ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def _pair(x, x_hat):
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ShapeError(f"Imágenes con formas distintas: {x.shape} y {x_hat.shape}")
    return x, x_hat


def psnr(x, x_hat) -> float:
    """10·log10(1/MSE); devuelve +inf si las imágenes son idénticas"""
    x, x_hat = _pair(x, x_hat)
    if np.array_equal(x, x_hat):
        return math.inf
    return float(peak_signal_noise_ratio(x, x_hat, data_range=1.0))


def ssim(x, x_hat) -> float:
    """SSIM medio con ventana gaussiana 11×11 (σ=1.5), por canal y promediado"""
    x, x_hat = _pair(x, x_hat)
    if x.ndim not in (2, 3):
        raise ShapeError(f"ssim espera H×W o C×H×W, forma {x.shape}")
    height, width = x.shape[-2:]
    if min(height, width) < SSIM_WINDOW:
        raise ShapeError(f"ssim: imagen {height}×{width} menor que la ventana {SSIM_WINDOW}×{SSIM_WINDOW}")
    return float(structural_similarity(
        x, x_hat,
        data_range=1.0,
        gaussian_weights=True,
        sigma=SSIM_SIGMA,
        use_sample_covariance=False,
        channel_axis=0 if x.ndim == 3 else None,
    ))
