"""Image quality metrics."""
import numpy as np

PSNR_CAP = 99.0
SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(x_hat, x, data_range=1.0):
    """Peak signal-to-noise ratio in dB, capped at 99 for exact matches."""
    x_hat = np.asarray(x_hat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x_hat.shape != x.shape:
        raise ValueError(f"shape mismatch {x_hat.shape} vs {x.shape}")
    mse = np.mean((x_hat - x) ** 2)
    if mse == 0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(data_range**2 / mse)))


def _filter_valid(img, g1):
    # separable 'valid' correlation with the 1-D kernel g1 along both axes
    n = len(g1)
    rows = np.lib.stride_tricks.sliding_window_view(img, n, axis=-1) @ g1
    return np.lib.stride_tricks.sliding_window_view(rows, n, axis=-2) @ g1


def ssim(x_hat, x, data_range=1.0):
    """Mean SSIM over all fully contained 11x11 Gaussian (sigma 1.5) windows."""
    x_hat = np.asarray(x_hat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x_hat.shape != x.shape:
        raise ValueError(f"shape mismatch {x_hat.shape} vs {x.shape}")
    if x.ndim != 2:
        raise ValueError("ssim expects 2-D images")
    if min(x.shape) < SSIM_WIN:
        raise ValueError(f"image {x.shape} is smaller than the {SSIM_WIN}x{SSIM_WIN} window")
    ax = np.arange(SSIM_WIN) - (SSIM_WIN - 1) / 2
    g1 = np.exp(-(ax**2) / (2 * SSIM_SIGMA**2))
    g1 /= g1.sum()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a = _filter_valid(x_hat, g1)
    mu_b = _filter_valid(x, g1)
    var_a = _filter_valid(x_hat * x_hat, g1) - mu_a**2
    var_b = _filter_valid(x * x, g1) - mu_b**2
    cov = _filter_valid(x_hat * x, g1) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
