from typing import Optional, Tuple

import torch
import torch.nn.functional as F

from adaptsr.errors import DimensionError
from adaptsr.metrics.models import MetricConfig

# BT.601 studio-swing luma, inputs in [0,1]
Y_WEIGHTS = (65.481, 128.553, 24.966)
Y_OFFSET = 16.0


def rgb_to_y(img: torch.Tensor) -> torch.Tensor:
    """
    C×H×W or N×C×H×W RGB in [0,1] → single-channel Y in [16/255, 235/255].
    """
    if img.dim() not in (3, 4) or img.shape[-3] != 3:
        raise DimensionError(f"rgb_to_y needs a 3-channel image, got {tuple(img.shape)}")
    weights = torch.tensor(Y_WEIGHTS, dtype=img.dtype, device=img.device).view(3, 1, 1)
    y = (img * weights).sum(dim=-3, keepdim=True)
    return (y + Y_OFFSET) / 255.0


def _prepare(a: torch.Tensor, b: torch.Tensor, cfg: MetricConfig) -> Tuple[torch.Tensor, torch.Tensor]:
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    if a.dim() == 2:
        a, b = a[None, None], b[None, None]
    elif a.dim() == 3:
        a, b = a[None], b[None]
    elif a.dim() != 4:
        raise DimensionError(f"expected H×W, C×H×W or N×C×H×W, got {tuple(a.shape)}")

    a, b = a.to(torch.float64), b.to(torch.float64)
    border = cfg.crop_border
    if border:
        a = a[..., border:-border, border:-border]
        b = b[..., border:-border, border:-border]
    if a.shape[-1] == 0 or a.shape[-2] == 0:
        raise DimensionError(f"nothing left after cropping {border} border pixels")

    if cfg.use_y_channel and a.shape[1] == 3:
        a, b = rgb_to_y(a), rgb_to_y(b)
    return a, b


# =========================
# PSNR
# =========================
def psnr_per_image(a: torch.Tensor, b: torch.Tensor, cfg: Optional[MetricConfig] = None) -> torch.Tensor:
    cfg = cfg or MetricConfig()
    a, b = _prepare(a, b, cfg)
    mse = ((a - b) ** 2).mean(dim=(1, 2, 3))
    return 10.0 * torch.log10(cfg.dynamic_range ** 2 / mse)     # +inf where mse == 0


def psnr(a: torch.Tensor, b: torch.Tensor, cfg: Optional[MetricConfig] = None) -> float:
    """
    10·log10(L²/MSE) after optional Y conversion and border crop; batches give
    the mean of per-image values. Identical images give +inf.
    """
    return float(psnr_per_image(a, b, cfg).mean())


# =========================
# SSIM
# =========================
def gaussian_window(size: int, sigma: float) -> torch.Tensor:
    x = torch.arange(size, dtype=torch.float64) - (size - 1) / 2
    g = torch.exp(-(x ** 2) / (2 * sigma ** 2))
    g = g / g.sum()
    return torch.outer(g, g)


def ssim_per_image(a: torch.Tensor, b: torch.Tensor, cfg: Optional[MetricConfig] = None) -> torch.Tensor:
    cfg = cfg or MetricConfig()
    a, b = _prepare(a, b, cfg)
    h, w = a.shape[-2:]
    if h < cfg.ssim_window or w < cfg.ssim_window:
        raise DimensionError(f"{h}×{w} image is smaller than the {cfg.ssim_window}×{cfg.ssim_window} SSIM window")

    channels = a.shape[1]
    window = gaussian_window(cfg.ssim_window, cfg.ssim_sigma).to(a.device)
    window = window.expand(channels, 1, -1, -1).contiguous()

    def filt(x: torch.Tensor) -> torch.Tensor:
        return F.conv2d(x, window, groups=channels)

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a ** 2
    var_b = filt(b * b) - mu_b ** 2
    cov = filt(a * b) - mu_a * mu_b

    c1, c2 = cfg.c1, cfg.c2
    ssim_map = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    return ssim_map.mean(dim=(1, 2, 3))


def ssim(a: torch.Tensor, b: torch.Tensor, cfg: Optional[MetricConfig] = None) -> float:
    """
    Mean of the local SSIM map over an 11×11 Gaussian (σ 1.5) window, valid
    region only, C1 = (K1·L)², C2 = (K2·L)².
    """
    return float(ssim_per_image(a, b, cfg).mean())
