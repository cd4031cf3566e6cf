import io
import logging
from typing import Union

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from adaptsr.data.corpus import from_pil, to_pil
from adaptsr.data.models import DegradationConfig
from adaptsr.data.resize import bicubic_resize
from adaptsr.errors import DimensionError

logger = logging.getLogger(__name__)

RngLike = Union[int, np.random.Generator]


def as_rng(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(int(rng))


# =========================
# STAGES
# =========================
def gaussian_kernel1d(kernel_size: int, sigma: float) -> torch.Tensor:
    x = torch.arange(kernel_size, dtype=torch.float64) - (kernel_size - 1) / 2
    kernel = torch.exp(-(x ** 2) / (2 * sigma ** 2))
    return kernel / kernel.sum()


def gaussian_blur(img: torch.Tensor, sigma: float, kernel_size: int) -> torch.Tensor:
    """Isotropic separable blur of a C×H×W image; sigma 0 is the identity."""
    if sigma <= 0:
        return img
    c, h, w = img.shape
    kernel = gaussian_kernel1d(kernel_size, sigma).to(img.dtype)
    pad = kernel_size // 2
    mode = "reflect" if pad < h and pad < w else "replicate"

    x = F.pad(img.unsqueeze(0), (pad, pad, pad, pad), mode=mode)
    x = F.conv2d(x, kernel.view(1, 1, 1, -1).repeat(c, 1, 1, 1), groups=c)
    x = F.conv2d(x, kernel.view(1, 1, -1, 1).repeat(c, 1, 1, 1), groups=c)
    return x[0]


def add_gaussian_noise(img: torch.Tensor, sigma: float, rng: np.random.Generator) -> torch.Tensor:
    """Additive per-pixel, per-channel noise; sigma in 0–255 units."""
    if sigma <= 0:
        return img
    noise = rng.standard_normal(tuple(img.shape)) * (sigma / 255.0)
    return (img + torch.from_numpy(noise).to(img.dtype)).clamp(0.0, 1.0)


def jpeg_roundtrip(img: torch.Tensor, quality: int) -> torch.Tensor:
    """Encode and decode through the JPEG codec; quality 100 is the identity."""
    if quality >= 100:
        return img
    buffer = io.BytesIO()
    to_pil(img).save(buffer, format="JPEG", quality=int(quality))
    buffer.seek(0)
    with Image.open(buffer) as decoded:
        return from_pil(decoded).to(img.dtype)


def _corrupt(img: torch.Tensor, cfg: DegradationConfig, rng: np.random.Generator, resize: bool) -> torch.Tensor:
    sigma = rng.uniform(*cfg.blur_sigma)
    noise = rng.uniform(*cfg.noise_sigma)
    quality = int(rng.integers(cfg.jpeg_quality[0], cfg.jpeg_quality[1] + 1))

    img = gaussian_blur(img, sigma, cfg.blur_kernel_size)
    if resize:
        h, w = img.shape[-2:]
        img = bicubic_resize(img, size=(h // cfg.downscale, w // cfg.downscale)).clamp(0.0, 1.0)
    img = add_gaussian_noise(img, noise, rng)
    return jpeg_roundtrip(img, quality)


# =========================
# PIPELINE
# =========================
def degrade(hr: torch.Tensor, cfg: DegradationConfig, rng_state: RngLike) -> torch.Tensor:
    """
    blur → bicubic ↓downscale → gaussian noise → JPEG, then (second_order) the
    same stages with halved ranges at LR resolution. Output is in [0,1] and is
    fully determined by (cfg, rng_state).
    """
    if hr.dim() != 3:
        raise DimensionError(f"expected a C×H×W image, got {tuple(hr.shape)}")
    h, w = hr.shape[-2:]
    if h % cfg.downscale or w % cfg.downscale:
        raise DimensionError(f"{h}×{w} is not divisible by downscale {cfg.downscale}")

    rng = as_rng(rng_state)
    lr = _corrupt(hr, cfg, rng, resize=True)
    if cfg.second_order:
        lr = _corrupt(lr, cfg.second_pass(), rng, resize=False)
    return lr
