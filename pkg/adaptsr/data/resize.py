import math
from fractions import Fraction
from typing import Optional, Tuple, Union

import torch
import torch.nn as nn

from adaptsr.errors import DimensionError, InvalidConfigError

Scale = Union[float, Fraction]


def cubic_kernel(x: torch.Tensor, a: float = -0.5) -> torch.Tensor:
    """
    Keys cubic convolution kernel; a = −0.5 is Catmull-Rom.
    1 at 0, 0 at every other integer, support [−2, 2].
    """
    ax = x.abs()
    ax2 = ax * ax
    ax3 = ax * ax2

    near = (a + 2) * ax3 - (a + 3) * ax2 + 1
    far = a * ax3 - 5 * a * ax2 + 8 * a * ax - 4 * a

    out = torch.where(ax <= 1, near, torch.zeros_like(ax))
    return torch.where((ax > 1) & (ax < 2), far, out)


def _reflect(index: torch.Tensor, size: int) -> torch.Tensor:
    index = torch.where(index < 0, -index - 1, index)
    index = torch.where(index >= size, 2 * size - 1 - index, index)
    return index.clamp(0, size - 1)


def resize_weights(in_size: int, out_size: int, antialias: bool = True) -> torch.Tensor:
    """
    (out_size × in_size) matrix of 1-D bicubic weights. Sample centers follow
    the half-pixel convention; when downscaling with antialias the kernel is
    stretched by 1/scale. Each row sums to 1; borders are mirrored.
    """
    if in_size < 1 or out_size < 1:
        raise InvalidConfigError(f"resize sizes must be positive, got {in_size} → {out_size}")

    scale = out_size / in_size
    stretch = scale if antialias and scale < 1 else 1.0
    support = 2.0 / stretch

    centers = (torch.arange(out_size, dtype=torch.float64) + 0.5) / scale - 0.5
    taps = int(math.ceil(2 * support)) + 2
    first = torch.floor(centers - support)
    index = first[:, None] + torch.arange(taps, dtype=torch.float64)[None, :]

    weights = cubic_kernel((centers[:, None] - index) * stretch)
    weights = weights / weights.sum(dim=1, keepdim=True)

    matrix = torch.zeros(out_size, in_size, dtype=torch.float64)
    matrix.scatter_add_(1, _reflect(index.long(), in_size), weights)
    return matrix


def target_size(h: int, w: int, scale: Scale) -> Tuple[int, int]:
    out_h, out_w = int(round(h * scale)), int(round(w * scale))
    if out_h < 1 or out_w < 1:
        raise InvalidConfigError(f"scale {scale} maps {h}×{w} to a nonpositive size {out_h}×{out_w}")
    return out_h, out_w


def bicubic_resize(
    img: torch.Tensor,
    scale: Optional[Scale] = None,
    antialias: bool = True,
    size: Optional[Tuple[int, int]] = None,
) -> torch.Tensor:
    """
    Separable bicubic resize of a C×H×W or N×C×H×W image, by `scale` or to an
    explicit `size`. Not clamped.
    """
    if img.dim() not in (3, 4):
        raise DimensionError(f"expected C×H×W or N×C×H×W, got {tuple(img.shape)}")
    if (scale is None) == (size is None):
        raise InvalidConfigError("pass exactly one of scale or size")

    h, w = img.shape[-2:]
    if size is None:
        if not scale > 0:
            raise InvalidConfigError(f"scale must be positive, got {scale}")
        size = target_size(h, w, scale)
    out_h, out_w = size
    if out_h < 1 or out_w < 1:
        raise InvalidConfigError(f"target size must be positive, got {size}")

    rows = resize_weights(h, out_h, antialias)
    cols = resize_weights(w, out_w, antialias)
    out = torch.einsum("oh,...hw,pw->...op", rows, img.to(torch.float64), cols)
    return out.to(img.dtype)


class BicubicUpsampler(nn.Module):
    """Parameter-free baseline: plain bicubic upscaling of the LR input."""

    backbone_id = "bicubic"

    def __init__(self, upscale: int):
        super().__init__()
        self.upscale = upscale

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2:]
        return bicubic_resize(x, size=(h * self.upscale, w * self.upscale))
