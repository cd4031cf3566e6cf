from dataclasses import dataclass, replace
from typing import Optional, Tuple

import torch

from adaptsr.errors import InvalidConfigError

Range = Tuple[float, float]


def _ordered(name: str, bounds: Range, low: float, high: Optional[float] = None) -> None:
    lo, hi = bounds
    if lo > hi:
        raise InvalidConfigError(f"{name} range {list(bounds)} is not ordered")
    if lo < low or (high is not None and hi > high):
        raise InvalidConfigError(f"{name} range {list(bounds)} outside [{low}, {high}]")


# =========================
# Degradation Config
# blur → bicubic ↓factor → gaussian noise → JPEG, optionally a lighter second pass
# =========================
@dataclass(frozen=True)
class DegradationConfig:
    blur_kernel_size: int = 7
    blur_sigma: Range = (0.2, 2.0)             # pixels; 0 skips the blur
    downscale: int = 4
    noise_sigma: Range = (1.0, 10.0)           # 0–255 units; 0 skips the noise
    jpeg_quality: Tuple[int, int] = (60, 95)   # 100 skips the JPEG round trip
    second_order: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.blur_kernel_size < 1 or self.blur_kernel_size % 2 == 0:
            raise InvalidConfigError(f"blur_kernel_size must be odd and positive, got {self.blur_kernel_size}")
        if self.downscale < 2:
            raise InvalidConfigError(f"downscale must be >= 2, got {self.downscale}")
        _ordered("blur_sigma", self.blur_sigma, 0.0)
        _ordered("noise_sigma", self.noise_sigma, 0.0)
        _ordered("jpeg_quality", self.jpeg_quality, 10, 100)

    @classmethod
    def bicubic(cls, downscale: int = 4, seed: int = 0) -> "DegradationConfig":
        """Source domain: every stage but the bicubic resize is a no-op."""
        return cls(
            blur_sigma=(0.0, 0.0),
            downscale=downscale,
            noise_sigma=(0.0, 0.0),
            jpeg_quality=(100, 100),
            second_order=False,
            seed=seed,
        )

    @property
    def is_bicubic(self) -> bool:
        return (
            self.blur_sigma[1] == 0
            and self.noise_sigma[1] == 0
            and self.jpeg_quality[0] == 100
            and not self.second_order
        )

    def second_pass(self) -> "DegradationConfig":
        """
        Halved ranges for the second pass: half the blur, half the noise, and
        half the JPEG loss (quality moved halfway towards 100).
        """
        lo_q, hi_q = self.jpeg_quality
        return replace(
            self,
            blur_sigma=(self.blur_sigma[0] / 2, self.blur_sigma[1] / 2),
            noise_sigma=(self.noise_sigma[0] / 2, self.noise_sigma[1] / 2),
            jpeg_quality=(100 - (100 - lo_q) // 2, 100 - (100 - hi_q) // 2),
            second_order=False,
        )

    def unknown_profile(self) -> "DegradationConfig":
        """
        "Unknown degradation" mix-in: wider blur then bicubic, no noise or JPEG.
        """
        return replace(
            self,
            blur_sigma=(0.2, 3.0),
            noise_sigma=(0.0, 0.0),
            jpeg_quality=(100, 100),
            second_order=False,
        )


# =========================
# Patch Sampler
# =========================
@dataclass(frozen=True)
class PatchSampler:
    patch_size: int = 64               # HR side
    per_image: int = 4                 # validation patches taken from each held-out image
    seed: int = 0

    def __post_init__(self):
        if self.patch_size < 1 or self.per_image < 1:
            raise InvalidConfigError("patch_size and per_image must be positive")

    def check(self, cfg: DegradationConfig) -> None:
        if self.patch_size % cfg.downscale != 0:
            raise InvalidConfigError(
                f"patch_size {self.patch_size} is not divisible by downscale {cfg.downscale}"
            )


# =========================
# Corpus Config
# =========================
@dataclass(frozen=True)
class CorpusConfig:
    source: str = "synthetic"          # synthetic | folder
    n: int = 32
    size: int = 128
    seed: int = 0
    folder: Optional[str] = None

    def __post_init__(self):
        if self.source not in ("synthetic", "folder"):
            raise InvalidConfigError(f"corpus source must be synthetic or folder, got {self.source!r}")
        if self.source == "folder" and not self.folder:
            raise InvalidConfigError("corpus source 'folder' needs a folder path")
        if self.n < 1 or self.size < 1:
            raise InvalidConfigError("corpus n and size must be >= 1")


# =========================
# Patch Pair
# =========================
@dataclass
class PatchPair:
    lr: torch.Tensor                   # C × h × w
    hr: torch.Tensor                   # C × h·factor × w·factor
    seed: int                          # degradation rng seed; degrade(hr, cfg, seed) replays lr
    image_index: int = 0
    top: int = 0
    left: int = 0
    profile: str = "target"            # target | unknown | bicubic
