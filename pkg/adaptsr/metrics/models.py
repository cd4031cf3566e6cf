from dataclasses import dataclass

from adaptsr.errors import InvalidConfigError

# Stand-in for +inf PSNR (identical images) in CSV / JSON output
PSNR_CAP = 99.0


# =========================
# Metric Config
# =========================
@dataclass(frozen=True)
class MetricConfig:
    use_y_channel: bool = True
    crop_border: int = 0
    dynamic_range: float = 1.0         # L; 1.0 for [0,1] images
    ssim_window: int = 11
    ssim_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03

    def __post_init__(self):
        if self.crop_border < 0:
            raise InvalidConfigError(f"crop_border must be >= 0, got {self.crop_border}")
        if self.ssim_window < 1 or self.ssim_window % 2 == 0:
            raise InvalidConfigError(f"ssim_window must be odd and positive, got {self.ssim_window}")
        if min(self.dynamic_range, self.ssim_sigma, self.k1, self.k2) <= 0:
            raise InvalidConfigError("dynamic_range, ssim_sigma, k1 and k2 must be positive")

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2
