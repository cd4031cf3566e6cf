import math
from dataclasses import dataclass, replace
from enum import Enum

from adaptsr.errors import InvalidConfigError


def effective_scale(alpha: float, rank: int) -> float:
    """
    Scale s applied to the low-rank delta: W0 + s·B·A with s = alpha / rank.
    (1, 8) → 0.125, the default.
    """
    if rank <= 0:
        raise InvalidConfigError(f"rank must be positive, got {rank}")
    if not alpha > 0:
        raise InvalidConfigError(f"alpha must be positive, got {alpha}")
    scale = alpha / rank
    if not math.isfinite(scale):
        raise InvalidConfigError(f"scale alpha/rank is not finite ({alpha}/{rank})")
    return scale


# =========================
# LoRA Config
# =========================
@dataclass(frozen=True)
class LoraConfig:
    rank: int = 8               # r, inner dimension of B·A
    alpha: float = 1.0          # α, scale numerator
    init_std: float = 0.02      # std of A's normal init (B starts at zero)
    seed: int = 0

    def __post_init__(self):
        effective_scale(self.alpha, self.rank)
        if not self.init_std > 0:
            raise InvalidConfigError(f"init_std must be positive, got {self.init_std}")

    @property
    def scale(self) -> float:
        return effective_scale(self.alpha, self.rank)

    def with_seed(self, seed: int) -> "LoraConfig":
        return replace(self, seed=seed)


# =========================
# Merge State
# =========================
class MergeState(str, Enum):
    WRAPPED = "wrapped"
    MERGED = "merged"
