from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from adaptsr.errors import InvalidConfigError

Milestone = Tuple[float, float]        # (fraction of iters, multiplier)


class TrainMode(str, Enum):
    LORA = "lora"                      # adapters only
    FULL_FT = "full_ft"                # every weight, fine-tuning baseline
    PRETRAIN = "pretrain"              # every weight, bicubic source domain


# lora: ×0.75 at 50/75/90%; full weights: ×0.5 at 50/80/90/95%
DEFAULT_MILESTONES: Dict[TrainMode, Tuple[Milestone, ...]] = {
    TrainMode.LORA: ((0.5, 0.75), (0.75, 0.75), (0.9, 0.75)),
    TrainMode.FULL_FT: ((0.5, 0.5), (0.8, 0.5), (0.9, 0.5), (0.95, 0.5)),
    TrainMode.PRETRAIN: ((0.5, 0.5), (0.8, 0.5), (0.9, 0.5), (0.95, 0.5)),
}


# =========================
# Train Config
# =========================
@dataclass(frozen=True)
class TrainConfig:
    mode: TrainMode = TrainMode.LORA
    iters: int = 2000
    batch: int = 8
    lr0: float = 1e-3
    milestones: Optional[Tuple[Milestone, ...]] = None     # None → preset for the mode
    betas: Tuple[float, float] = (0.9, 0.999)
    seed: int = 0
    eval_every: int = 100
    workers: int = 1
    prefetch: int = 4

    def __post_init__(self):
        object.__setattr__(self, "mode", TrainMode(self.mode))
        if self.milestones is None:
            object.__setattr__(self, "milestones", DEFAULT_MILESTONES[self.mode])
        else:
            object.__setattr__(self, "milestones", tuple((float(f), float(m)) for f, m in self.milestones))

        if self.iters < 0 or self.batch < 1:
            raise InvalidConfigError("iters must be >= 0 and batch >= 1")
        if not self.lr0 > 0:
            raise InvalidConfigError(f"lr0 must be positive, got {self.lr0}")
        if self.eval_every < 1 or self.workers < 1 or self.prefetch < 1:
            raise InvalidConfigError("eval_every, workers and prefetch must be >= 1")

        fractions = [f for f, _ in self.milestones]
        if fractions != sorted(fractions):
            raise InvalidConfigError(f"milestones must be sorted, got {fractions}")
        for fraction, multiplier in self.milestones:
            if not 0.0 <= fraction <= 1.0:
                raise InvalidConfigError(f"milestone fraction {fraction} outside [0, 1]")
            if not 0.0 < multiplier <= 1.0:
                raise InvalidConfigError(f"milestone multiplier {multiplier} outside (0, 1]")


# =========================
# Run History
# =========================
@dataclass
class RunHistory:
    loss_curve: List[Tuple[int, float]] = field(default_factory=list)
    eval_curve: List[Tuple[int, float, float]] = field(default_factory=list)   # (iter, PSNR dB, SSIM)
    lr_curve: List[Tuple[int, float]] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def final_eval(self) -> Optional[Tuple[int, float, float]]:
        return self.eval_curve[-1] if self.eval_curve else None

    def summary(self) -> Dict[str, Any]:
        final = self.final_eval
        return {
            "iters": self.loss_curve[-1][0] + 1 if self.loss_curve else 0,
            "initial_loss": self.loss_curve[0][1] if self.loss_curve else None,
            "final_loss": self.loss_curve[-1][1] if self.loss_curve else None,
            "psnr": final[1] if final else None,
            "ssim": final[2] if final else None,
            "wall_time": self.wall_time,
        }
