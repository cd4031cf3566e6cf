from adaptsr.errors import InvalidConfigError
from adaptsr.training.models import TrainConfig


def milestone_iters(cfg: TrainConfig):
    """Milestone fractions turned into iteration indices."""
    return [(int(round(fraction * cfg.iters)), multiplier) for fraction, multiplier in cfg.milestones]


def lr_at(t: int, cfg: TrainConfig) -> float:
    """
    lr0 times every multiplier whose milestone iteration is ≤ t
    (a right-continuous step function).
    """
    if not 0 <= t < cfg.iters:
        raise InvalidConfigError(f"iteration {t} outside [0, {cfg.iters})")
    lr = cfg.lr0
    for start, multiplier in milestone_iters(cfg):
        if start <= t:
            lr *= multiplier
    return lr
