import hashlib
import logging
import time
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import torch
import torch.nn as nn
import torch.nn.functional as F

from adaptsr.backbones.checkpoint import save_backbone
from adaptsr.backbones.registry import count_base_params, model_forward
from adaptsr.data.models import PatchPair
from adaptsr.errors import AdapterStateError, InvalidConfigError
from adaptsr.injection.checkpoint import save_adapters
from adaptsr.injection.injector import adapter_parameters, count_params, is_injected
from adaptsr.metrics.models import MetricConfig
from adaptsr.metrics.quality import psnr_per_image, ssim_per_image
from adaptsr.training.history import write_history_csv, write_metrics_json
from adaptsr.training.models import RunHistory, TrainConfig, TrainMode
from adaptsr.training.schedule import lr_at

logger = logging.getLogger(__name__)

Batch = Tuple[torch.Tensor, torch.Tensor]
ValPair = Union[PatchPair, Tuple[torch.Tensor, torch.Tensor]]


# =========================
# WEIGHT HASHING
# =========================
def _digest(params: Iterator[Tuple[str, torch.Tensor]]) -> str:
    h = hashlib.sha256()
    for name, tensor in params:
        h.update(name.encode())
        h.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def base_weight_digest(model: nn.Module) -> str:
    """sha256 over every base parameter (adapter factors excluded)."""
    return _digest((n, p) for n, p in model.named_parameters() if not n.endswith(("lora_A", "lora_B")))


def adapter_digest(model: nn.Module) -> str:
    return _digest((n, p) for n, p in model.named_parameters() if n.endswith(("lora_A", "lora_B")))


# =========================
# OPTIMIZATION
# =========================
def trainable_parameters(model: nn.Module, mode: TrainMode) -> List[nn.Parameter]:
    """
    lora: only adapter A/B factors; full_ft / pretrain: every weight of a plain model.
    """
    mode = TrainMode(mode)
    if mode is TrainMode.LORA:
        if not is_injected(model):
            raise AdapterStateError("lora mode needs an injected model")
        return adapter_parameters(model)
    if is_injected(model):
        raise AdapterStateError(f"{mode.value} mode trains a plain model; merge the adapters first")
    params = list(model.parameters())
    for param in params:
        param.requires_grad = True
    return params


def build_optimizer(model: nn.Module, cfg: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(trainable_parameters(model, cfg.mode), lr=cfg.lr0, betas=cfg.betas)


def train_step(model: nn.Module, batch: Batch, optimizer: torch.optim.Optimizer, mode: TrainMode) -> float:
    """
    One L1 step: loss = mean |SR − HR|. Returns the loss; the optimizer state is
    updated in place.
    """
    mode = TrainMode(mode)
    if mode is TrainMode.LORA and not is_injected(model):
        raise AdapterStateError("lora mode needs an injected model")

    lr_batch, hr_batch = batch
    model.train()
    optimizer.zero_grad(set_to_none=True)
    loss = F.l1_loss(model(lr_batch), hr_batch)
    loss.backward()
    optimizer.step()
    return float(loss.detach())


# =========================
# EVALUATION
# =========================
def _unpack(pair: ValPair) -> Tuple[torch.Tensor, torch.Tensor]:
    return (pair.lr, pair.hr) if isinstance(pair, PatchPair) else pair


def metric_config_for(model: nn.Module) -> MetricConfig:
    """Default metrics for a model: crop as many border pixels as it upscales."""
    config = getattr(model, "config", None)
    upscale = getattr(config, "upscale", None) or getattr(model, "upscale", 0)
    return MetricConfig(crop_border=int(upscale))


def evaluate(model: nn.Module, val_pairs: Sequence[ValPair], cfg: Optional[MetricConfig] = None) -> Tuple[float, float]:
    """
    Mean of per-image PSNR (dB) and SSIM over the validation pairs; the SR
    output is clamped to [0,1] and `cfg.crop_border` pixels are cropped
    (by default the model's upscale factor).
    """
    if not val_pairs:
        raise InvalidConfigError("evaluate needs at least one validation pair")
    cfg = cfg or metric_config_for(model)

    lrs, hrs = zip(*(_unpack(p) for p in val_pairs))
    sr = model_forward(model, torch.stack(lrs))
    hr = torch.stack(hrs)
    return float(psnr_per_image(sr, hr, cfg).mean()), float(ssim_per_image(sr, hr, cfg).mean())


# =========================
# TRAINER
# =========================
class Trainer:
    """
    Runs `cfg.iters` steps over a batch stream with the milestone schedule,
    evaluating every `eval_every` completed iterations and once at the end.
    """

    def __init__(self, model: nn.Module, cfg: TrainConfig, metric_cfg: Optional[MetricConfig] = None):
        self.model = model
        self.cfg = cfg
        self.metric_cfg = metric_cfg or metric_config_for(model)
        self.optimizer = build_optimizer(model, cfg)

    def run(self, stream: Iterator[Batch], val_pairs: Sequence[ValPair]) -> RunHistory:
        cfg = self.cfg
        torch.manual_seed(cfg.seed)
        history = RunHistory()
        guard = base_weight_digest(self.model) if cfg.mode is TrainMode.LORA else None
        start = time.perf_counter()

        logger.info(f"[Trainer] {cfg.mode.value}: {cfg.iters} iters, batch {cfg.batch}, lr0 {cfg.lr0}")
        for t in range(cfg.iters):
            lr = lr_at(t, cfg)
            for group in self.optimizer.param_groups:
                group["lr"] = lr

            loss = train_step(self.model, next(stream), self.optimizer, cfg.mode)
            history.loss_curve.append((t, loss))
            history.lr_curve.append((t, lr))

            done = t + 1
            if done % cfg.eval_every == 0 or done == cfg.iters:
                p, s = evaluate(self.model, val_pairs, self.metric_cfg)
                history.eval_curve.append((done, p, s))
                logger.info(f"[Trainer] iter {done} | loss {loss:.4f} | lr {lr:.3g} | PSNR {p:.3f} dB | SSIM {s:.4f}")

        if cfg.iters == 0:
            p, s = evaluate(self.model, val_pairs, self.metric_cfg)
            history.eval_curve.append((0, p, s))

        history.wall_time = time.perf_counter() - start
        if guard is not None and base_weight_digest(self.model) != guard:
            raise AdapterStateError("base weights changed during adapter training")
        return history


def run_training(
    model: nn.Module,
    stream: Iterator[Batch],
    val_pairs: Sequence[ValPair],
    cfg: TrainConfig,
    metric_cfg: Optional[MetricConfig] = None,
    run_dir: Optional[Union[str, Path]] = None,
) -> RunHistory:
    """
    Trains and, when run_dir is given, writes history.csv, metrics.json and the
    end-of-run checkpoint (adapters only in lora mode, full weights otherwise).
    """
    history = Trainer(model, cfg, metric_cfg).run(stream, val_pairs)
    if run_dir is not None:
        save_run(Path(run_dir), model, history, cfg.mode)
    return history


# =========================
# RUN ARTEFACTS
# =========================
def trainable_count(model: nn.Module, mode: TrainMode) -> int:
    if TrainMode(mode) is TrainMode.LORA:
        return count_params(model).lora_total
    return count_base_params(model)


def checkpoint_path(run_dir: Path, mode: TrainMode) -> Path:
    name = "adapters.ckpt" if TrainMode(mode) is TrainMode.LORA else "base.ckpt"
    return run_dir / "checkpoints" / name


def save_run(run_dir: Path, model: nn.Module, history: RunHistory, mode: TrainMode) -> Path:
    mode = TrainMode(mode)
    ckpt = checkpoint_path(run_dir, mode)
    if mode is TrainMode.LORA:
        save_adapters(model, ckpt)
    else:
        save_backbone(model, ckpt)

    write_history_csv(history, run_dir / "history.csv")
    write_metrics_json(
        {
            **history.summary(),
            "mode": mode.value,
            "backbone": model.backbone_id,
            "trainable_params": trainable_count(model, mode),
            "model_params": count_base_params(model),
        },
        run_dir / "metrics.json",
    )
    logger.info(f"[Trainer] Run artefacts written to {run_dir}")
    return ckpt
