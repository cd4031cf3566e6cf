import logging
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import torch.nn as nn

from adaptsr.backbones.checkpoint import load_backbone
from adaptsr.backbones.factory import build_backbone
from adaptsr.config.schema import (
    RESOLVED_NAME,
    RunConfig,
    dump_run_config,
    load_run_config,
    set_dotted,
    validate_run_config,
)
from adaptsr.data.corpus import load_corpus
from adaptsr.data.models import DegradationConfig, PatchPair
from adaptsr.data.sampler import PairStream, make_validation_pairs, split_corpus
from adaptsr.errors import InvalidConfigError
from adaptsr.injection.checkpoint import load_adapters, restore_adapters
from adaptsr.injection.injector import inject
from adaptsr.training.models import RunHistory, TrainMode
from adaptsr.training.trainer import checkpoint_path, evaluate, run_training

logger = logging.getLogger(__name__)


# =========================
# DATA
# =========================
def degradation_for(run_cfg: RunConfig, mode: TrainMode) -> DegradationConfig:
    """Pretraining sees the bicubic source domain; everything else the target pipeline."""
    if TrainMode(mode) is TrainMode.PRETRAIN:
        return DegradationConfig.bicubic(run_cfg.degradation.downscale, seed=run_cfg.degradation.seed)
    return run_cfg.degradation.build_config()


def _split(run_cfg: RunConfig):
    section = run_cfg.degradation
    corpus = load_corpus(section.corpus.build_config())
    return split_corpus(corpus, section.val_count, section.per_image)


def build_validation(run_cfg: RunConfig, mode: TrainMode) -> List[PatchPair]:
    _, held_out = _split(run_cfg)
    section = run_cfg.degradation
    return make_validation_pairs(held_out, section.build_sampler(), degradation_for(run_cfg, mode), section.val_count)


def prepare_data(run_cfg: RunConfig, mode: TrainMode) -> Tuple[PairStream, List[PatchPair]]:
    section = run_cfg.degradation
    train_images, held_out = _split(run_cfg)
    deg = degradation_for(run_cfg, mode)
    sampler = section.build_sampler()

    val_pairs = make_validation_pairs(held_out, sampler, deg, section.val_count)
    stream = PairStream(
        train_images, sampler, deg,
        batch=run_cfg.train.batch,
        workers=run_cfg.train.workers,
        prefetch=run_cfg.train.prefetch,
        unknown_mix_ratio=0.0 if mode is TrainMode.PRETRAIN else section.unknown_mix_ratio,
    )
    logger.info(
        f"[Data] {len(train_images)} training / {len(held_out)} held-out images, "
        f"{len(val_pairs)} validation pairs ({'bicubic' if deg.is_bicubic else 'degraded'})"
    )
    return stream, val_pairs


# =========================
# MODEL
# =========================
def backbone_fields(model: nn.Module) -> Dict[str, Any]:
    """Config fields a loaded checkpoint pins: its backbone id and sizes."""
    section = "swin" if model.backbone_id == "tiny-swin" else "edsr"
    return {"backbone.name": model.backbone_id, f"backbone.{section}": asdict(model.config)}


def sync_backbone(run_cfg: RunConfig, model: nn.Module) -> RunConfig:
    """The loaded checkpoint's backbone id and sizes replace the config's."""
    data = run_cfg.model_dump(mode="json")
    for dotted, value in backbone_fields(model).items():
        set_dotted(data, dotted, value)
    return validate_run_config(data)


def _base_checkpoint(run_cfg: RunConfig) -> Path:
    if not run_cfg.paths.base_checkpoint:
        raise InvalidConfigError("paths.base_checkpoint is required (pass --base)")
    return Path(run_cfg.paths.base_checkpoint)


def prepare_model(run_cfg: RunConfig, mode: TrainMode) -> Tuple[nn.Module, RunConfig]:
    """
    pretrain: a fresh seeded backbone; full_ft: the base checkpoint;
    lora: the base checkpoint injected per lora/targets (plus adapters from
    paths.adapter_checkpoint, if set).
    """
    mode = TrainMode(mode)
    if mode is TrainMode.PRETRAIN:
        model, _ = build_backbone(run_cfg.backbone.name, run_cfg.backbone.build_config(), seed=run_cfg.backbone.seed)
        return model, run_cfg

    model, registry = load_backbone(_base_checkpoint(run_cfg))
    run_cfg = sync_backbone(run_cfg, model)
    if mode is TrainMode.LORA:
        model, _ = inject(model, registry, run_cfg.targets.build_spec(), run_cfg.lora.build_config())
        if run_cfg.paths.adapter_checkpoint:
            load_adapters(model, run_cfg.paths.adapter_checkpoint)
    return model, run_cfg


# =========================
# RUNS
# =========================
def execute_run(run_cfg: RunConfig) -> Tuple[RunHistory, nn.Module, RunConfig]:
    """
    One run = one directory: config.resolved, history.csv, metrics.json, checkpoints/.
    """
    train_cfg = run_cfg.train.build_config()
    model, run_cfg = prepare_model(run_cfg, train_cfg.mode)
    run_dir = run_cfg.run_path()
    dump_run_config(run_cfg, run_dir / RESOLVED_NAME)

    stream, val_pairs = prepare_data(run_cfg, train_cfg.mode)
    try:
        history = run_training(model, stream, val_pairs, train_cfg, run_cfg.metric_config, run_dir=run_dir)
    finally:
        stream.close()
    return history, model, run_cfg


def load_run_model(run_dir: Union[str, Path]) -> Tuple[nn.Module, RunConfig]:
    """Rebuilds a finished run's model from config.resolved and its checkpoint."""
    run_dir = Path(run_dir)
    run_cfg = load_run_config(run_dir / RESOLVED_NAME)
    mode = TrainMode(run_cfg.train.mode)
    ckpt = checkpoint_path(run_dir, mode)

    if mode is TrainMode.LORA:
        model, registry = load_backbone(_base_checkpoint(run_cfg))
        model, _ = restore_adapters(model, registry, ckpt)
    else:
        model, _ = load_backbone(ckpt)
    return model, run_cfg


def evaluate_checkpoint(run_dir: Union[str, Path]) -> Tuple[float, float]:
    """
    Re-runs evaluate on the run's seeded validation set; matches the final
    metrics recorded at the end of training.
    """
    model, run_cfg = load_run_model(run_dir)
    val_pairs = build_validation(run_cfg, TrainMode(run_cfg.train.mode))
    return evaluate(model, val_pairs, run_cfg.metric_config)
