import logging
from pathlib import Path
from typing import Tuple, Union

import torch
import torch.nn as nn

from adaptsr.backbones.factory import backbone_config, build_backbone, config_header
from adaptsr.backbones.models import LayerRegistry
from adaptsr.errors import AdapterStateError, CheckpointIncompatibleError
from adaptsr.lora.layers import LoraLayer

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def save_backbone(model: nn.Module, path: Union[str, Path]) -> Path:
    """
    Writes a plain (never adapter-wrapped) model: {format, backbone_id, config, weights}.
    Weight keys are the registry's dotted names plus ".weight" / ".bias".
    """
    if any(isinstance(m, LoraLayer) for m in model.modules()):
        raise AdapterStateError("save_backbone needs a plain model; merge or save adapters instead")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"format": FORMAT_VERSION, **config_header(model), "weights": model.state_dict()}
    torch.save(payload, path)
    logger.info(f"[Checkpoint] Saved {model.backbone_id} weights to {path}")
    return path


def load_backbone(path: Union[str, Path], device: str = "cpu") -> Tuple[nn.Module, LayerRegistry]:
    path = Path(path)
    payload = torch.load(path, map_location=device, weights_only=True)
    if not isinstance(payload, dict) or "backbone_id" not in payload or "weights" not in payload:
        raise CheckpointIncompatibleError(f"{path} is not a backbone checkpoint")

    cfg = backbone_config(payload["backbone_id"], payload["config"])
    model, registry = build_backbone(payload["backbone_id"], cfg)
    try:
        model.load_state_dict(payload["weights"], strict=True)
    except RuntimeError as e:
        raise CheckpointIncompatibleError(f"weights in {path} do not fit the declared config: {e}") from e

    logger.info(f"[Checkpoint] Loaded {payload['backbone_id']} from {path}")
    return model.to(device), registry
