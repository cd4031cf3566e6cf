from dataclasses import asdict
from typing import Any, Dict, Tuple, Union

import torch.nn as nn

from adaptsr.backbones.edsr import build_tiny_edsr
from adaptsr.backbones.models import LayerRegistry, TinyEdsrConfig, TinySwinConfig
from adaptsr.backbones.swin import build_tiny_swin
from adaptsr.errors import InvalidConfigError

BackboneConfig = Union[TinySwinConfig, TinyEdsrConfig]

BACKBONES = {
    "tiny-swin": (TinySwinConfig, build_tiny_swin),
    "tiny-edsr": (TinyEdsrConfig, build_tiny_edsr),
}


def backbone_config(name: str, fields: Dict[str, Any]) -> BackboneConfig:
    if name not in BACKBONES:
        raise InvalidConfigError(f"unknown backbone {name!r}; expected one of {sorted(BACKBONES)}")
    config_cls, _ = BACKBONES[name]
    try:
        return config_cls(**fields)
    except TypeError as e:
        raise InvalidConfigError(f"bad {name} config: {e}") from e


def build_backbone(name: str, cfg: BackboneConfig, seed: int = 0) -> Tuple[nn.Module, LayerRegistry]:
    """
    Builds a backbone by id ("tiny-swin" or "tiny-edsr").
    """
    if name not in BACKBONES:
        raise InvalidConfigError(f"unknown backbone {name!r}; expected one of {sorted(BACKBONES)}")
    config_cls, builder = BACKBONES[name]
    if not isinstance(cfg, config_cls):
        raise InvalidConfigError(f"{name} needs a {config_cls.__name__}, got {type(cfg).__name__}")
    return builder(cfg, seed=seed)


def config_header(model: nn.Module) -> Dict[str, Any]:
    return {"backbone_id": model.backbone_id, "config": asdict(model.config)}
