from adaptsr.backbones.models import (
    CONV_GROUPS,
    LayerGroup,
    LayerKind,
    LayerRegistry,
    RegistryEntry,
    TinyEdsrConfig,
    TinySwinConfig,
)
from adaptsr.backbones.registry import build_registry, count_base_params, model_forward
from adaptsr.backbones.swin import RelPosBias, TinySwin, build_tiny_swin, mlp_forward, window_attention
from adaptsr.backbones.edsr import TinyEdsr, build_tiny_edsr
from adaptsr.backbones.factory import BACKBONES, backbone_config, build_backbone
from adaptsr.backbones.checkpoint import load_backbone, save_backbone

__all__ = [
    "CONV_GROUPS",
    "LayerGroup",
    "LayerKind",
    "LayerRegistry",
    "RegistryEntry",
    "TinyEdsrConfig",
    "TinySwinConfig",
    "build_registry",
    "count_base_params",
    "model_forward",
    "RelPosBias",
    "TinySwin",
    "build_tiny_swin",
    "mlp_forward",
    "window_attention",
    "TinyEdsr",
    "build_tiny_edsr",
    "BACKBONES",
    "backbone_config",
    "build_backbone",
    "load_backbone",
    "save_backbone",
]
