import logging
from typing import Set

import torch
import torch.nn as nn

from adaptsr.backbones.models import LayerRegistry, RegistryEntry
from adaptsr.errors import DimensionError, InvalidConfigError
from adaptsr.lora.layers import LoraLayer

logger = logging.getLogger(__name__)

# RGB means of the DIV2K training set, subtracted before the shallow conv
RGB_MEAN = (0.4488, 0.4371, 0.4040)


def build_registry(model: nn.Module) -> LayerRegistry:
    """
    Walks the model and names every adaptable weight (nn.Linear / nn.Conv2d,
    wrapped or not) in module order. The model's `classify_layer(name)` assigns
    kind and group; a layer it cannot classify is an error, so the registry is
    always complete.
    """
    entries = []
    wrapped_bases: Set[str] = set()

    for name, module in model.named_modules():
        if name in wrapped_bases:
            continue

        if isinstance(module, LoraLayer):
            wrapped_bases.add(f"{name}.base")
            layer = module.base
        elif isinstance(module, (nn.Linear, nn.Conv2d)):
            layer = module
        else:
            continue

        kind, group = model.classify_layer(name)
        if isinstance(layer, nn.Conv2d):
            kh, kw = layer.kernel_size
            fan_in, fan_out = layer.in_channels * kh * kw, layer.out_channels
        else:
            fan_in, fan_out = layer.in_features, layer.out_features

        entries.append(RegistryEntry(
            name=name,
            kind=kind,
            group=group,
            fan_in=fan_in,
            fan_out=fan_out,
            weight_shape=tuple(layer.weight.shape),
        ))

    return LayerRegistry(backbone_id=model.backbone_id, entries=entries)


def count_base_params(model: nn.Module) -> int:
    """
    Every parameter of the plain architecture: weights, biases, norms and
    position tables. Adapter factors are excluded.
    """
    return sum(
        p.numel()
        for name, p in model.named_parameters()
        if not name.endswith(("lora_A", "lora_B"))
    )


def model_forward(model: nn.Module, lr_image: torch.Tensor) -> torch.Tensor:
    """
    Inference on a [0,1] image (C×H×W or N×C×H×W); output clamped to [0,1].
    """
    unbatched = lr_image.dim() == 3
    if unbatched:
        lr_image = lr_image.unsqueeze(0)
    if lr_image.dim() != 4:
        raise DimensionError(f"expected a C×H×W or N×C×H×W image, got {tuple(lr_image.shape)}")

    was_training = model.training
    model.eval()
    with torch.no_grad():
        sr = model(lr_image).clamp(0.0, 1.0)
    model.train(was_training)

    return sr[0] if unbatched else sr


def check_input(x: torch.Tensor, in_chans: int) -> None:
    if x.dim() != 4:
        raise DimensionError(f"expected N×C×H×W input, got {tuple(x.shape)}")
    if x.shape[1] != in_chans:
        raise DimensionError(f"expected {in_chans} channels, got {x.shape[1]}")


def rgb_mean(in_chans: int) -> torch.Tensor:
    if in_chans == 3:
        return torch.tensor(RGB_MEAN).view(1, 3, 1, 1)
    return torch.zeros(1, in_chans, 1, 1)


def unclassified(name: str) -> InvalidConfigError:
    return InvalidConfigError(f"layer {name!r} has no registry classification")
