from adaptsr.lora.models import LoraConfig, MergeState, effective_scale
from adaptsr.lora.layers import (
    LoraLayer,
    LoraLinear,
    LoraConv2d,
    make_linear_adapter,
    make_conv_adapter,
    linear_forward,
    conv_forward,
    merge_adapter,
    unmerge_adapter,
)

__all__ = [
    "LoraConfig",
    "MergeState",
    "effective_scale",
    "LoraLayer",
    "LoraLinear",
    "LoraConv2d",
    "make_linear_adapter",
    "make_conv_adapter",
    "linear_forward",
    "conv_forward",
    "merge_adapter",
    "unmerge_adapter",
]
