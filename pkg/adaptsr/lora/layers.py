import logging
import warnings
from typing import Any, Dict, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from adaptsr.errors import AdapterStateError, CheckpointIncompatibleError, DimensionError, InvalidConfigError
from adaptsr.lora.models import LoraConfig, MergeState

logger = logging.getLogger(__name__)


class LoraLayer(nn.Module):
    """
    Frozen base layer plus a trainable low-rank delta s·B·A.

    A (r × fan_in) starts as seeded normal(0, init_std) noise and B (fan_out × r)
    starts at zero, so a fresh adapter reproduces the base layer exactly.
    Biases stay frozen and are never adapted.
    """

    kind: str = "lora"

    def __init__(self, base: nn.Module, cfg: LoraConfig, fan_in: int, fan_out: int):
        super().__init__()
        self.base = base
        for param in self.base.parameters():
            param.requires_grad = False

        self.rank = cfg.rank
        self.alpha = cfg.alpha
        self.scale = cfg.scale
        self.fan_in = fan_in
        self.fan_out = fan_out

        if cfg.rank >= min(fan_in, fan_out):
            message = (
                f"rank {cfg.rank} >= min(fan_in={fan_in}, fan_out={fan_out}); "
                f"the adapter is no longer low-rank"
            )
            logger.warning(f"[LoRA] {message}")
            warnings.warn(message, UserWarning, stacklevel=3)

        weight = base.weight
        generator = torch.Generator().manual_seed(cfg.seed)
        a_init = torch.randn((cfg.rank, fan_in), generator=generator, dtype=weight.dtype) * cfg.init_std
        self.lora_A = nn.Parameter(a_init.to(weight.device))
        self.lora_B = nn.Parameter(torch.zeros((fan_out, cfg.rank), dtype=weight.dtype, device=weight.device))

        self.state = MergeState.WRAPPED
        self.cached_delta: Optional[torch.Tensor] = None

    # =========================
    # DELTA
    # =========================
    def delta_weight(self) -> torch.Tensor:
        """s·B·A reshaped to the base weight's shape."""
        return (self.scale * (self.lora_B @ self.lora_A)).reshape(self.base.weight.shape)

    # =========================
    # MERGE / UNMERGE
    # =========================
    @torch.no_grad()
    def merge(self) -> torch.Tensor:
        if self.state is MergeState.MERGED:
            raise AdapterStateError("adapter is already merged")
        delta = self.delta_weight().detach().clone()
        self.base.weight.add_(delta)
        self.cached_delta = delta
        self.state = MergeState.MERGED
        return self.base.weight.detach()

    @torch.no_grad()
    def unmerge(self) -> None:
        if self.state is not MergeState.MERGED or self.cached_delta is None:
            raise AdapterStateError("adapter is not merged")
        self.base.weight.sub_(self.cached_delta)
        self.cached_delta = None
        self.state = MergeState.WRAPPED

    # =========================
    # PARAMETER ACCOUNTING
    # =========================
    @property
    def lora_param_count(self) -> int:
        return self.lora_A.numel() + self.lora_B.numel()

    @property
    def base_param_count(self) -> int:
        return self.base.weight.numel()

    # =========================
    # SERIALIZATION
    # =========================
    def adapter_state(self) -> Dict[str, Any]:
        """
        Flat keyed container for one adapter.
        Keys: A, B, alpha, rank, base_shape, kind.
        """
        return {
            "A": self.lora_A.detach().cpu().clone(),
            "B": self.lora_B.detach().cpu().clone(),
            "alpha": self.alpha,
            "rank": self.rank,
            "base_shape": list(self.base.weight.shape),
            "kind": self.kind,
        }

    @torch.no_grad()
    def load_adapter_state(self, state: Dict[str, Any]) -> None:
        if self.state is MergeState.MERGED:
            raise AdapterStateError("cannot load adapter weights into a merged adapter")
        if state["kind"] != self.kind or int(state["rank"]) != self.rank:
            raise CheckpointIncompatibleError(
                f"adapter kind/rank mismatch: file has {state['kind']}/r={state['rank']}, "
                f"layer has {self.kind}/r={self.rank}"
            )
        if list(state["base_shape"]) != list(self.base.weight.shape):
            raise CheckpointIncompatibleError(
                f"base shape mismatch: file {state['base_shape']} vs layer {list(self.base.weight.shape)}"
            )
        if tuple(state["A"].shape) != tuple(self.lora_A.shape) or tuple(state["B"].shape) != tuple(self.lora_B.shape):
            raise CheckpointIncompatibleError("A/B shape mismatch")
        self.lora_A.copy_(state["A"].to(self.lora_A))
        self.lora_B.copy_(state["B"].to(self.lora_B))
        self.alpha = float(state["alpha"])
        self.scale = self.alpha / self.rank

    def extra_repr(self) -> str:
        return f"rank={self.rank}, alpha={self.alpha}, scale={self.scale}, state={self.state.value}"


class LoraLinear(LoraLayer):
    """
    Dense adapter: y = x·W0ᵀ + s·(x·Aᵀ)·Bᵀ + bias.
    """

    kind = "linear"

    def __init__(self, base: nn.Linear, cfg: LoraConfig):
        if not isinstance(base, nn.Linear):
            raise InvalidConfigError(f"LoraLinear wraps nn.Linear, got {type(base).__name__}")
        super().__init__(base, cfg, fan_in=base.in_features, fan_out=base.out_features)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.fan_in:
            raise DimensionError(f"expected last dim {self.fan_in}, got {tuple(x.shape)}")
        out = self.base(x)
        if self.state is MergeState.MERGED:
            return out
        return out + self.scale * F.linear(F.linear(x, self.lora_A), self.lora_B)


class LoraConv2d(LoraLayer):
    """
    Convolutional adapter over the flattened kernel: A is r × (C_in·k·k), B is C_out × r.

    The factored path runs A as an r-channel k×k conv followed by B as a 1×1 conv;
    reshape(B·A) is a drop-in C_out × C_in × k × k kernel, so merging is exact.
    """

    kind = "conv"

    def __init__(self, base: nn.Conv2d, cfg: LoraConfig):
        if not isinstance(base, nn.Conv2d):
            raise InvalidConfigError(f"LoraConv2d wraps nn.Conv2d, got {type(base).__name__}")
        if base.groups != 1:
            raise InvalidConfigError("grouped convolutions cannot be adapted")
        if base.padding_mode != "zeros":
            raise InvalidConfigError(f"unsupported padding mode {base.padding_mode!r}")
        kh, kw = base.kernel_size
        super().__init__(base, cfg, fan_in=base.in_channels * kh * kw, fan_out=base.out_channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() not in (3, 4) or x.shape[-3] != self.base.in_channels:
            raise DimensionError(f"expected {self.base.in_channels} input channels, got {tuple(x.shape)}")
        out = self.base(x)
        if self.state is MergeState.MERGED:
            return out

        kh, kw = self.base.kernel_size
        down = F.conv2d(
            x,
            self.lora_A.reshape(self.rank, self.base.in_channels, kh, kw),
            stride=self.base.stride,
            padding=self.base.padding,
            dilation=self.base.dilation,
        )
        up = F.conv2d(down, self.lora_B.reshape(self.fan_out, self.rank, 1, 1))
        return out + self.scale * up


# =========================
# FUNCTIONAL ENTRY POINTS
# =========================
def make_linear_adapter(
    base_weight: torch.Tensor,
    base_bias: Optional[torch.Tensor],
    cfg: LoraConfig,
) -> LoraLinear:
    """
    Builds a LoraLinear around a copy of the given frozen weight (d_out × d_in).
    """
    if base_weight.dim() != 2:
        raise DimensionError(f"linear base weight must be 2-D, got shape {tuple(base_weight.shape)}")
    d_out, d_in = base_weight.shape
    base = nn.Linear(d_in, d_out, bias=base_bias is not None, dtype=base_weight.dtype, device=base_weight.device)
    with torch.no_grad():
        base.weight.copy_(base_weight)
        if base_bias is not None:
            base.bias.copy_(base_bias)
    return LoraLinear(base, cfg)


def make_conv_adapter(
    base_kernel: torch.Tensor,
    base_bias: Optional[torch.Tensor],
    cfg: LoraConfig,
    stride: int = 1,
    padding: int = 0,
) -> LoraConv2d:
    """
    Builds a LoraConv2d around a copy of the given kernel (C_out × C_in × k × k).
    """
    if base_kernel.dim() != 4:
        raise DimensionError(f"conv base kernel must be 4-D, got shape {tuple(base_kernel.shape)}")
    c_out, c_in, kh, kw = base_kernel.shape
    base = nn.Conv2d(
        c_in, c_out, (kh, kw),
        stride=stride,
        padding=padding,
        bias=base_bias is not None,
        dtype=base_kernel.dtype,
        device=base_kernel.device,
    )
    with torch.no_grad():
        base.weight.copy_(base_kernel)
        if base_bias is not None:
            base.bias.copy_(base_bias)
    return LoraConv2d(base, cfg)


def linear_forward(adapter: LoraLinear, x: torch.Tensor) -> torch.Tensor:
    return adapter(x)


def conv_forward(adapter: LoraConv2d, x: torch.Tensor) -> torch.Tensor:
    return adapter(x)


def merge_adapter(adapter: LoraLayer) -> torch.Tensor:
    """Folds s·B·A into the base weight and returns the merged weight."""
    return adapter.merge()


def unmerge_adapter(adapter: LoraLayer) -> None:
    adapter.unmerge()
