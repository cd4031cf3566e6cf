from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, List

from adaptsr.errors import InvalidConfigError


# =========================
# Tiny Swin Config
# Transformer backbone: shallow conv → RTLBs of TLLs → DFE conv → upsampler
# =========================
@dataclass(frozen=True)
class TinySwinConfig:
    embed_dim: int = 32
    n_rtlb: int = 2                    # residual transformer blocks
    tll_per_rtlb: int = 2              # transformer layers per block
    n_heads: int = 4
    window: int = 8                    # window side; tokens per window = window²
    mlp_ratio: float = 2.0
    upscale: int = 4
    img_range: float = 1.0
    upsample_feats: int = 64           # width of the pixel-shuffle branch
    in_chans: int = 3

    def __post_init__(self):
        if self.embed_dim <= 0 or self.n_heads <= 0:
            raise InvalidConfigError("embed_dim and n_heads must be positive")
        if self.embed_dim % self.n_heads != 0:
            raise InvalidConfigError(
                f"embed_dim {self.embed_dim} is not divisible by n_heads {self.n_heads}"
            )
        if self.n_rtlb < 1 or self.tll_per_rtlb < 1:
            raise InvalidConfigError("n_rtlb and tll_per_rtlb must be >= 1")
        if self.window < 1:
            raise InvalidConfigError(f"window must be >= 1, got {self.window}")
        if self.upscale not in (2, 3, 4):
            raise InvalidConfigError(f"upscale must be one of 2, 3, 4, got {self.upscale}")
        if self.mlp_ratio <= 0 or self.img_range <= 0 or self.upsample_feats < 1:
            raise InvalidConfigError("mlp_ratio, img_range and upsample_feats must be positive")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.n_heads

    @property
    def hidden_dim(self) -> int:
        return int(self.embed_dim * self.mlp_ratio)

    @classmethod
    def swinir_scale(cls) -> "TinySwinConfig":
        """Classical-SR SwinIR sizing, used for the 12M / 886k calibration."""
        return cls(embed_dim=180, n_rtlb=6, tll_per_rtlb=6, n_heads=6, window=8, mlp_ratio=2.0, upscale=4)


# =========================
# Tiny EDSR Config
# =========================
@dataclass(frozen=True)
class TinyEdsrConfig:
    n_feats: int = 32
    n_resblocks: int = 4
    upscale: int = 4
    res_scale: float = 1.0
    in_chans: int = 3

    def __post_init__(self):
        if self.n_resblocks < 1:
            raise InvalidConfigError(f"n_resblocks must be >= 1, got {self.n_resblocks}")
        if self.upscale not in (2, 3, 4):
            raise InvalidConfigError(f"upscale must be one of 2, 3, 4, got {self.upscale}")
        if self.n_feats < 1:
            raise InvalidConfigError(f"n_feats must be >= 1, got {self.n_feats}")

    @classmethod
    def supplementary(cls) -> "TinyEdsrConfig":
        """16 residual LoRA blocks of 64 features."""
        return cls(n_feats=64, n_resblocks=16)


# =========================
# Layer Registry
# Address space of every adaptable weight in a backbone
# =========================
class LayerKind(str, Enum):
    CONV = "conv"
    LINEAR_QKV = "linear_qkv"
    LINEAR_PROJ = "linear_proj"
    LINEAR_MLP_FC1 = "linear_mlp_fc1"
    LINEAR_MLP_FC2 = "linear_mlp_fc2"


class LayerGroup(str, Enum):
    FIRST_CONV = "first_conv"
    RSTLB_CONVS = "rstlb_convs"
    DFE_CONVS = "dfe_convs"
    BU_CONV = "bu_conv"
    AU_CONV = "au_conv"
    MSA = "msa"
    MLP = "mlp"
    RLB_CONVS = "rlb_convs"


CONV_GROUPS = frozenset({
    LayerGroup.FIRST_CONV,
    LayerGroup.RSTLB_CONVS,
    LayerGroup.DFE_CONVS,
    LayerGroup.BU_CONV,
    LayerGroup.AU_CONV,
    LayerGroup.RLB_CONVS,
})


@dataclass(frozen=True)
class RegistryEntry:
    name: str                          # dotted module path, e.g. "rtlbs.0.layers.1.attn.qkv"
    kind: LayerKind
    group: LayerGroup
    fan_in: int                        # d_in, or C_in·k·k for convs
    fan_out: int                       # d_out, or C_out
    weight_shape: tuple

    @property
    def base_params(self) -> int:
        total = 1
        for dim in self.weight_shape:
            total *= dim
        return total

    def lora_params(self, rank: int) -> int:
        return rank * (self.fan_in + self.fan_out)


@dataclass
class LayerRegistry:
    backbone_id: str
    entries: List[RegistryEntry] = field(default_factory=list)

    def __post_init__(self):
        names = [e.name for e in self.entries]
        if len(names) != len(set(names)):
            raise InvalidConfigError(f"duplicate registry names in {self.backbone_id}")

    def __iter__(self) -> Iterator[RegistryEntry]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def names(self) -> List[str]:
        return [e.name for e in self.entries]

    def by_name(self) -> Dict[str, RegistryEntry]:
        return {e.name: e for e in self.entries}

    def in_group(self, group: LayerGroup) -> List[RegistryEntry]:
        return [e for e in self.entries if e.group is group]

    def group_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for entry in self.entries:
            counts[entry.group.value] = counts.get(entry.group.value, 0) + 1
        return counts

    def kind_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for entry in self.entries:
            counts[entry.kind.value] = counts.get(entry.kind.value, 0) + 1
        return counts
