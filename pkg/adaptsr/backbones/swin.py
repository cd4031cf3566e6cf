import logging
import re
from typing import Callable, Tuple, Union

import torch
import torch.nn as nn
import torch.nn.functional as F

from adaptsr.backbones.models import LayerGroup, LayerKind, LayerRegistry, TinySwinConfig
from adaptsr.backbones.registry import build_registry, check_input, rgb_mean, unclassified
from adaptsr.errors import DimensionError

logger = logging.getLogger(__name__)

TokenLayer = Callable[[torch.Tensor], torch.Tensor]


def window_partition(x: torch.Tensor, window: int) -> torch.Tensor:
    """
    (B, H, W, C) → (num_windows·B, window, window, C)
    """
    b, h, w, c = x.shape
    x = x.view(b, h // window, window, w // window, window, c)
    return x.permute(0, 1, 3, 2, 4, 5).contiguous().view(-1, window, window, c)


def window_reverse(windows: torch.Tensor, window: int, h: int, w: int) -> torch.Tensor:
    """
    (num_windows·B, window, window, C) → (B, H, W, C)
    """
    b = int(windows.shape[0] / (h * w / window / window))
    x = windows.view(b, h // window, w // window, window, window, -1)
    return x.permute(0, 1, 3, 2, 4, 5).contiguous().view(b, h, w, -1)


# =========================
# RELATIVE POSITION BIAS
# =========================
class RelPosBias(nn.Module):
    """
    Learned bias table over the (2·window−1)² relative offsets inside a window,
    gathered into an N×N matrix per head (N = window²).
    """

    def __init__(self, window: int, n_heads: int):
        super().__init__()
        self.window = window
        self.n_heads = n_heads
        self.table = nn.Parameter(torch.zeros((2 * window - 1) ** 2, n_heads))
        nn.init.trunc_normal_(self.table, std=0.02)
        self.register_buffer("index", self.build_index(window), persistent=False)

    @staticmethod
    def build_index(window: int) -> torch.Tensor:
        coords = torch.stack(torch.meshgrid(torch.arange(window), torch.arange(window), indexing="ij"))
        coords = torch.flatten(coords, 1)                                 # 2, N
        relative = (coords[:, :, None] - coords[:, None, :]).permute(1, 2, 0).contiguous()
        relative[:, :, 0] += window - 1                                   # shift to start from 0
        relative[:, :, 1] += window - 1
        relative[:, :, 0] *= 2 * window - 1
        return relative.sum(-1)                                           # N, N

    def forward(self) -> torch.Tensor:
        n = self.window * self.window
        bias = self.table[self.index.view(-1)].view(n, n, self.n_heads)
        return bias.permute(2, 0, 1).contiguous()                         # heads, N, N


def window_attention(
    x: torch.Tensor,
    qkv: TokenLayer,
    proj: TokenLayer,
    bias: Union[RelPosBias, torch.Tensor],
    heads: int,
    return_attn: bool = False,
):
    """
    Multi-head self-attention inside windows: x is (num_windows·B, N, d).

    Per head A = softmax(Q·Kᵀ/√d_k + bias), rows A·V, heads concatenated and
    projected. qkv is one fused d → 3d layer (plain or adapted).
    """
    if x.dim() != 3:
        raise DimensionError(f"expected (windows, N, d) tokens, got {tuple(x.shape)}")
    b_, n, c = x.shape
    if c % heads != 0:
        raise DimensionError(f"token dim {c} is not divisible by {heads} heads")

    bias_matrix = bias() if isinstance(bias, RelPosBias) else bias
    if bias_matrix.shape != (heads, n, n):
        raise DimensionError(f"bias shape {tuple(bias_matrix.shape)} does not match ({heads}, {n}, {n})")

    head_dim = c // heads
    qkv_out = qkv(x)
    if qkv_out.shape[-1] != 3 * c:
        raise DimensionError(f"qkv must map {c} → {3 * c}, got {qkv_out.shape[-1]}")
    qkv_out = qkv_out.reshape(b_, n, 3, heads, head_dim).permute(2, 0, 3, 1, 4)
    q, k, v = qkv_out[0], qkv_out[1], qkv_out[2]

    attn = (q * head_dim ** -0.5) @ k.transpose(-2, -1)
    attn = attn + bias_matrix.unsqueeze(0)
    attn = attn.softmax(dim=-1)

    out = (attn @ v).transpose(1, 2).reshape(b_, n, c)
    out = proj(out)
    return (out, attn) if return_attn else out


def mlp_forward(x: torch.Tensor, fc1: TokenLayer, fc2: TokenLayer) -> torch.Tensor:
    """fc2(GELU(fc1(x))) with the exact (erf) GELU."""
    return fc2(F.gelu(fc1(x)))


class WindowAttention(nn.Module):

    def __init__(self, dim: int, window: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)
        self.rel_bias = RelPosBias(window, n_heads)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return window_attention(x, self.qkv, self.proj, self.rel_bias, self.n_heads)


class Mlp(nn.Module):

    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return mlp_forward(x, self.fc1, self.fc2)


class TransformerLayer(nn.Module):
    """
    TLL: pre-norm window attention and MLP, each with a residual. Plain
    non-overlapping windows (no shift).
    """

    def __init__(self, cfg: TinySwinConfig):
        super().__init__()
        self.window = cfg.window
        self.norm1 = nn.LayerNorm(cfg.embed_dim)
        self.attn = WindowAttention(cfg.embed_dim, cfg.window, cfg.n_heads)
        self.norm2 = nn.LayerNorm(cfg.embed_dim)
        self.mlp = Mlp(cfg.embed_dim, cfg.hidden_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, h, w, c = x.shape
        windows = window_partition(self.norm1(x), self.window).view(-1, self.window * self.window, c)
        attended = self.attn(windows).view(-1, self.window, self.window, c)
        x = x + window_reverse(attended, self.window, h, w)
        return x + self.mlp(self.norm2(x))


class ResidualTransformerBlock(nn.Module):
    """RTLB: a stack of TLLs closed by a 3×3 conv and a block residual."""

    def __init__(self, cfg: TinySwinConfig):
        super().__init__()
        self.layers = nn.ModuleList([TransformerLayer(cfg) for _ in range(cfg.tll_per_rtlb)])
        self.conv = nn.Conv2d(cfg.embed_dim, cfg.embed_dim, 3, 1, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        tokens = x.permute(0, 2, 3, 1)
        for layer in self.layers:
            tokens = layer(tokens)
        return self.conv(tokens.permute(0, 3, 1, 2)) + x


class TinySwin(nn.Module):
    """
    first_conv → RTLBs → norm → dfe_conv → global skip → bu_conv → pixel shuffle → au_conv.
    """

    backbone_id = "tiny-swin"

    _LAYER_RULES = [
        (re.compile(r"^first_conv$"), LayerKind.CONV, LayerGroup.FIRST_CONV),
        (re.compile(r"^rtlbs\.\d+\.conv$"), LayerKind.CONV, LayerGroup.RSTLB_CONVS),
        (re.compile(r"^rtlbs\.\d+\.layers\.\d+\.attn\.qkv$"), LayerKind.LINEAR_QKV, LayerGroup.MSA),
        (re.compile(r"^rtlbs\.\d+\.layers\.\d+\.attn\.proj$"), LayerKind.LINEAR_PROJ, LayerGroup.MSA),
        (re.compile(r"^rtlbs\.\d+\.layers\.\d+\.mlp\.fc1$"), LayerKind.LINEAR_MLP_FC1, LayerGroup.MLP),
        (re.compile(r"^rtlbs\.\d+\.layers\.\d+\.mlp\.fc2$"), LayerKind.LINEAR_MLP_FC2, LayerGroup.MLP),
        (re.compile(r"^dfe_conv$"), LayerKind.CONV, LayerGroup.DFE_CONVS),
        (re.compile(r"^bu_conv$"), LayerKind.CONV, LayerGroup.BU_CONV),
        (re.compile(r"^au_conv$"), LayerKind.CONV, LayerGroup.AU_CONV),
    ]

    def __init__(self, cfg: TinySwinConfig):
        super().__init__()
        self.config = cfg
        self.register_buffer("mean", rgb_mean(cfg.in_chans), persistent=False)

        self.first_conv = nn.Conv2d(cfg.in_chans, cfg.embed_dim, 3, 1, 1)
        self.rtlbs = nn.ModuleList([ResidualTransformerBlock(cfg) for _ in range(cfg.n_rtlb)])
        self.norm = nn.LayerNorm(cfg.embed_dim)
        self.dfe_conv = nn.Conv2d(cfg.embed_dim, cfg.embed_dim, 3, 1, 1)

        self.bu_conv = nn.Conv2d(cfg.embed_dim, cfg.upsample_feats * cfg.upscale ** 2, 3, 1, 1)
        self.shuffle = nn.PixelShuffle(cfg.upscale)
        self.act = nn.LeakyReLU(0.2)
        self.au_conv = nn.Conv2d(cfg.upsample_feats, cfg.in_chans, 3, 1, 1)

        self.apply(self._init_weights)

    @staticmethod
    def _init_weights(module: nn.Module) -> None:
        if isinstance(module, nn.Linear):
            nn.init.trunc_normal_(module.weight, std=0.02)
            if module.bias is not None:
                nn.init.zeros_(module.bias)
        elif isinstance(module, nn.LayerNorm):
            nn.init.ones_(module.weight)
            nn.init.zeros_(module.bias)

    def classify_layer(self, name: str) -> Tuple[LayerKind, LayerGroup]:
        for pattern, kind, group in self._LAYER_RULES:
            if pattern.match(name):
                return kind, group
        raise unclassified(name)

    def _pad(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2:]
        win = self.config.window
        pad_h = (win - h % win) % win
        pad_w = (win - w % win) % win
        if pad_h == 0 and pad_w == 0:
            return x
        mode = "reflect" if pad_h < h and pad_w < w else "replicate"
        return F.pad(x, (0, pad_w, 0, pad_h), mode=mode)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        check_input(x, self.config.in_chans)
        h, w = x.shape[-2:]
        x = (x - self.mean) * self.config.img_range

        shallow = self.first_conv(self._pad(x))
        body = shallow
        for block in self.rtlbs:
            body = block(body)
        body = self.norm(body.permute(0, 2, 3, 1)).permute(0, 3, 1, 2)
        feats = (self.dfe_conv(body) + shallow)[..., :h, :w]

        out = self.au_conv(self.act(self.shuffle(self.bu_conv(feats))))
        return out / self.config.img_range + self.mean


def build_tiny_swin(cfg: TinySwinConfig, seed: int = 0) -> Tuple[TinySwin, LayerRegistry]:
    """
    Builds a seeded TinySwin and its layer registry.
    """
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = TinySwin(cfg)
    registry = build_registry(model)
    logger.debug(f"[Backbone] tiny-swin built with {len(registry)} adaptable layers")
    return model, registry
