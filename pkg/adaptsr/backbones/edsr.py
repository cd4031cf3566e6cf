import logging
import re
from typing import Tuple

import torch
import torch.nn as nn

from adaptsr.backbones.models import LayerGroup, LayerKind, LayerRegistry, TinyEdsrConfig
from adaptsr.backbones.registry import build_registry, check_input, rgb_mean, unclassified

logger = logging.getLogger(__name__)


class ResidualBlock(nn.Module):
    """RLB: conv-ReLU-conv with a scaled residual."""

    def __init__(self, n_feats: int, res_scale: float):
        super().__init__()
        self.res_scale = res_scale
        self.conv1 = nn.Conv2d(n_feats, n_feats, 3, 1, 1)
        self.relu = nn.ReLU()
        self.conv2 = nn.Conv2d(n_feats, n_feats, 3, 1, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.res_scale * self.conv2(self.relu(self.conv1(x)))


class TinyEdsr(nn.Module):
    """
    first_conv → RLBs (+ global skip) → bu_conv → pixel shuffle → au_conv.
    """

    backbone_id = "tiny-edsr"

    _LAYER_RULES = [
        (re.compile(r"^first_conv$"), LayerGroup.FIRST_CONV),
        (re.compile(r"^rlbs\.\d+\.conv[12]$"), LayerGroup.RLB_CONVS),
        (re.compile(r"^bu_conv$"), LayerGroup.BU_CONV),
        (re.compile(r"^au_conv$"), LayerGroup.AU_CONV),
    ]

    def __init__(self, cfg: TinyEdsrConfig):
        super().__init__()
        self.config = cfg
        self.register_buffer("mean", rgb_mean(cfg.in_chans), persistent=False)

        self.first_conv = nn.Conv2d(cfg.in_chans, cfg.n_feats, 3, 1, 1)
        self.rlbs = nn.ModuleList([ResidualBlock(cfg.n_feats, cfg.res_scale) for _ in range(cfg.n_resblocks)])
        self.bu_conv = nn.Conv2d(cfg.n_feats, cfg.n_feats * cfg.upscale ** 2, 3, 1, 1)
        self.shuffle = nn.PixelShuffle(cfg.upscale)
        self.au_conv = nn.Conv2d(cfg.n_feats, cfg.in_chans, 3, 1, 1)

    def classify_layer(self, name: str) -> Tuple[LayerKind, LayerGroup]:
        for pattern, group in self._LAYER_RULES:
            if pattern.match(name):
                return LayerKind.CONV, group
        raise unclassified(name)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        check_input(x, self.config.in_chans)
        shallow = self.first_conv(x - self.mean)
        body = shallow
        for block in self.rlbs:
            body = block(body)
        out = self.au_conv(self.shuffle(self.bu_conv(body + shallow)))
        return out + self.mean


def build_tiny_edsr(cfg: TinyEdsrConfig, seed: int = 0) -> Tuple[TinyEdsr, LayerRegistry]:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = TinyEdsr(cfg)
    registry = build_registry(model)
    logger.debug(f"[Backbone] tiny-edsr built with {len(registry)} adaptable layers")
    return model, registry
