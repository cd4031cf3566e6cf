import copy
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from adaptsr.backbones.models import TinyEdsrConfig, TinySwinConfig
from adaptsr.config.settings import RUNS_DIR
from adaptsr.data.models import CorpusConfig, DegradationConfig, PatchSampler
from adaptsr.errors import InvalidConfigError
from adaptsr.injection.models import TargetSpec
from adaptsr.lora.models import LoraConfig
from adaptsr.metrics.models import MetricConfig
from adaptsr.training.models import TrainConfig, TrainMode

logger = logging.getLogger(__name__)

RESOLVED_NAME = "config.resolved"


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


# =========================
# backbone
# =========================
class SwinSection(StrictModel):
    embed_dim: int = 32
    n_rtlb: int = 2
    tll_per_rtlb: int = 2
    n_heads: int = 4
    window: int = 8
    mlp_ratio: float = 2.0
    upscale: int = 4
    img_range: float = 1.0
    upsample_feats: int = 64
    in_chans: int = 3


class EdsrSection(StrictModel):
    n_feats: int = 32
    n_resblocks: int = 4
    upscale: int = 4
    res_scale: float = 1.0
    in_chans: int = 3


class BackboneSection(StrictModel):
    name: Literal["tiny-edsr", "tiny-swin"] = "tiny-edsr"
    seed: int = 0
    swin: SwinSection = Field(default_factory=SwinSection)
    edsr: EdsrSection = Field(default_factory=EdsrSection)

    def build_config(self) -> Union[TinySwinConfig, TinyEdsrConfig]:
        if self.name == "tiny-swin":
            return TinySwinConfig(**self.swin.model_dump())
        return TinyEdsrConfig(**self.edsr.model_dump())

    @property
    def upscale(self) -> int:
        return self.swin.upscale if self.name == "tiny-swin" else self.edsr.upscale


# =========================
# lora / targets
# =========================
class LoraSection(StrictModel):
    rank: int = 8
    alpha: float = 1.0
    init_std: float = 0.02
    seed: int = 0

    def build_config(self) -> LoraConfig:
        return LoraConfig(**self.model_dump())


class TargetsSection(StrictModel):
    """Explicit patterns, when given, take the place of the preset."""

    preset: Optional[str] = "all"
    patterns: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _one_of(self) -> "TargetsSection":
        if self.patterns:
            self.preset = None
        elif self.preset is None:
            raise ValueError("targets need a preset or at least one pattern")
        return self

    def build_spec(self) -> TargetSpec:
        if self.patterns:
            return TargetSpec(patterns=tuple(self.patterns))
        return TargetSpec(preset=self.preset)


# =========================
# degradation
# =========================
class CorpusSection(StrictModel):
    source: Literal["synthetic", "folder"] = "synthetic"
    n: int = 32
    size: int = 128
    seed: int = 0
    folder: Optional[str] = None

    def build_config(self) -> CorpusConfig:
        return CorpusConfig(**self.model_dump())


class DegradationSection(StrictModel):
    blur_kernel_size: int = 7
    blur_sigma: Tuple[float, float] = (0.2, 2.0)
    downscale: int = 4
    noise_sigma: Tuple[float, float] = (1.0, 10.0)
    jpeg_quality: Tuple[int, int] = (60, 95)
    second_order: bool = True
    seed: int = 0
    patch_size: int = 64
    per_image: int = 4
    val_count: int = 16
    unknown_mix_ratio: float = Field(default=0.0, ge=0.0, le=1.0)
    corpus: CorpusSection = Field(default_factory=CorpusSection)

    def build_config(self) -> DegradationConfig:
        return DegradationConfig(
            blur_kernel_size=self.blur_kernel_size,
            blur_sigma=self.blur_sigma,
            downscale=self.downscale,
            noise_sigma=self.noise_sigma,
            jpeg_quality=self.jpeg_quality,
            second_order=self.second_order,
            seed=self.seed,
        )

    def build_sampler(self) -> PatchSampler:
        return PatchSampler(patch_size=self.patch_size, per_image=self.per_image, seed=self.seed)


# =========================
# train / metrics / paths
# =========================
class TrainSection(StrictModel):
    mode: Literal["lora", "full_ft", "pretrain"] = "lora"
    iters: int = 2000
    batch: int = 8
    lr0: float = 1e-3
    milestones: Optional[List[Tuple[float, float]]] = None
    betas: Tuple[float, float] = (0.9, 0.999)
    seed: int = 0
    eval_every: int = 100
    workers: int = 1
    prefetch: int = 4

    def build_config(self) -> TrainConfig:
        fields = self.model_dump()
        fields["mode"] = TrainMode(self.mode)
        fields["milestones"] = tuple(map(tuple, self.milestones)) if self.milestones is not None else None
        return TrainConfig(**fields)


class MetricsSection(StrictModel):
    use_y_channel: bool = True
    crop_border: Optional[int] = None  # None → the upscale factor
    dynamic_range: float = 1.0
    ssim_window: int = 11
    ssim_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03

    def build_config(self, upscale: int) -> MetricConfig:
        fields = self.model_dump()
        if fields["crop_border"] is None:
            fields["crop_border"] = upscale
        return MetricConfig(**fields)


class PathsSection(StrictModel):
    run_dir: Optional[str] = None
    base_checkpoint: Optional[str] = None
    adapter_checkpoint: Optional[str] = None


# =========================
# Run Config
# =========================
class RunConfig(StrictModel):
    backbone: BackboneSection = Field(default_factory=BackboneSection)
    lora: LoraSection = Field(default_factory=LoraSection)
    targets: TargetsSection = Field(default_factory=TargetsSection)
    degradation: DegradationSection = Field(default_factory=DegradationSection)
    train: TrainSection = Field(default_factory=TrainSection)
    metrics: MetricsSection = Field(default_factory=MetricsSection)
    paths: PathsSection = Field(default_factory=PathsSection)

    @model_validator(mode="after")
    def _scales_agree(self) -> "RunConfig":
        if self.degradation.downscale != self.backbone.upscale:
            raise ValueError(
                f"degradation.downscale ({self.degradation.downscale}) must equal "
                f"the backbone upscale ({self.backbone.upscale})"
            )
        return self

    @property
    def metric_config(self) -> MetricConfig:
        return self.metrics.build_config(self.backbone.upscale)

    def run_path(self) -> Path:
        if not self.paths.run_dir:
            raise InvalidConfigError("paths.run_dir is not set")
        path = Path(self.paths.run_dir)
        return path if path.is_absolute() else Path(RUNS_DIR) / path

    def validate_domain(self) -> None:
        """Builds every dataclass once so their own checks run up front."""
        self.backbone.build_config()
        self.lora.build_config()
        self.targets.build_spec()
        self.degradation.build_config()
        self.degradation.build_sampler().check(self.degradation.build_config())
        self.degradation.corpus.build_config()
        self.train.build_config()
        self.metric_config


# =========================
# LOAD / DUMP / OVERRIDES
# =========================
def parse_overrides(tokens: Sequence[str]) -> Dict[str, str]:
    """
    ["--train.iters", "200", "--lora.alpha=0.5"] → {"train.iters": "200", "lora.alpha": "0.5"}
    """
    overrides: Dict[str, str] = {}
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if not token.startswith("--") or "." not in token.split("=", 1)[0]:
            raise InvalidConfigError(f"unrecognized argument {token!r}; overrides look like --section.key value")
        key = token[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            if i + 1 >= len(tokens):
                raise InvalidConfigError(f"override {token} is missing a value")
            i += 1
            value = tokens[i]
        overrides[key] = value
        i += 1
    return overrides


def set_dotted(data: Dict[str, Any], dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = data
    for key in keys[:-1]:
        child = node.setdefault(key, {})
        if not isinstance(child, dict):
            raise InvalidConfigError(f"cannot set {dotted}: {key} is not a section")
        node = child
    node[keys[-1]] = value


def apply_overrides(data: Dict[str, Any], overrides: Dict[str, str]) -> Dict[str, Any]:
    """Values are parsed as YAML scalars / flow collections."""
    for dotted, raw in overrides.items():
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as e:
            raise InvalidConfigError(f"bad value for {dotted}: {e}") from e
        set_dotted(data, dotted, value)
    return data


def validate_run_config(data: Dict[str, Any]) -> RunConfig:
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as e:
        raise InvalidConfigError(f"invalid run config:\n{e}") from e
    cfg.validate_domain()
    return cfg


def load_run_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Dict[str, str]] = None,
    fixed: Optional[Dict[str, Any]] = None,
) -> RunConfig:
    """
    Layers: defaults < YAML file < `--section.key` overrides < `fixed`
    (already-typed values a command pins, e.g. train.mode).
    """
    data: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise InvalidConfigError(f"config file {path} does not exist")
        try:
            loaded = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as e:
            raise InvalidConfigError(f"{path} is not valid YAML: {e}") from e
        if not isinstance(loaded, dict):
            raise InvalidConfigError(f"{path} must hold a mapping of sections")
        data = copy.deepcopy(loaded)

    apply_overrides(data, overrides or {})
    for dotted, value in (fixed or {}).items():
        set_dotted(data, dotted, value)
    return validate_run_config(data)


def dump_run_config(cfg: RunConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False))
    logger.debug(f"[Config] Wrote resolved config to {path}")
    return path
