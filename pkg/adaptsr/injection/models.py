from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from adaptsr.errors import InvalidConfigError

PRESETS = (
    "all",
    "convs",
    "msa",
    "mlp",
    "first_conv",
    "rstlb_convs",
    "dfe_convs",
    "bu_conv",
    "au_conv",
    "rlb_convs",
)


# =========================
# Target Spec
# A named preset or an explicit list of dotted-name glob patterns
# =========================
@dataclass(frozen=True)
class TargetSpec:
    preset: Optional[str] = None
    patterns: Tuple[str, ...] = ()

    def __post_init__(self):
        if (self.preset is None) == (not self.patterns):
            raise InvalidConfigError("a TargetSpec needs exactly one of preset or patterns")
        if self.preset is not None and self.preset not in PRESETS:
            raise InvalidConfigError(f"unknown preset {self.preset!r}; expected one of {list(PRESETS)}")

    @classmethod
    def parse(cls, text: str) -> "TargetSpec":
        """
        "convs" → preset; "rlbs.0.*,au_conv" → explicit patterns.
        """
        text = text.strip()
        if text in PRESETS:
            return cls(preset=text)
        patterns = tuple(p.strip() for p in text.split(",") if p.strip())
        return cls(patterns=patterns)

    def to_dict(self) -> Dict[str, Any]:
        return {"preset": self.preset, "patterns": list(self.patterns)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TargetSpec":
        return cls(preset=data.get("preset"), patterns=tuple(data.get("patterns") or ()))

    def label(self) -> str:
        return self.preset if self.preset is not None else ",".join(self.patterns)


# =========================
# Injection Report
# =========================
@dataclass(frozen=True)
class LayerReport:
    name: str
    kind: str
    base_params: int                   # weight entries of the base layer
    lora_params: int                   # r·(fan_in + fan_out), 0 when not adapted


@dataclass(frozen=True)
class InjectionReport:
    rows: Tuple[LayerReport, ...]
    base_total: int                    # sum of rows' base_params (every registry weight)
    lora_total: int                    # sum of rows' lora_params
    model_total: int                   # every base parameter incl. biases, norms, position tables

    @property
    def trainable_fraction(self) -> float:
        return self.lora_total / self.base_total if self.base_total else 0.0

    @property
    def fraction_of_model(self) -> float:
        return self.lora_total / self.model_total if self.model_total else 0.0

    @property
    def adapted_rows(self) -> List[LayerReport]:
        return [r for r in self.rows if r.lora_params > 0]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rows": [
                {"name": r.name, "kind": r.kind, "base_params": r.base_params, "lora_params": r.lora_params}
                for r in self.rows
            ],
            "base_total": self.base_total,
            "lora_total": self.lora_total,
            "model_total": self.model_total,
            "trainable_fraction": self.trainable_fraction,
            "fraction_of_model": self.fraction_of_model,
        }


# =========================
# Injection State
# Kept on an injected model; feeds adapter checkpoints
# =========================
@dataclass
class InjectionState:
    backbone_id: str
    spec: TargetSpec
    rank: int
    alpha: float
    seed: int
    targets: List[str] = field(default_factory=list)

    def meta(self) -> Dict[str, Any]:
        return {
            "backbone_id": self.backbone_id,
            "spec": self.spec.to_dict(),
            "rank": self.rank,
            "alpha": self.alpha,
            "seed": self.seed,
        }
