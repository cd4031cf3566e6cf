import copy
import logging
from typing import Iterator, List, Tuple

import torch.nn as nn

from adaptsr.backbones.models import LayerRegistry
from adaptsr.backbones.registry import build_registry, count_base_params
from adaptsr.errors import AdapterStateError
from adaptsr.injection.models import InjectionReport, InjectionState, LayerReport, TargetSpec
from adaptsr.injection.targets import resolve_targets
from adaptsr.lora.layers import LoraConv2d, LoraLayer, LoraLinear
from adaptsr.lora.models import LoraConfig, MergeState

logger = logging.getLogger(__name__)


def is_injected(model: nn.Module) -> bool:
    return any(isinstance(m, LoraLayer) for m in model.modules())


def named_adapters(model: nn.Module) -> Iterator[Tuple[str, LoraLayer]]:
    for name, module in model.named_modules():
        if isinstance(module, LoraLayer):
            yield name, module


def _split(name: str) -> Tuple[str, str]:
    parent, _, attr = name.rpartition(".")
    return parent, attr


def _replace(model: nn.Module, name: str, module: nn.Module) -> None:
    parent, attr = _split(name)
    setattr(model.get_submodule(parent) if parent else model, attr, module)


# =========================
# INJECT
# =========================
def inject(
    model: nn.Module,
    registry: LayerRegistry,
    spec: TargetSpec,
    cfg: LoraConfig,
) -> Tuple[nn.Module, InjectionReport]:
    """
    Wraps every targeted layer with an adapter and freezes every base
    parameter (targeted or not, including biases and norms). Because B starts
    at zero the model's forward is unchanged.

    Adapter seeds are cfg.seed + the layer's registry index, so each layer gets
    its own reproducible A.
    """
    if is_injected(model):
        raise AdapterStateError("model is already injected")

    targets = set(resolve_targets(registry, spec))
    for param in model.parameters():
        param.requires_grad = False

    wrapped: List[str] = []
    for index, entry in enumerate(registry):
        if entry.name not in targets:
            continue
        layer = model.get_submodule(entry.name)
        layer_cfg = cfg.with_seed(cfg.seed + index)
        if isinstance(layer, nn.Conv2d):
            adapter = LoraConv2d(layer, layer_cfg)
        else:
            adapter = LoraLinear(layer, layer_cfg)
        _replace(model, entry.name, adapter)
        wrapped.append(entry.name)

    model.injection = InjectionState(
        backbone_id=registry.backbone_id,
        spec=spec,
        rank=cfg.rank,
        alpha=cfg.alpha,
        seed=cfg.seed,
        targets=wrapped,
    )

    report = count_params(model)
    logger.info(
        f"[Injector] Wrapped {len(wrapped)} layers ({spec.label()}, r={cfg.rank}, α={cfg.alpha}) | "
        f"{report.lora_total:,} adapter params = {100 * report.fraction_of_model:.2f}% of the model"
    )
    return model, report


# =========================
# PARAMETER ACCOUNTING
# =========================
def count_params(model: nn.Module) -> InjectionReport:
    """
    One row per registry weight; adapted rows carry r·(fan_in + fan_out).
    """
    if not is_injected(model):
        raise AdapterStateError("count_params needs an injected model")

    rows = []
    for entry in build_registry(model):
        module = model.get_submodule(entry.name)
        lora = module.lora_param_count if isinstance(module, LoraLayer) else 0
        rows.append(LayerReport(
            name=entry.name,
            kind=entry.kind.value,
            base_params=entry.base_params,
            lora_params=lora,
        ))

    return InjectionReport(
        rows=tuple(rows),
        base_total=sum(r.base_params for r in rows),
        lora_total=sum(r.lora_params for r in rows),
        model_total=count_base_params(model),
    )


# =========================
# MERGE
# =========================
def merge_all(model: nn.Module) -> nn.Module:
    """
    Returns a plain copy of the model with every adapter folded into its base
    weight and the adapter wrappers removed. The injected model is untouched.
    """
    adapters = list(named_adapters(model))
    if not adapters:
        raise AdapterStateError("merge_all needs an injected model")
    if any(a.state is MergeState.MERGED for _, a in adapters):
        raise AdapterStateError("model is partially merged; unmerge_all first")

    merged = copy.deepcopy(model)
    for name, adapter in list(named_adapters(merged)):
        adapter.merge()
        _replace(merged, name, adapter.base)

    if hasattr(merged, "injection"):
        del merged.injection
    for param in merged.parameters():
        param.requires_grad = True

    logger.info(f"[Injector] Merged {len(adapters)} adapters into a plain {model.backbone_id}")
    return merged


def merge_in_place(model: nn.Module) -> None:
    adapters = list(named_adapters(model))
    if not adapters:
        raise AdapterStateError("merge_in_place needs an injected model")
    if any(a.state is MergeState.MERGED for _, a in adapters):
        raise AdapterStateError("some adapters are already merged")
    for _, adapter in adapters:
        adapter.merge()


def unmerge_all(model: nn.Module) -> None:
    adapters = list(named_adapters(model))
    if not adapters:
        raise AdapterStateError("unmerge_all needs an injected model")
    if any(a.state is MergeState.WRAPPED for _, a in adapters):
        raise AdapterStateError("some adapters are not merged")
    for _, adapter in adapters:
        adapter.unmerge()


def adapter_parameters(model: nn.Module) -> List[nn.Parameter]:
    params = []
    for _, adapter in named_adapters(model):
        params.extend([adapter.lora_A, adapter.lora_B])
    return params
