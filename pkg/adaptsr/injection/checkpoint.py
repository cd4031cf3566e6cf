import logging
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import torch
import torch.nn as nn

from adaptsr.backbones.models import LayerRegistry
from adaptsr.errors import AdapterStateError, CheckpointIncompatibleError
from adaptsr.injection.injector import inject, named_adapters
from adaptsr.injection.models import InjectionReport, TargetSpec
from adaptsr.lora.models import LoraConfig

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def _state(model: nn.Module):
    state = getattr(model, "injection", None)
    if state is None:
        raise AdapterStateError("model has no adapters; call inject first")
    return state


def save_adapters(model: nn.Module, path: Union[str, Path]) -> Path:
    """
    Writes only the adapter factors:
        {format, meta: {backbone_id, spec, rank, alpha, seed},
         weights: {"<name>.A", "<name>.B"},
         layers: {<name>: {alpha, rank, base_shape, kind}}}
    """
    state = _state(model)
    weights: Dict[str, torch.Tensor] = {}
    layers: Dict[str, Dict[str, Any]] = {}
    for name, adapter in named_adapters(model):
        entry = adapter.adapter_state()
        weights[f"{name}.A"] = entry.pop("A")
        weights[f"{name}.B"] = entry.pop("B")
        layers[name] = entry

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"format": FORMAT_VERSION, "meta": state.meta(), "weights": weights, "layers": layers}, path)
    logger.info(f"[Checkpoint] Saved {len(layers)} adapters to {path}")
    return path


def read_adapter_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if not isinstance(payload, dict) or not {"meta", "weights", "layers"} <= set(payload):
        raise CheckpointIncompatibleError(f"{path} is not an adapter checkpoint")
    return payload


def load_adapters(model: nn.Module, path: Union[str, Path]) -> None:
    """
    Loads A/B factors into an already injected model. Backbone, target spec,
    rank and the set of adapted layers must all match the file.
    """
    state = _state(model)
    payload = read_adapter_file(path)
    meta = payload["meta"]

    if meta["backbone_id"] != state.backbone_id:
        raise CheckpointIncompatibleError(
            f"adapters were trained on {meta['backbone_id']}, model is {state.backbone_id}"
        )
    if TargetSpec.from_dict(meta["spec"]) != state.spec:
        raise CheckpointIncompatibleError(
            f"target spec mismatch: file {meta['spec']} vs model {state.spec.to_dict()}"
        )
    if int(meta["rank"]) != state.rank:
        raise CheckpointIncompatibleError(f"rank mismatch: file r={meta['rank']}, model r={state.rank}")

    adapters = dict(named_adapters(model))
    if set(payload["layers"]) != set(adapters):
        missing = sorted(set(adapters) - set(payload["layers"]))
        extra = sorted(set(payload["layers"]) - set(adapters))
        raise CheckpointIncompatibleError(f"adapted layers differ (missing {missing}, unexpected {extra})")

    for name, adapter in adapters.items():
        entry = dict(payload["layers"][name])
        entry["A"] = payload["weights"][f"{name}.A"]
        entry["B"] = payload["weights"][f"{name}.B"]
        adapter.load_adapter_state(entry)

    state.alpha = float(meta["alpha"])
    logger.info(f"[Checkpoint] Loaded {len(adapters)} adapters from {path}")


def restore_adapters(
    model: nn.Module,
    registry: LayerRegistry,
    path: Union[str, Path],
) -> Tuple[nn.Module, InjectionReport]:
    """
    Injects a plain model with the spec/rank/alpha/seed recorded in an adapter
    file and loads its factors.
    """
    meta = read_adapter_file(path)["meta"]
    cfg = LoraConfig(rank=int(meta["rank"]), alpha=float(meta["alpha"]), seed=int(meta["seed"]))
    model, report = inject(model, registry, TargetSpec.from_dict(meta["spec"]), cfg)
    load_adapters(model, path)
    return model, report
