from fnmatch import fnmatchcase
from typing import List

from adaptsr.backbones.models import CONV_GROUPS, LayerGroup, LayerKind, LayerRegistry
from adaptsr.errors import TargetResolutionError
from adaptsr.injection.models import TargetSpec


def resolve_targets(registry: LayerRegistry, spec: TargetSpec) -> List[str]:
    """
    Resolves a preset or pattern list to registry names, in registry order.

    "all" is every registry entry (convs ∪ msa ∪ mlp), "convs" every conv group;
    the other presets name one group. Overlapping patterns collapse, so a layer
    is selected at most once.
    """
    if spec.preset is not None:
        selected = _resolve_preset(registry, spec.preset)
    else:
        selected = set()
        for pattern in spec.patterns:
            matched = {e.name for e in registry if fnmatchcase(e.name, pattern)}
            if not matched:
                raise TargetResolutionError(
                    f"pattern {pattern!r} matches no layer of {registry.backbone_id}"
                )
            selected |= matched

    names = [e.name for e in registry if e.name in selected]
    if not names:
        raise TargetResolutionError(f"{spec.label()!r} selects no layer of {registry.backbone_id}")
    return names


def _resolve_preset(registry: LayerRegistry, preset: str) -> set:
    if preset == "all":
        return set(registry.names())
    if preset == "convs":
        return {e.name for e in registry if e.kind is LayerKind.CONV and e.group in CONV_GROUPS}

    group = LayerGroup(preset)
    matched = {e.name for e in registry.in_group(group)}
    if not matched:
        raise TargetResolutionError(f"preset {preset!r} is not available on {registry.backbone_id}")
    return matched
