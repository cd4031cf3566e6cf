from adaptsr.injection.checkpoint import load_adapters, read_adapter_file, restore_adapters, save_adapters
from adaptsr.injection.injector import (
    adapter_parameters,
    count_params,
    inject,
    is_injected,
    merge_all,
    merge_in_place,
    named_adapters,
    unmerge_all,
)
from adaptsr.injection.models import PRESETS, InjectionReport, InjectionState, LayerReport, TargetSpec
from adaptsr.injection.targets import resolve_targets
