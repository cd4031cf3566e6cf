import pytest
import torch
import torch.nn as nn

from adaptsr.backbones import build_registry, count_base_params, load_backbone, save_backbone
from adaptsr.backbones import TinyEdsrConfig, TinySwinConfig, build_tiny_edsr, build_tiny_swin
from adaptsr.errors import AdapterStateError, CheckpointIncompatibleError, InvalidConfigError, TargetResolutionError
from adaptsr.injection import (
    TargetSpec,
    adapter_parameters,
    count_params,
    inject,
    is_injected,
    load_adapters,
    merge_all,
    merge_in_place,
    named_adapters,
    resolve_targets,
    restore_adapters,
    save_adapters,
    unmerge_all,
)
from adaptsr.lora import LoraConfig, LoraLayer, MergeState

EDSR_PRESETS = ["all", "convs", "first_conv", "rlb_convs", "bu_conv", "au_conv"]
SWIN_PRESETS = ["all", "convs", "msa", "mlp", "first_conv", "rstlb_convs", "dfe_convs", "bu_conv", "au_conv"]


def _build(name):
    if name == "tiny-edsr":
        return build_tiny_edsr(TinyEdsrConfig(), seed=0)
    return build_tiny_swin(TinySwinConfig(), seed=0)


def _train_like(model, seed=0):
    """Gives every B a nonzero value, standing in for a training run."""
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for _, adapter in named_adapters(model):
            adapter.lora_B.copy_(torch.randn(adapter.lora_B.shape, generator=generator) * 0.05)


def _outputs(model, inputs):
    model.eval()
    with torch.no_grad():
        return torch.cat([model(chunk) for chunk in inputs.split(25)])


# =========================
# target resolution
# =========================
def test_resolve_presets(tiny_edsr, tiny_swin):
    _, edsr = tiny_edsr
    _, swin = tiny_swin

    assert len(resolve_targets(edsr, TargetSpec(preset="convs"))) == 11
    assert resolve_targets(edsr, TargetSpec(preset="first_conv")) == ["first_conv"]

    msa = resolve_targets(swin, TargetSpec(preset="msa"))
    assert len(msa) == 8
    assert all(name.endswith(("attn.qkv", "attn.proj")) for name in msa)
    assert resolve_targets(swin, TargetSpec(preset="all")) == swin.names()
    assert len(resolve_targets(swin, TargetSpec(preset="convs"))) == 6


def test_resolve_patterns_collapse_and_keep_order(tiny_edsr):
    _, registry = tiny_edsr
    names = resolve_targets(registry, TargetSpec.parse("au_conv,rlbs.0.*,rlbs.0.conv1"))
    assert names == ["rlbs.0.conv1", "rlbs.0.conv2", "au_conv"]
    assert resolve_targets(registry, TargetSpec.parse("au_conv,rlbs.0.*")) == names


def test_resolve_errors(tiny_edsr):
    _, registry = tiny_edsr
    with pytest.raises(TargetResolutionError):
        resolve_targets(registry, TargetSpec(preset="msa"))
    with pytest.raises(TargetResolutionError):
        resolve_targets(registry, TargetSpec(preset="dfe_convs"))
    with pytest.raises(TargetResolutionError):
        resolve_targets(registry, TargetSpec.parse("rlbs.9.*"))
    with pytest.raises(InvalidConfigError):
        TargetSpec(preset="everything")


# =========================
# inject
# =========================
@pytest.mark.filterwarnings("ignore::UserWarning")
@pytest.mark.parametrize(
    "backbone,preset",
    [("tiny-edsr", p) for p in EDSR_PRESETS] + [("tiny-swin", p) for p in SWIN_PRESETS],
)
def test_zero_init_identity(backbone, preset, lr_inputs):
    for rank in (1, 4, 8):
        model, registry = _build(backbone)
        expected = _outputs(model, lr_inputs)
        inject(model, registry, TargetSpec(preset=preset), LoraConfig(rank=rank))
        assert torch.equal(_outputs(model, lr_inputs), expected)


def test_inject_freezes_base(tiny_swin):
    model, registry = tiny_swin
    inject(model, registry, TargetSpec(preset="msa"), LoraConfig(rank=4))

    trainable = {name for name, p in model.named_parameters() if p.requires_grad}
    assert trainable
    assert all(name.endswith(("lora_A", "lora_B")) for name in trainable)
    assert len(adapter_parameters(model)) == 2 * 8
    assert model.injection.targets == resolve_targets(registry, TargetSpec(preset="msa"))


def test_adapter_seeds_follow_registry_index(tiny_edsr):
    model, registry = tiny_edsr
    inject(model, registry, TargetSpec(preset="convs"), LoraConfig(rank=2, seed=10))
    adapters = dict(named_adapters(model))
    first = adapters["first_conv"].lora_A
    reference = torch.randn(first.shape, generator=torch.Generator().manual_seed(10)) * 0.02
    assert torch.equal(first.detach(), reference)
    assert not torch.equal(adapters["rlbs.0.conv1"].lora_A, adapters["rlbs.0.conv2"].lora_A)


def test_double_injection(tiny_edsr):
    model, registry = tiny_edsr
    inject(model, registry, TargetSpec(preset="first_conv"), LoraConfig(rank=2))
    with pytest.raises(AdapterStateError):
        inject(model, registry, TargetSpec(preset="au_conv"), LoraConfig(rank=2))


# =========================
# accounting
# =========================
def _brute_force(model):
    lora, base = 0, 0
    for module in model.modules():
        if isinstance(module, LoraLayer):
            lora += module.lora_A.numel() + module.lora_B.numel()
        elif isinstance(module, (nn.Linear, nn.Conv2d)):
            base += module.weight.numel()
    return lora, base


@pytest.mark.filterwarnings("ignore::UserWarning")
@pytest.mark.parametrize("backbone,preset,rank", [
    ("tiny-edsr", "all", 1),
    ("tiny-edsr", "rlb_convs", 8),
    ("tiny-edsr", "au_conv", 4),
    ("tiny-swin", "all", 8),
    ("tiny-swin", "msa", 4),
    ("tiny-swin", "mlp", 1),
    ("tiny-swin", "first_conv", 8),
])
def test_report_matches_enumeration(backbone, preset, rank):
    plain, _ = _build(backbone)
    plain_total = sum(p.numel() for p in plain.parameters())

    model, registry = _build(backbone)
    _, report = inject(model, registry, TargetSpec(preset=preset), LoraConfig(rank=rank))
    lora, base = _brute_force(model)

    assert report.lora_total == lora
    assert report.base_total == base
    assert report.model_total == plain_total
    assert len(report.rows) == len(registry)
    assert report.trainable_fraction == lora / base
    assert count_params(model) == report


@pytest.mark.filterwarnings("ignore::UserWarning")
@pytest.mark.parametrize("backbone", ["tiny-edsr", "tiny-swin"])
def test_adapter_count_is_linear_in_rank(backbone):
    totals = {}
    for rank in (1, 8, 64):
        model, registry = _build(backbone)
        _, report = inject(model, registry, TargetSpec(preset="all"), LoraConfig(rank=rank))
        totals[rank] = report.lora_total
    assert totals[8] == 8 * totals[1]
    assert totals[64] == 64 * totals[1]


def test_fraction_grows_with_preset():
    fractions = []
    for preset in ("first_conv", "convs", "all"):
        model, registry = build_tiny_swin(TinySwinConfig())
        _, report = inject(model, registry, TargetSpec(preset=preset), LoraConfig(rank=8))
        fractions.append(report.trainable_fraction)
    assert fractions[0] < fractions[1] < fractions[2]


def test_swin_all_fraction(tiny_swin):
    model, registry = tiny_swin
    _, report = inject(model, registry, TargetSpec(preset="all"), LoraConfig(rank=8))
    expected = sum(e.lora_params(8) for e in registry) / sum(e.base_params for e in registry)
    assert report.trainable_fraction == pytest.approx(expected)
    assert report.fraction_of_model < 0.15


def test_count_params_needs_injection(tiny_edsr):
    model, _ = tiny_edsr
    with pytest.raises(AdapterStateError):
        count_params(model)


# =========================
# merge
# =========================
@pytest.mark.parametrize("backbone", ["tiny-edsr", "tiny-swin"])
def test_merge_all_matches_wrapped(backbone, lr_inputs):
    plain, _ = _build(backbone)
    model, registry = _build(backbone)
    inject(model, registry, TargetSpec(preset="all"), LoraConfig(rank=8))
    _train_like(model)
    model.double()

    merged = merge_all(model)
    wrapped_out = _outputs(model, lr_inputs.double())
    merged_out = _outputs(merged, lr_inputs.double())

    assert not is_injected(merged)
    assert not hasattr(merged, "injection")
    assert count_base_params(merged) == count_base_params(plain)
    assert sum(p.numel() for p in merged.parameters()) == sum(p.numel() for p in plain.parameters())
    assert build_registry(merged).names() == registry.names()
    deviation = (wrapped_out - merged_out).abs() / (wrapped_out.abs() + 1e-9)
    assert float(deviation.max()) <= 1e-5


def test_merge_all_with_zero_b_is_bitwise(tiny_edsr):
    plain, _ = build_tiny_edsr(TinyEdsrConfig(), seed=0)
    model, registry = tiny_edsr
    inject(model, registry, TargetSpec(preset="convs"), LoraConfig(rank=4))
    merged = merge_all(model)

    expected = plain.state_dict()
    for key, value in merged.state_dict().items():
        assert torch.equal(value, expected[key]), key


def test_merged_model_saves_as_plain_backbone(tiny_edsr, tmp_path):
    model, registry = tiny_edsr
    inject(model, registry, TargetSpec(preset="convs"), LoraConfig(rank=4))
    _train_like(model)
    merged = merge_all(model)

    loaded, _ = load_backbone(save_backbone(merged, tmp_path / "merged.ckpt"))
    x = torch.rand(2, 3, 8, 8)
    with torch.no_grad():
        assert torch.equal(loaded(x), merged(x))


def test_merge_in_place_round_trip(tiny_swin):
    model, registry = tiny_swin
    before = {k: v.clone() for k, v in model.state_dict().items()}
    inject(model, registry, TargetSpec(preset="all"), LoraConfig(rank=4))
    _train_like(model, seed=3)

    merge_in_place(model)
    assert all(a.state is MergeState.MERGED for _, a in named_adapters(model))
    with pytest.raises(AdapterStateError):
        merge_all(model)
    with pytest.raises(AdapterStateError):
        merge_in_place(model)

    unmerge_all(model)
    for name, adapter in named_adapters(model):
        torch.testing.assert_close(adapter.base.weight, before[f"{name}.weight"], rtol=0, atol=1e-6)
    with pytest.raises(AdapterStateError):
        unmerge_all(model)


def test_merge_needs_adapters(tiny_edsr):
    model, _ = tiny_edsr
    with pytest.raises(AdapterStateError):
        merge_all(model)


# =========================
# adapter checkpoints
# =========================
def test_adapter_checkpoint_round_trip(tiny_swin, tmp_path, lr_inputs):
    model, registry = tiny_swin
    inject(model, registry, TargetSpec(preset="all"), LoraConfig(rank=8, alpha=0.5))
    _train_like(model)
    path = save_adapters(model, tmp_path / "adapters.ckpt")

    fresh, fresh_registry = build_tiny_swin(TinySwinConfig(), seed=0)
    restored, report = restore_adapters(fresh, fresh_registry, path)

    assert report == count_params(model)
    assert restored.injection.alpha == 0.5
    assert torch.equal(_outputs(restored, lr_inputs[:10]), _outputs(model, lr_inputs[:10]))

    base_path = save_backbone(build_tiny_swin(TinySwinConfig(), seed=0)[0], tmp_path / "base.ckpt")
    assert path.stat().st_size < 0.25 * base_path.stat().st_size


def test_adapter_checkpoint_rank_mismatch(tmp_path):
    model, registry = build_tiny_edsr(TinyEdsrConfig(), seed=0)
    inject(model, registry, TargetSpec(preset="convs"), LoraConfig(rank=8))
    path = save_adapters(model, tmp_path / "r8.ckpt")

    other, other_registry = build_tiny_edsr(TinyEdsrConfig(), seed=0)
    inject(other, other_registry, TargetSpec(preset="convs"), LoraConfig(rank=4))
    with pytest.raises(CheckpointIncompatibleError):
        load_adapters(other, path)


def test_adapter_checkpoint_target_mismatch(tmp_path):
    model, registry = build_tiny_edsr(TinyEdsrConfig(), seed=0)
    inject(model, registry, TargetSpec(preset="convs"), LoraConfig(rank=2))
    path = save_adapters(model, tmp_path / "convs.ckpt")

    other, other_registry = build_tiny_edsr(TinyEdsrConfig(), seed=0)
    inject(other, other_registry, TargetSpec(preset="first_conv"), LoraConfig(rank=2))
    with pytest.raises(CheckpointIncompatibleError):
        load_adapters(other, path)


def test_adapter_checkpoint_needs_injected_model(tiny_edsr, tmp_path):
    model, _ = tiny_edsr
    with pytest.raises(AdapterStateError):
        save_adapters(model, tmp_path / "none.ckpt")
