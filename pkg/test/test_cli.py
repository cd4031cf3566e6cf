import csv
import json

import pytest
import torch

from conftest import TINY_RUN, tiny_cli_overrides

from adaptsr.backbones import TinyEdsrConfig, build_tiny_edsr, load_backbone, save_backbone
from adaptsr.cli.commands import max_relative_deviation
from adaptsr.config.schema import RESOLVED_NAME
from adaptsr.injection import TargetSpec, count_params, inject, merge_all, named_adapters
from adaptsr.lora import LoraConfig
from adaptsr.main import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, run_cli


@pytest.fixture(scope="module")
def base_run(tmp_path_factory):
    run_dir = tmp_path_factory.mktemp("runs") / "pre"
    assert run_cli(["pretrain", "--run-dir", str(run_dir)] + tiny_cli_overrides()) == EXIT_OK
    return run_dir


def _base(run_dir):
    return str(run_dir / "checkpoints" / "base.ckpt")


# =========================
# usage errors
# =========================
def test_unknown_command(capsys):
    assert run_cli(["transmogrify"]) == EXIT_USAGE
    err = capsys.readouterr().err
    assert "usage:" in err


def test_missing_required_flag(capsys):
    assert run_cli(["pretrain"]) == EXIT_USAGE
    assert "--run-dir" in capsys.readouterr().err


def test_malformed_override(tmp_path, capsys):
    assert run_cli(["pretrain", "--run-dir", str(tmp_path), "--iters", "5"]) == EXIT_USAGE
    assert "overrides look like" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    assert run_cli(["pretrain", "--run-dir", str(tmp_path), "--train.bogus", "1"]) == EXIT_USAGE
    assert "invalid configuration" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert run_cli(["pretrain", "--run-dir", str(tmp_path), "--config", str(tmp_path / "nope.yaml")]) == EXIT_USAGE


# =========================
# inject-report / gen-data
# =========================
def test_inject_report_totals(capsys):
    argv = ["inject-report", "--backbone", "tiny-edsr", "--targets", "convs", "--rank", "4"]
    assert run_cli(argv + tiny_cli_overrides()) == EXIT_OK
    out = capsys.readouterr().out

    model, registry = build_tiny_edsr(TinyEdsrConfig(n_feats=8, n_resblocks=1), seed=0)
    inject(model, registry, TargetSpec(preset="convs"), LoraConfig(rank=4))
    expected = count_params(model)
    assert f"lora params    : {expected.lora_total:,}" in out
    assert f"base weights   : {expected.base_total:,}" in out
    assert "targets convs" in out


def test_inject_report_patterns(capsys):
    argv = ["inject-report", "--backbone", "tiny-swin", "--targets", "*.qkv,first_conv", "--rank", "2"]
    assert run_cli(argv) == EXIT_OK
    assert "adapted layers : 5 / 22" in capsys.readouterr().out


def test_gen_data(tmp_path, capsys):
    out = tmp_path / "corpus"
    assert run_cli(["gen-data", "--out", str(out)] + tiny_cli_overrides()) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["count"] == 6
    assert len(list(out.glob("*.png"))) == 6
    assert (out / RESOLVED_NAME).is_file()
    assert "wrote 6 images" in capsys.readouterr().out


# =========================
# train / merge / eval
# =========================
def test_pretrain_outputs(base_run):
    for name in (RESOLVED_NAME, "history.csv", "metrics.json", "report.txt", "checkpoints/base.ckpt"):
        assert (base_run / name).is_file(), name
    assert json.loads((base_run / "metrics.json").read_text())["mode"] == "pretrain"


def test_adapt_then_merge_is_exact(base_run, tmp_path, capsys):
    run_dir = tmp_path / "adapt"
    argv = ["adapt", "--run-dir", str(run_dir), "--base", _base(base_run)]
    argv += tiny_cli_overrides(**{"train.iters": 0, "targets.preset": "convs", "lora.rank": 4})
    assert run_cli(argv) == EXIT_OK
    assert (run_dir / "checkpoints" / "adapters.ckpt").is_file()
    capsys.readouterr()

    merged = tmp_path / "merged.ckpt"
    assert run_cli(["merge", "--in", str(run_dir), "--out", str(merged)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "max relative deviation (wrapped vs merged, 100 inputs): 0.0" in out

    model, _ = load_backbone(merged)
    assert model.backbone_id == "tiny-edsr"


def test_merge_needs_adapter_run(base_run, tmp_path, capsys):
    assert run_cli(["merge", "--in", str(base_run), "--out", str(tmp_path / "x.ckpt")]) == EXIT_RUNTIME
    assert "only adapter runs can be merged" in capsys.readouterr().err


def test_adapt_with_missing_base(tmp_path):
    argv = ["adapt", "--run-dir", str(tmp_path / "a"), "--base", str(tmp_path / "missing.ckpt")]
    assert run_cli(argv + tiny_cli_overrides()) == EXIT_RUNTIME


def test_eval(base_run, capsys):
    assert run_cli(["eval", "--run-dir", str(base_run)]) == EXIT_OK
    assert "PSNR" in capsys.readouterr().out

    assert run_cli(["eval", "--run-dir", str(base_run), "--bicubic"]) == EXIT_OK
    assert "(bicubic)" in capsys.readouterr().out

    assert run_cli(["eval", "--checkpoint", _base(base_run)] + tiny_cli_overrides()) == EXIT_OK


def test_finetune_and_compare(base_run, tmp_path, capsys):
    ft_dir = tmp_path / "ft"
    argv = ["finetune", "--run-dir", str(ft_dir), "--base", _base(base_run)] + tiny_cli_overrides()
    assert run_cli(argv) == EXIT_OK
    assert json.loads((ft_dir / "metrics.json").read_text())["mode"] == "full_ft"
    capsys.readouterr()

    assert run_cli(["compare", str(base_run), str(ft_dir)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "pre (pretrain)" in out
    assert "ft (full_ft)" in out


def test_compare_unfinished_run(tmp_path):
    assert run_cli(["compare", str(tmp_path)]) == EXIT_USAGE


def test_sweep(base_run, tmp_path):
    argv = ["sweep", "--run-dir", str(tmp_path / "sweep"), "--base", _base(base_run)]
    argv += ["--presets", "first_conv,convs", "--ranks", "1,4"]
    assert run_cli(argv + tiny_cli_overrides(**{"train.iters": 2})) == EXIT_OK

    with (tmp_path / "sweep" / "sweep.csv").open(newline="") as f:
        rows = list(csv.DictReader(f))
    assert [(r["preset"], r["rank"]) for r in rows] == [("first_conv", "1"), ("first_conv", "4"), ("convs", "1"), ("convs", "4")]
    params = {(r["preset"], r["rank"]): int(r["trainable_params"]) for r in rows}
    assert params[("convs", "4")] == 4 * params[("convs", "1")]
    assert params[("first_conv", "1")] < params[("convs", "1")]
    assert (tmp_path / "sweep" / "convs_r4_a1" / "metrics.json").is_file()


def test_rerun_from_resolved_config(base_run, tmp_path):
    argv = ["pretrain", "--config", str(base_run / RESOLVED_NAME), "--run-dir", str(tmp_path / "again")]
    assert run_cli(argv) == EXIT_OK
    assert (tmp_path / "again" / "history.csv").read_bytes() == (base_run / "history.csv").read_bytes()


def test_eval_checkpoint_takes_backbone_from_file(tmp_path, capsys):
    model, _ = build_tiny_edsr(TinyEdsrConfig(n_feats=8, n_resblocks=1, upscale=2), seed=0)
    path = tmp_path / "x2.ckpt"
    save_backbone(model, path)
    argv = ["eval", "--checkpoint", str(path), "--degradation.downscale", "2"]
    for key, value in TINY_RUN.items():
        if not key.startswith("backbone."):
            argv += [f"--{key}", value]
    assert run_cli([str(a) for a in argv]) == EXIT_OK
    assert "x2.ckpt" in capsys.readouterr().out


def test_merge_deviation_is_elementwise():
    model, registry = build_tiny_edsr(TinyEdsrConfig(n_feats=8, n_resblocks=1), seed=0)
    inject(model, registry, TargetSpec(preset="convs"), LoraConfig(rank=4))
    generator = torch.Generator().manual_seed(0)
    with torch.no_grad():
        for _, adapter in named_adapters(model):
            adapter.lora_B.normal_(0, 0.05, generator=generator)
    model.double()
    merged = merge_all(model)
    assert max_relative_deviation(model, merged, 3, eps=1e-9) <= 1e-5

    with torch.no_grad():
        merged.au_conv.bias += 1e-3
    assert max_relative_deviation(model, merged, 3, eps=1e-9) > 1e-4
