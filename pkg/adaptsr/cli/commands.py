import argparse
import csv
import logging
from pathlib import Path
from typing import Any, Callable, Dict, List

import torch

from adaptsr.backbones.checkpoint import load_backbone, save_backbone
from adaptsr.backbones.factory import build_backbone
from adaptsr.cli.report import format_compare, format_injection_report, format_metrics, format_sweep
from adaptsr.config.schema import RESOLVED_NAME, RunConfig, dump_run_config, load_run_config
from adaptsr.data.corpus import load_corpus, save_corpus
from adaptsr.data.resize import BicubicUpsampler
from adaptsr.errors import AdapterStateError, InvalidConfigError
from adaptsr.injection.injector import count_params, inject, merge_all
from adaptsr.injection.models import TargetSpec
from adaptsr.training.history import read_metrics_json
from adaptsr.training.models import TrainMode
from adaptsr.training.trainer import evaluate
from adaptsr.training.workflow import (
    backbone_fields,
    build_validation,
    evaluate_checkpoint,
    execute_run,
    load_run_model,
)

logger = logging.getLogger(__name__)

Overrides = Dict[str, str]

MERGE_CHECK_INPUTS = 100
MERGE_CHECK_SIZE = 16
MERGE_CHECK_EPS = 1e-3  # in pixel units; outputs live in [0, 1]


def _config(args: argparse.Namespace, overrides: Overrides, **forced: Any) -> RunConfig:
    """--config file < --section.key overrides < values the command itself fixes."""
    return load_run_config(args.config, overrides, fixed=forced)


def _abs(path: str) -> str:
    return str(Path(path).resolve())


# =========================
# gen-data
# =========================
def cmd_gen_data(args: argparse.Namespace, overrides: Overrides) -> int:
    cfg = _config(args, overrides)
    corpus_cfg = cfg.degradation.corpus.build_config()
    images = load_corpus(corpus_cfg)
    manifest = save_corpus(images, args.out, seed=corpus_cfg.seed if corpus_cfg.source == "synthetic" else None)
    dump_run_config(cfg, Path(args.out) / RESOLVED_NAME)
    print(f"[gen-data] wrote {manifest['count']} images to {args.out}")
    return 0


# =========================
# pretrain / adapt / finetune
# =========================
def _train(args: argparse.Namespace, overrides: Overrides, mode: TrainMode) -> int:
    forced = {"train.mode": mode.value, "paths.run_dir": _abs(args.run_dir)}
    if getattr(args, "base", None):
        forced["paths.base_checkpoint"] = _abs(args.base)
    cfg = _config(args, overrides, **forced)

    history, model, cfg = execute_run(cfg)
    run_dir = cfg.run_path()

    lines = [f"run: {run_dir}", f"mode: {mode.value}", f"backbone: {cfg.backbone.name}"]
    if mode is TrainMode.LORA:
        lines.append(format_injection_report(count_params(model)))
    final = history.final_eval
    if final is not None:
        lines.append(format_metrics(final[1], final[2], label=f"final (iter {final[0]})"))
    lines.append(f"wall time: {history.wall_time:.1f}s")
    report = "\n".join(lines)
    (run_dir / "report.txt").write_text(report + "\n")
    print(report)
    return 0


def cmd_pretrain(args: argparse.Namespace, overrides: Overrides) -> int:
    return _train(args, overrides, TrainMode.PRETRAIN)


def cmd_adapt(args: argparse.Namespace, overrides: Overrides) -> int:
    return _train(args, overrides, TrainMode.LORA)


def cmd_finetune(args: argparse.Namespace, overrides: Overrides) -> int:
    return _train(args, overrides, TrainMode.FULL_FT)


# =========================
# inject-report
# =========================
def cmd_inject_report(args: argparse.Namespace, overrides: Overrides) -> int:
    forced: Dict[str, Any] = {}
    if args.backbone:
        forced["backbone.name"] = args.backbone
    if args.rank is not None:
        forced["lora.rank"] = args.rank
    if args.alpha is not None:
        forced["lora.alpha"] = args.alpha
    cfg = _config(args, overrides, **forced)

    if args.base:
        model, registry = load_backbone(args.base)
    else:
        model, registry = build_backbone(cfg.backbone.name, cfg.backbone.build_config(), seed=cfg.backbone.seed)
    spec = TargetSpec.parse(args.targets) if args.targets else cfg.targets.build_spec()
    _, report = inject(model, registry, spec, cfg.lora.build_config())

    title = f"{model.backbone_id} | targets {spec.label()} | r={cfg.lora.rank} α={cfg.lora.alpha}"
    print(format_injection_report(report, title=title))
    return 0


# =========================
# merge
# =========================
def max_relative_deviation(
    wrapped: torch.nn.Module,
    merged: torch.nn.Module,
    in_chans: int,
    seed: int = 0,
    eps: float = MERGE_CHECK_EPS,
) -> float:
    """
    Largest elementwise |wrapped − merged| / (|wrapped| + eps) over seeded
    random LR inputs, in the models' own dtype.
    """
    dtype = next(wrapped.parameters()).dtype
    generator = torch.Generator().manual_seed(seed)
    inputs = torch.rand(
        MERGE_CHECK_INPUTS, in_chans, MERGE_CHECK_SIZE, MERGE_CHECK_SIZE, generator=generator, dtype=dtype
    )
    wrapped.eval()
    merged.eval()
    worst = 0.0
    with torch.no_grad():
        for chunk in inputs.split(10):
            a, b = wrapped(chunk), merged(chunk)
            worst = max(worst, float(((a - b).abs() / (a.abs() + eps)).max()))
    return worst


def cmd_merge(args: argparse.Namespace, overrides: Overrides) -> int:
    model, cfg = load_run_model(args.run_dir)
    if TrainMode(cfg.train.mode) is not TrainMode.LORA:
        raise AdapterStateError(f"{args.run_dir} is a {cfg.train.mode} run; only adapter runs can be merged")

    merged = merge_all(model)
    deviation = max_relative_deviation(model, merged, model.config.in_chans)
    save_backbone(merged, args.out)
    print(f"[merge] wrote {args.out}")
    print(f"[merge] max relative deviation (wrapped vs merged, {MERGE_CHECK_INPUTS} inputs): {deviation}")
    return 0


# =========================
# eval
# =========================
def cmd_eval(args: argparse.Namespace, overrides: Overrides) -> int:
    if args.run_dir:
        model, cfg = load_run_model(args.run_dir)
        if args.bicubic:
            pairs = build_validation(cfg, TrainMode(cfg.train.mode))
            psnr_db, ssim_value = evaluate(BicubicUpsampler(cfg.backbone.upscale), pairs, cfg.metric_config)
        else:
            psnr_db, ssim_value = evaluate_checkpoint(args.run_dir)
        label = Path(args.run_dir).name
    else:
        model, _ = load_backbone(args.checkpoint)
        cfg = _config(args, overrides, **backbone_fields(model))
        pairs = build_validation(cfg, TrainMode(cfg.train.mode))
        if args.bicubic:
            model = BicubicUpsampler(model.config.upscale)
        psnr_db, ssim_value = evaluate(model, pairs, cfg.metric_config)
        label = Path(args.checkpoint).name

    if args.bicubic:
        label += " (bicubic)"
    print(format_metrics(psnr_db, ssim_value, label=label))
    return 0


# =========================
# compare / sweep
# =========================
def compare_rows(run_dirs: List[str]) -> List[Dict[str, Any]]:
    rows = []
    for run in run_dirs:
        path = Path(run) / "metrics.json"
        if not path.is_file():
            raise InvalidConfigError(f"{run} has no metrics.json; is it a finished run?")
        m = read_metrics_json(path)
        rows.append({
            "model": f"{Path(run).name} ({m['mode']})",
            "trainable_params": m["trainable_params"],
            "fraction": m["trainable_params"] / m["model_params"],
            "psnr": m.get("psnr"),
            "ssim": m.get("ssim"),
            "wall_time": m.get("wall_time", 0.0),
        })
    return rows


def cmd_compare(args: argparse.Namespace, overrides: Overrides) -> int:
    print(format_compare(compare_rows(args.runs)))
    return 0


SWEEP_COLUMNS = ["preset", "rank", "alpha", "trainable_params", "fraction", "psnr", "ssim", "wall_time"]


def cmd_sweep(args: argparse.Namespace, overrides: Overrides) -> int:
    parent = Path(_abs(args.run_dir))
    rows = []
    for preset in args.presets:
        for rank in args.ranks:
            for alpha in args.alphas:
                name = f"{preset}_r{rank}_a{alpha:g}"
                logger.info(f"[Sweep] {name}")
                cfg = _config(
                    args, overrides,
                    **{
                        "train.mode": TrainMode.LORA.value,
                        "paths.run_dir": str(parent / name),
                        "paths.base_checkpoint": _abs(args.base),
                        "targets.preset": preset,
                        "targets.patterns": [],
                        "lora.rank": rank,
                        "lora.alpha": alpha,
                    },
                )
                history, model, _ = execute_run(cfg)
                report = count_params(model)
                final = history.final_eval
                rows.append({
                    "preset": preset,
                    "rank": rank,
                    "alpha": alpha,
                    "trainable_params": report.lora_total,
                    "fraction": report.fraction_of_model,
                    "psnr": final[1] if final else None,
                    "ssim": final[2] if final else None,
                    "wall_time": history.wall_time,
                })

    parent.mkdir(parents=True, exist_ok=True)
    with (parent / "sweep.csv").open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    print(format_sweep(rows))
    return 0


COMMANDS: Dict[str, Callable[[argparse.Namespace, Overrides], int]] = {
    "gen-data": cmd_gen_data,
    "pretrain": cmd_pretrain,
    "inject-report": cmd_inject_report,
    "adapt": cmd_adapt,
    "finetune": cmd_finetune,
    "merge": cmd_merge,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
}
