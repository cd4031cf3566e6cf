import argparse
from typing import Dict, List, NoReturn, Optional, Sequence, Tuple

from adaptsr.config.schema import parse_overrides
from adaptsr.errors import InvalidConfigError


class UsageError(InvalidConfigError):
    def __init__(self, message: str, usage: str = ""):
        super().__init__(message)
        self.usage = usage


class CliParser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so bad usage maps to exit code 1."""

    def error(self, message: str) -> NoReturn:
        raise UsageError(message, self.format_usage())


def _csv(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def build_parser() -> CliParser:
    parser = CliParser(
        prog="adaptsr",
        description="Low-rank adapters for super-resolution networks: pretrain, adapt, merge, evaluate.",
        epilog="Any config key can be overridden with --section.key VALUE (e.g. --train.iters 200).",
        allow_abbrev=False,
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def command(name: str, help_text: str) -> CliParser:
        p = sub.add_parser(name, help=help_text, allow_abbrev=False)
        p.add_argument("--config", default=None, help="YAML run config (e.g. a previous config.resolved)")
        return p

    p = command("gen-data", "write the HR corpus as PNGs plus manifest.json")
    p.add_argument("--out", required=True, help="output directory")

    p = command("pretrain", "train a base model on bicubic pairs")
    p.add_argument("--run-dir", required=True)

    for name, help_text in (
        ("adapt", "inject adapters into a base model and train them on the target degradation"),
        ("finetune", "full fine-tuning baseline on the target degradation"),
    ):
        p = command(name, help_text)
        p.add_argument("--run-dir", required=True)
        p.add_argument("--base", required=True, help="base checkpoint")

    p = command("inject-report", "print the per-layer adapter parameter table")
    p.add_argument("--backbone", default=None, choices=["tiny-edsr", "tiny-swin"])
    p.add_argument("--targets", default=None, help="preset name or comma-separated name patterns")
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--base", default=None, help="use this checkpoint's backbone instead of a fresh one")

    p = command("merge", "fold a run's adapters into a plain checkpoint")
    p.add_argument("--in", dest="run_dir", required=True, help="adapter run directory")
    p.add_argument("--out", required=True, help="merged checkpoint path")

    p = command("eval", "PSNR / SSIM on the seeded validation set")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--checkpoint", default=None)
    source.add_argument("--run-dir", default=None)
    p.add_argument("--bicubic", action="store_true", help="score plain bicubic upscaling instead")

    p = command("compare", "table of finished runs")
    p.add_argument("runs", nargs="+", help="run directories")

    p = command("sweep", "adapt once per (preset, rank, alpha) combination")
    p.add_argument("--run-dir", required=True, help="parent directory for the sweep's runs")
    p.add_argument("--base", required=True, help="base checkpoint")
    p.add_argument("--presets", type=_csv, default=["all"])
    p.add_argument("--ranks", type=lambda s: [int(x) for x in _csv(s)], default=[8])
    p.add_argument("--alphas", type=lambda s: [float(x) for x in _csv(s)], default=[1.0])

    return parser


def parse_cli(argv: Optional[Sequence[str]]) -> Tuple[argparse.Namespace, Dict[str, str]]:
    """Known flags go to the namespace; the rest must be --section.key overrides."""
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        overrides = parse_overrides(extra)
    except InvalidConfigError as e:
        raise UsageError(str(e), parser.format_usage()) from e
    return args, overrides
