import math
from typing import Any, Dict, List, Optional, Sequence

from adaptsr.injection.models import InjectionReport
from adaptsr.metrics.models import PSNR_CAP


def _table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        widths = [max(w, len(cell)) for w, cell in zip(widths, row)]
    line = "  ".join("{:<" + str(w) + "}" for w in widths)
    out = [line.format(*headers), "  ".join("-" * w for w in widths)]
    out.extend(line.format(*row) for row in rows)
    return "\n".join(out)


def _db(value: Optional[float]) -> str:
    if value is None:
        return "-"
    if math.isinf(value) or value >= PSNR_CAP:
        return "inf"
    return f"{value:.3f}"


def format_injection_report(report: InjectionReport, title: str = "") -> str:
    rows = [
        [r.name, r.kind, f"{r.base_params:,}", f"{r.lora_params:,}" if r.lora_params else "-"]
        for r in report.rows
    ]
    body = _table(["layer", "kind", "base params", "lora params"], rows)
    footer = (
        f"\nadapted layers : {len(report.adapted_rows)} / {len(report.rows)}"
        f"\nbase weights   : {report.base_total:,}"
        f"\nlora params    : {report.lora_total:,}"
        f"\nmodel params   : {report.model_total:,}"
        f"\ntrainable      : {100 * report.trainable_fraction:.2f}% of adaptable weights, "
        f"{100 * report.fraction_of_model:.2f}% of the model"
    )
    header = f"{title}\n" if title else ""
    return header + body + footer


def format_metrics(psnr_db: float, ssim_value: float, label: str = "") -> str:
    prefix = f"{label}: " if label else ""
    return f"{prefix}PSNR {_db(psnr_db)} dB | SSIM {ssim_value:.4f}"


def format_compare(rows: List[Dict[str, Any]]) -> str:
    """
    rows: {model, trainable_params, fraction, psnr, ssim, wall_time}
    """
    table = [
        [
            str(r["model"]),
            f"{r['trainable_params']:,}",
            f"{100 * r['fraction']:.2f}%",
            _db(r.get("psnr")),
            "-" if r.get("ssim") is None else f"{r['ssim']:.4f}",
            f"{r.get('wall_time', 0.0):.1f}s",
        ]
        for r in rows
    ]
    return _table(["model", "trainable params", "fraction", "PSNR", "SSIM", "wall time"], table)


def format_sweep(rows: List[Dict[str, Any]]) -> str:
    table = [
        [
            str(r["preset"]),
            str(r["rank"]),
            f"{r['alpha']:g}",
            f"{r['trainable_params']:,}",
            f"{100 * r['fraction']:.2f}%",
            _db(r.get("psnr")),
            "-" if r.get("ssim") is None else f"{r['ssim']:.4f}",
            f"{r['wall_time']:.1f}s",
        ]
        for r in rows
    ]
    return _table(["preset", "rank", "alpha", "trainable params", "fraction", "PSNR", "SSIM", "wall time"], table)
