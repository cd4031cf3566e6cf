import csv
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Union

from adaptsr.metrics.models import PSNR_CAP
from adaptsr.training.models import RunHistory

HISTORY_COLUMNS = ["iter", "loss", "lr", "psnr", "ssim"]


def _number(value: float) -> str:
    if math.isinf(value):
        return repr(PSNR_CAP)
    return repr(float(value))


def history_rows(history: RunHistory) -> List[Dict[str, str]]:
    """
    One row per training iteration; psnr/ssim are filled on rows where an
    evaluation ran (eval iteration k is recorded on row k − 1, the step that
    completed it) and left empty otherwise.
    """
    evals = {it: (p, s) for it, p, s in history.eval_curve}
    lrs = dict(history.lr_curve)
    rows = []
    for it, loss in history.loss_curve:
        row = {"iter": str(it), "loss": _number(loss), "lr": _number(lrs[it]), "psnr": "", "ssim": ""}
        if it + 1 in evals:
            p, s = evals[it + 1]
            row["psnr"], row["ssim"] = _number(p), _number(s)
        rows.append(row)
    return rows


def write_history_csv(history: RunHistory, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=HISTORY_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(history_rows(history))
    return path


def read_history_csv(path: Union[str, Path]) -> List[Dict[str, str]]:
    with Path(path).open(newline="") as f:
        return list(csv.DictReader(f))


def finite(value: Any) -> Any:
    if isinstance(value, float) and math.isinf(value):
        return PSNR_CAP
    return value


def write_metrics_json(metrics: Dict[str, Any], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({k: finite(v) for k, v in metrics.items()}, indent=2, sort_keys=True))
    return path


def read_metrics_json(path: Union[str, Path]) -> Dict[str, Any]:
    return json.loads(Path(path).read_text())
