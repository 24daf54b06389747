"""Experiment reports: metrics plus the counts and config they came from."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, is_dataclass
from pathlib import Path

import numpy as np

from .metrics import ConfusionCounts, PRCurve

UNDEFINED = "undefined"


def _plain(value):
    if is_dataclass(value) and not isinstance(value, type):
        return _plain(asdict(value))
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


@dataclass
class EvalReport:
    experiment: str
    metrics: dict = field(default_factory=dict)  # name -> float, or None when undefined
    counts: ConfusionCounts | None = None
    per_class: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)  # tabular results (grids, gap series)
    pr_curve: PRCurve | None = None

    def to_dict(self) -> dict:
        out = {
            "experiment": self.experiment,
            "metrics": _plain(self.metrics),
            "counts": self.counts.to_dict() if self.counts else None,
            "per_class": _plain(self.per_class),
            "config": _plain(self.config),
            "rows": _plain(self.rows),
        }
        if self.pr_curve is not None:
            out["pr_curve"] = [list(p) for p in self.pr_curve.points()]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    def flat_metrics(self) -> list[tuple[str, object]]:
        rows = [(k, v) for k, v in self.metrics.items()]
        if self.counts is not None:
            rows += [(f"count_{k}", v) for k, v in self.counts.to_dict().items()]
        return rows

    def write(self, json_path: str | Path, csv_path: str | Path | None = None, pr_path: str | Path | None = None) -> None:
        Path(json_path).write_text(self.to_json() + "\n", encoding="utf-8")
        if csv_path is not None:
            with open(csv_path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["metric", "value"])
                for k, v in self.flat_metrics():
                    w.writerow([k, UNDEFINED if v is None else (repr(float(v)) if isinstance(v, float) else v)])
        if pr_path is not None and self.pr_curve is not None:
            self.pr_curve.to_csv(pr_path)
