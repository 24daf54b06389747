"""Confusion counts, open-world rates and precision-recall curves."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..errors import KwfpError


class UndefinedMetricError(KwfpError, ValueError):
    """A metric whose denominator is empty was requested."""


def ratio(num: int, den: int) -> float | None:
    """``num / den``, or ``None`` (the undefined marker) when ``den`` is 0."""
    return num / den if den else None


@dataclass(frozen=True)
class ConfusionCounts:
    """Open-world outcome counts.

    ``fm`` (false monitored) counts targeted samples given the wrong
    targeted keyword; it stays 0 for purely binary decisions.
    """

    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    fm: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn, self.fm) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def targeted(self) -> int:
        return self.tp + self.fn + self.fm

    @property
    def non_targeted(self) -> int:
        return self.fp + self.tn

    @property
    def precision(self) -> float | None:
        return ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float | None:
        return ratio(self.tp, self.tp + self.fn)

    @property
    def fpr(self) -> float | None:
        return ratio(self.fp, self.fp + self.tn)

    @property
    def fnr(self) -> float | None:
        return ratio(self.fn, self.tp + self.fn)

    @property
    def fmr(self) -> float | None:
        return ratio(self.fm, self.targeted)

    @property
    def tpr(self) -> float | None:
        return ratio(self.tp, self.targeted)

    def to_dict(self) -> dict[str, int]:
        return asdict(self)


@dataclass(frozen=True)
class PRCurve:
    """One point per distinct score threshold, thresholds ascending."""

    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray

    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.thresholds.tolist(), self.precision.tolist(), self.recall.tolist()))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["threshold", "precision", "recall"])
            for t, p, r in self.points():
                w.writerow([repr(t), repr(p), repr(r)])


def prc_and_ap(scores, is_targeted) -> tuple[PRCurve, float]:
    """Precision-recall sweep over the distinct scores and average precision.

    A sample counts as predicted targeted at threshold ``t`` when its score
    is ``>= t``.  With thresholds taken in descending order,
    ``AP = sum_n (R_n - R_{n-1}) * P_n`` starting from ``R_0 = 0``.
    """
    s = np.asarray(scores, dtype=float)
    t = np.asarray(is_targeted, dtype=bool)
    if s.shape != t.shape or s.ndim != 1:
        raise ValueError("scores and is_targeted must be 1-D and equally long")
    n_pos = int(t.sum())
    if n_pos == 0:
        raise UndefinedMetricError("recall is undefined without targeted samples")
    order = np.argsort(-s, kind="stable")
    s, t = s[order], t[order]
    tp = np.cumsum(t)
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    thr = s[ends]
    precision = tp[ends] / (ends + 1)
    recall = tp[ends] / n_pos
    ap = float(np.sum(np.diff(np.r_[0.0, recall]) * precision))
    return PRCurve(thr[::-1].copy(), precision[::-1].copy(), recall[::-1].copy()), ap
