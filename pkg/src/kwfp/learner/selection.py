"""Top-N category forward selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import PreconditionError
from .forest import Forest, rank_categories, train_forest
from .tree import TrainConfig


@dataclass(frozen=True)
class SelectionResult:
    best_n: int
    categories: tuple[str, ...]  # top best_n categories, most important first
    features: tuple  # selected feature names (or column indices)
    columns: np.ndarray  # selected column indices into the input matrices
    accuracies: dict  # N -> validation accuracy
    ranking: tuple[str, ...]  # every category, most important first


def _column_categories(catalog, n_cols: int, names: Sequence[str] | None) -> list[str]:
    if isinstance(catalog, dict):
        keys = names if names is not None else range(n_cols)
        missing = [k for k in keys if k not in catalog]
        if missing:
            raise PreconditionError(f"feature {missing[0]!r} has no category")
        return [catalog[k] for k in keys]
    cats = list(catalog)
    if len(cats) != n_cols:
        raise PreconditionError(f"catalog has {len(cats)} entries for {n_cols} columns")
    return cats


def forward_select(
    train: tuple,
    val: tuple,
    catalog,
    config: TrainConfig = TrainConfig(),
    grid: Sequence[int] = (1, 2, 3, 5, 10, 15, 20),
    feature_names: Sequence[str] | None = None,
    ranking_forest: Forest | None = None,
) -> SelectionResult:
    """Pick how many of the most important categories to keep.

    Categories are ranked once by a forest trained on ``train`` (or the
    given ``ranking_forest``).  For each N in ``grid`` a fresh forest is
    trained on the columns of the top N categories and scored on ``val``.
    The N with the best validation accuracy wins; ties go to the smaller N.
    """
    grid = sorted(set(int(n) for n in grid))
    if not grid or grid[0] < 1:
        raise PreconditionError("grid must hold at least one positive N")
    Xtr, ytr = np.asarray(train[0], dtype=float), np.asarray(train[1])
    Xva, yva = np.asarray(val[0], dtype=float), np.asarray(val[1])
    if Xtr.shape[1] != Xva.shape[1]:
        raise PreconditionError("train and validation matrices have different widths")
    col_cat = np.array(_column_categories(catalog, Xtr.shape[1], feature_names), dtype=object)

    forest = ranking_forest or train_forest(Xtr, ytr, config)
    ranking = rank_categories(forest, list(col_cat))

    accuracies: dict[int, float] = {}
    chosen: dict[int, np.ndarray] = {}
    for n in grid:
        cols = np.flatnonzero(np.isin(col_cat, ranking[:n]))
        model = train_forest(Xtr[:, cols], ytr, config)
        accuracies[n] = float(np.mean(model.predict(Xva[:, cols]) == yva))
        chosen[n] = cols

    best = max(grid, key=lambda n: (accuracies[n], -n))
    cols = chosen[best]
    features = tuple(feature_names[j] for j in cols) if feature_names is not None else tuple(cols.tolist())
    return SelectionResult(best, tuple(ranking[:best]), features, cols, accuracies, tuple(ranking))
