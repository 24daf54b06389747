"""Extra-Trees ensemble: training, prediction, importance and persistence."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..errors import KwfpError, PreconditionError
from .tree import TrainConfig, Tree, grow_tree

FORMAT_NAME = "kwfp-forest"
FORMAT_VERSION = 1


class DegenerateLabelsError(KwfpError, ValueError):
    """Training labels contain fewer than two classes."""


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    """Independent stream per tree, so training order never matters."""
    return np.random.default_rng([seed, tree_index])


def _fit_one(XT, y, config: TrainConfig, n_classes: int, t: int) -> Tree:
    rng = tree_rng(config.rng_seed, t)
    sample = rng.integers(0, len(y), size=len(y)) if config.bootstrap else None
    return grow_tree(XT, y, config, rng, n_classes=n_classes, sample_indices=sample)


@dataclass(frozen=True, eq=False)
class Forest:
    trees: tuple[Tree, ...]
    classes: tuple
    n_features: int
    config: TrainConfig
    feature_names: tuple[str, ...] | None = None
    importances: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        raw = np.mean([t.importance for t in self.trees], axis=0) if self.trees else np.zeros(self.n_features)
        s = raw.sum()
        object.__setattr__(self, "importances", raw / s if s > 0 else raw)

    def _check(self, X) -> tuple[np.ndarray, bool]:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise PreconditionError(f"expected {self.n_features} features, got shape {X.shape}")
        return X, single

    def predict_proba(self, X) -> np.ndarray:
        """Mean over trees of each reached leaf's class distribution."""
        X, single = self._check(X)
        proba = np.zeros((len(X), len(self.classes)))
        for t in self.trees:
            proba += t.predict_proba(X)
        proba /= len(self.trees)
        return proba[0] if single else proba

    def predict(self, X):
        """Arg-max class; ties go to the lowest class index."""
        proba = self.predict_proba(X)
        cls = np.asarray(self.classes, dtype=object)
        if proba.ndim == 1:
            return cls[int(np.argmax(proba))]
        return cls[np.argmax(proba, axis=1)]

    def class_index(self, label) -> int:
        return self.classes.index(label)


def train_forest(X, y, config: TrainConfig = TrainConfig(), feature_names: Sequence[str] | None = None) -> Forest:
    """Train ``config.n_trees`` trees, tree ``t`` seeded by ``(rng_seed, t)``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y):
        raise PreconditionError(f"X has shape {X.shape} but there are {len(y)} labels")
    classes, y_idx = np.unique(y, return_inverse=True)
    if len(classes) < 2:
        raise DegenerateLabelsError(f"need at least 2 classes, got {list(classes)}")
    if feature_names is not None and len(feature_names) != X.shape[1]:
        raise PreconditionError("feature_names must match the number of columns")
    config.k_for(X.shape[1])
    C = len(classes)
    XT = np.ascontiguousarray(X.T)
    if config.n_jobs == 1:
        trees = [_fit_one(XT, y_idx, config, C, t) for t in range(config.n_trees)]
    else:
        from joblib import Parallel, delayed

        trees = Parallel(n_jobs=config.n_jobs)(
            delayed(_fit_one)(XT, y_idx, config, C, t) for t in range(config.n_trees)
        )
    return Forest(
        tuple(trees),
        tuple(classes.tolist()),
        X.shape[1],
        config,
        tuple(feature_names) if feature_names is not None else None,
    )


def predict_proba(forest: Forest, x) -> np.ndarray:
    return forest.predict_proba(x)


def predict(forest: Forest, x):
    return forest.predict(x)


# --------------------------------------------------------------------------
# category importance


def _feature_keys(forest: Forest) -> list:
    return list(forest.feature_names) if forest.feature_names is not None else list(range(forest.n_features))


def _lookup(catalog, key, j):
    if isinstance(catalog, Mapping):
        if key in catalog:
            return catalog[key]
        if j in catalog:
            return catalog[j]
        raise PreconditionError(f"feature {key!r} has no category")
    cat = catalog[j] if j < len(catalog) else None
    if cat is None:
        raise PreconditionError(f"feature {key!r} has no category")
    return cat


def category_importance(forest: Forest, catalog) -> dict[str, float]:
    """Summed importance per category.

    ``catalog`` maps feature name (or column index) to category, or is a
    sequence with one category per column.
    """
    out: dict[str, float] = {}
    for j, key in enumerate(_feature_keys(forest)):
        cat = _lookup(catalog, key, j)
        out[cat] = out.get(cat, 0.0) + float(forest.importances[j])
    return out


def rank_categories(forest: Forest, catalog) -> list[str]:
    """Categories by descending summed importance, ties by category id."""
    imp = category_importance(forest, catalog)
    return sorted(imp, key=lambda c: (-imp[c], c))


def export_importance(forest: Forest, catalog, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["feature", "category", "importance"])
        for j, key in enumerate(_feature_keys(forest)):
            w.writerow([key, _lookup(catalog, key, j), repr(float(forest.importances[j]))])


# --------------------------------------------------------------------------
# persistence


def save_forest(forest: Forest, path: str | Path) -> None:
    """Write a versioned ``.npz`` archive with the config and seed embedded."""
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "config": asdict(forest.config),
        "classes": list(forest.classes),
        "n_features": forest.n_features,
        "feature_names": list(forest.feature_names) if forest.feature_names is not None else None,
    }
    sizes = np.array([t.n_nodes for t in forest.trees], dtype=np.int64)
    cat = lambda f: np.concatenate([getattr(t, f) for t in forest.trees])  # noqa: E731
    buf = io.BytesIO()
    np.savez_compressed(
        buf,
        header=np.frombuffer(json.dumps(header).encode("utf-8"), dtype=np.uint8),
        node_counts=sizes,
        feature=cat("feature"),
        threshold=cat("threshold"),
        left=cat("left"),
        right=cat("right"),
        value=np.vstack([t.value for t in forest.trees]),
        decreases=cat("decreases"),
        importance=np.vstack([t.importance for t in forest.trees]),
    )
    Path(path).write_bytes(buf.getvalue())


def load_forest(path: str | Path) -> Forest:
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(bytes(z["header"]).decode("utf-8"))
        if header.get("format") != FORMAT_NAME:
            raise KwfpError(f"{path} is not a forest file")
        if header.get("version") != FORMAT_VERSION:
            raise KwfpError(f"unsupported forest file version {header.get('version')}")
        bounds = np.concatenate([[0], np.cumsum(z["node_counts"])])
        trees = []
        for t, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
            trees.append(Tree(
                feature=z["feature"][a:b], threshold=z["threshold"][a:b],
                left=z["left"][a:b], right=z["right"][a:b], value=z["value"][a:b],
                importance=z["importance"][t], decreases=z["decreases"][a:b],
            ))
    names = header["feature_names"]
    return Forest(
        tuple(trees),
        tuple(header["classes"]),
        header["n_features"],
        TrainConfig(**header["config"]),
        tuple(names) if names is not None else None,
    )
