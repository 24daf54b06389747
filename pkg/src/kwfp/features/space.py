"""Fixed feature layouts learned from a training set."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from ..trace import Dataset, TraceSample
from .base import FeatureVector
from .sequence import etresp_features, kfp_features, psc
from .wfin import wfin_features, wfinpp_features

Extractor = Callable[[TraceSample], FeatureVector]

EXTRACTORS: dict[str, Extractor] = {
    "psc": psc,
    "kfp": kfp_features,
    "etresp": etresp_features,
    "wfin": wfin_features,
    "wfinpp": wfinpp_features,
}


def get_extractor(feature_set: str) -> Extractor:
    try:
        return EXTRACTORS[feature_set]
    except KeyError:
        raise ValueError(f"unknown feature set {feature_set!r}; choose from {sorted(EXTRACTORS)}") from None


def featurize(samples: Iterable[TraceSample], feature_set: str) -> list[FeatureVector]:
    fn = get_extractor(feature_set)
    return [fn(s) for s in samples]


@dataclass(frozen=True, eq=False)
class VectorSpace:
    """Sorted feature names (with categories) fixed from training data.

    Features seen only at test time are dropped; features absent from a
    sample are zero.
    """

    feature_set: str
    names: tuple[str, ...]
    categories: tuple[str, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.names)})

    def __len__(self) -> int:
        return len(self.names)

    def __eq__(self, other):
        if not isinstance(other, VectorSpace):
            return NotImplemented
        return (self.feature_set, self.names, self.categories) == (other.feature_set, other.names, other.categories)

    @property
    def catalog(self) -> dict[str, str]:
        return dict(zip(self.names, self.categories))

    @classmethod
    def from_vectors(cls, feature_set: str, vectors: Iterable[FeatureVector]) -> "VectorSpace":
        cats: dict[str, str] = {}
        for fv in vectors:
            for n, c in zip(fv.names, fv.categories):
                cats.setdefault(n, c)
        names = tuple(sorted(cats))
        return cls(feature_set, names, tuple(cats[n] for n in names))

    def vectorize(self, fv: FeatureVector) -> np.ndarray:
        row = np.zeros(len(self.names))
        idx = self._index
        for n, v in zip(fv.names, fv.values.tolist()):
            j = idx.get(n)
            if j is not None:
                row[j] = v
        return row

    def matrix(self, vectors: Sequence[FeatureVector]) -> np.ndarray:
        X = np.zeros((len(vectors), len(self.names)))
        idx = self._index
        for i, fv in enumerate(vectors):
            for n, v in zip(fv.names, fv.values.tolist()):
                j = idx.get(n)
                if j is not None:
                    X[i, j] = v
        return X

    def transform(self, samples: Iterable[TraceSample]) -> np.ndarray:
        return self.matrix(featurize(samples, self.feature_set))

    def restrict(self, categories: Iterable[str]) -> "VectorSpace":
        keep = set(categories)
        pairs = [(n, c) for n, c in zip(self.names, self.categories) if c in keep]
        return VectorSpace(self.feature_set, tuple(n for n, _ in pairs), tuple(c for _, c in pairs))

    def column_indices(self, names: Iterable[str]) -> np.ndarray:
        return np.array([self._index[n] for n in names], dtype=np.int64)

    def to_json(self) -> str:
        return json.dumps({"feature_set": self.feature_set, "names": self.names, "categories": self.categories})

    @classmethod
    def from_json(cls, text: str) -> "VectorSpace":
        obj = json.loads(text)
        return cls(obj["feature_set"], tuple(obj["names"]), tuple(obj["categories"]))


def fit_vector_space(train: Dataset | Sequence[TraceSample], feature_set: str) -> VectorSpace:
    samples = list(train)
    if not samples:
        raise ValueError("cannot fit a vector space on an empty training set")
    return VectorSpace.from_vectors(feature_set, featurize(samples, feature_set))


def fit_transform(train: Dataset | Sequence[TraceSample], feature_set: str) -> tuple[VectorSpace, np.ndarray]:
    vectors = featurize(train, feature_set)
    if not vectors:
        raise ValueError("cannot fit a vector space on an empty training set")
    space = VectorSpace.from_vectors(feature_set, vectors)
    return space, space.matrix(vectors)


META_COLUMNS = ("label", "engine", "browser", "mode", "visit_index")


def export_csv(dataset: Dataset, space: VectorSpace, path: str | Path, X: np.ndarray | None = None) -> None:
    """One row per sample: metadata columns then every feature of ``space``."""
    if X is None:
        X = space.transform(dataset)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(META_COLUMNS + space.names)
        for s, row in zip(dataset, X):
            m = s.meta
            w.writerow([m.label, m.engine, m.browser, m.mode, m.visit_index] + [repr(float(v)) for v in row])


def export_matrix(X: np.ndarray, space: VectorSpace, path: str | Path) -> Path:
    """Write ``X`` as ``.npy`` plus a ``.names.json`` sidecar; returns the sidecar path."""
    path = Path(path)
    np.save(path, X)
    npy = path if path.suffix == ".npy" else path.with_name(path.name + ".npy")
    sidecar = npy.with_suffix(".names.json")
    sidecar.write_text(space.to_json(), encoding="utf-8")
    return sidecar


def load_matrix(path: str | Path) -> tuple[np.ndarray, VectorSpace]:
    npy = Path(path)
    return np.load(npy), VectorSpace.from_json(npy.with_suffix(".names.json").read_text(encoding="utf-8"))
