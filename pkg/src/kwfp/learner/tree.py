"""Single extremely randomized tree.

Trees are grown depth-first into flat arrays (``feature``, ``threshold``,
``left``, ``right``, ``value``); a node with ``feature == -1`` is a leaf whose
``value`` row holds class counts.  Samples with ``x[feature] <= threshold``
go left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import PreconditionError
from ._kernels import ScanKernels

CRITERIA = ("gini", "info_gain")


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = 700
    criterion: str = "gini"
    bootstrap: bool = False
    k_candidate_features: int | None = None  # None: ceil(sqrt(d))
    min_samples_split: int = 2
    max_depth: int | None = None
    rng_seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_trees < 1:
            raise PreconditionError("n_trees must be ≥ 1")
        if self.criterion not in CRITERIA:
            raise PreconditionError(f"criterion must be one of {CRITERIA}")
        if self.min_samples_split < 2:
            raise PreconditionError("min_samples_split must be ≥ 2")

    def k_for(self, d: int) -> int:
        k = math.ceil(math.sqrt(d)) if self.k_candidate_features is None else self.k_candidate_features
        if not 1 <= k <= max(d, 1):
            raise PreconditionError(f"k_candidate_features must lie in [1, {d}], got {k}")
        return k


def gini_impurity(class_counts) -> float:
    """``1 - Σ p_c²`` for the class distribution given by ``class_counts``."""
    counts = np.asarray(class_counts, dtype=float)
    n = counts.sum()
    if n < 1 or (counts < 0).any():
        raise PreconditionError("class counts must be non-negative with a positive total")
    p = counts / n
    return float(1.0 - np.dot(p, p))


def entropy(class_counts) -> float:
    counts = np.asarray(class_counts, dtype=float)
    n = counts.sum()
    if n < 1 or (counts < 0).any():
        raise PreconditionError("class counts must be non-negative with a positive total")
    p = counts[counts > 0] / n
    return float(-(p * np.log2(p)).sum())


def _impurity_columns(counts: np.ndarray, totals: np.ndarray, criterion: str) -> np.ndarray:
    """Impurity of each column of a ``(classes, k)`` count matrix."""
    safe = np.where(totals > 0, totals, 1.0)
    p = counts / safe
    if criterion == "gini":
        return 1.0 - (p * p).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = np.where(p > 0, np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -(p * logp).sum(axis=0)


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, n_classes) class counts
    importance: np.ndarray  # total weighted impurity decrease per feature
    decreases: np.ndarray  # weighted impurity decrease per split node (0 at leaves)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = self.feature[node] >= 0
        while active.any():
            r = rows[active]
            n = node[r]
            go_left = X[r, self.feature[n]] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return node

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        v = self.value[self.apply(X)]
        return v / v.sum(axis=1, keepdims=True)

    def same_as(self, other: "Tree") -> bool:
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("feature", "threshold", "left", "right", "value")
        )


def train_tree(
    X: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
    rng: np.random.Generator,
    n_classes: int | None = None,
    sample_indices: np.ndarray | None = None,
    use_jit: bool | None = None,
) -> Tree:
    """Grow one tree on class indices ``y`` (``0 .. n_classes-1``).

    At every node ``k`` distinct non-constant features are drawn at random,
    each gets one threshold uniform in the open interval between its node
    minimum and maximum, and the candidate with the largest impurity
    decrease wins.  Growth stops on purity, ``min_samples_split``,
    ``max_depth`` or when every feature is constant.  ``use_jit=False``
    forces the numpy scans; the tree is identical either way.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise PreconditionError("X must be 2-D")
    return grow_tree(np.ascontiguousarray(X.T), y, config, rng, n_classes, sample_indices, use_jit)


def grow_tree(
    XT: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
    rng: np.random.Generator,
    n_classes: int | None = None,
    sample_indices: np.ndarray | None = None,
    use_jit: bool | None = None,
) -> Tree:
    """:func:`train_tree` on a C-contiguous transposed matrix ``XT`` (features by samples)."""
    y = np.asarray(y, dtype=np.int64)
    if XT.ndim != 2 or XT.shape[1] != len(y) or len(y) == 0:
        raise PreconditionError("X must be 2-D with one row per label and at least one row")
    d, n = XT.shape
    C = int(y.max()) + 1 if n_classes is None else n_classes
    k = config.k_for(d) if d else 1
    kernels = ScanKernels(d, use_jit)
    root_idx = np.arange(n) if sample_indices is None else np.asarray(sample_indices, dtype=np.int64)
    total = float(len(root_idx))

    feature, threshold, left, right, values, decreases = [], [], [], [], [], []
    importance = np.zeros(d)
    # stack entries: (node id, sample indices, depth, features not known constant)
    stack = []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        decreases.append(0.0)
        values.append(np.bincount(y[idx], minlength=C).astype(float))
        return len(feature) - 1

    stack.append((new_node(root_idx), root_idx, 0, np.arange(d)))
    while stack:
        node, idx, depth, live = stack.pop()
        counts = values[node]
        m = len(idx)
        if (
            m < config.min_samples_split
            or np.count_nonzero(counts) <= 1
            or (config.max_depth is not None and depth >= config.max_depth)
            or len(live) == 0
        ):
            continue
        order = live[rng.permutation(len(live))]
        feats, lo, hi, live = kernels.scan(XT, idx, order, k, live)
        if len(feats) == 0:
            continue
        thr = rng.uniform(lo, hi)
        thr = np.clip(thr, np.nextafter(lo, hi), np.nextafter(hi, lo))

        left_counts = kernels.left_counts(XT, idx, y, feats, thr, C).T
        n_left = left_counts.sum(axis=0)
        n_right = m - n_left
        right_counts = counts[:, None] - left_counts
        parent = _impurity_columns(counts[:, None], np.array([float(m)]), config.criterion)[0]
        child = (
            n_left * _impurity_columns(left_counts, n_left, config.criterion)
            + n_right * _impurity_columns(right_counts, n_right, config.criterion)
        )
        best = int(np.argmin(child))
        f = int(feats[best])
        gain = max(0.0, (m * parent - child[best]) / total)
        mask = XT[f, idx] <= thr[best]
        li, ri = idx[mask], idx[~mask]

        feature[node] = f
        threshold[node] = float(thr[best])
        decreases[node] = gain
        importance[f] += gain
        ln, rn = new_node(li), new_node(ri)
        left[node], right[node] = ln, rn
        stack.append((rn, ri, depth + 1, live))
        stack.append((ln, li, depth + 1, live))

    return Tree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=float),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.vstack(values),
        importance=importance,
        decreases=np.array(decreases, dtype=float),
    )
