"""Experiment protocols: closed world, open world, cross-platform, time gap, page vs query."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..errors import LabelMismatchError, PreconditionError
from ..features import VectorSpace, featurize
from ..features.base import FeatureVector
from ..learner import Forest, TrainConfig, train_forest
from ..preprocess import DEFAULT_PUBLIC_SUFFIXES, domain_census
from ..trace import NON_TARGETED, Dataset, TraceSample
from .metrics import ConfusionCounts, prc_and_ap
from .report import EvalReport

TARGETED = "targeted"
DEFAULT_REPETITIONS = 5


def _vectors(samples, feature_set: str, vectors: Sequence[FeatureVector] | None) -> list[FeatureVector]:
    return list(vectors) if vectors is not None else featurize(samples, feature_set)


@dataclass(frozen=True, eq=False)
class KeywordClassifier:
    """A vector space fixed on training data plus a forest trained in it."""

    feature_set: str
    space: VectorSpace
    forest: Forest

    @classmethod
    def fit(
        cls,
        train: Iterable[TraceSample],
        feature_set: str,
        config: TrainConfig = TrainConfig(),
        labels: Sequence[str] | None = None,
        vectors: Sequence[FeatureVector] | None = None,
    ) -> "KeywordClassifier":
        samples = list(train)
        vecs = _vectors(samples, feature_set, vectors)
        space = VectorSpace.from_vectors(feature_set, vecs)
        y = list(labels) if labels is not None else [s.meta.label for s in samples]
        forest = train_forest(space.matrix(vecs), y, config, feature_names=space.names)
        return cls(feature_set, space, forest)

    def matrix(self, samples, vectors: Sequence[FeatureVector] | None = None) -> np.ndarray:
        return self.space.matrix(_vectors(samples, self.feature_set, vectors))

    def predict(self, samples, vectors=None) -> np.ndarray:
        return self.forest.predict(self.matrix(samples, vectors))

    def predict_proba(self, samples, vectors=None) -> np.ndarray:
        return self.forest.predict_proba(self.matrix(samples, vectors))

    def score(self, samples, label: str, vectors=None) -> np.ndarray:
        """Predicted probability mass of ``label`` for each sample."""
        return self.predict_proba(samples, vectors)[:, self.forest.class_index(label)]


def check_label_sets(train_labels: Iterable[str], test_labels: Iterable[str]) -> None:
    a, b = set(train_labels), set(test_labels)
    if a != b:
        raise LabelMismatchError(sorted(b - a), sorted(a - b))


def seed_configs(config: TrainConfig, repetitions: int) -> list[TrainConfig]:
    """Repetition ``r`` trains with seed ``config.rng_seed + r``."""
    if repetitions < 1:
        raise PreconditionError("repetitions must be ≥ 1")
    return [replace(config, rng_seed=config.rng_seed + r) for r in range(repetitions)]


def _summary(accs: Sequence[float]) -> dict:
    a = np.asarray(accs, dtype=float)
    return {"accuracy_mean": float(a.mean()), "accuracy_std": float(a.std()), "accuracies": a.tolist()}


def _config_dict(config: TrainConfig, **extra) -> dict:
    return {**asdict(config), **extra}


# --------------------------------------------------------------------------
# closed world


def closed_world_eval(
    train: Dataset,
    test: Dataset,
    feature_set: str,
    config: TrainConfig = TrainConfig(),
    repetitions: int = DEFAULT_REPETITIONS,
    train_vectors=None,
    test_vectors=None,
) -> EvalReport:
    """Accuracy mean and population std over ``repetitions`` forest seeds."""
    check_label_sets(train.labels, test.labels)
    tr_vec = _vectors(train, feature_set, train_vectors)
    te_vec = _vectors(test, feature_set, test_vectors)
    truth = np.array(test.labels, dtype=object)
    accs, per_class = [], {}
    for cfg in seed_configs(config, repetitions):
        model = KeywordClassifier.fit(train, feature_set, cfg, vectors=tr_vec)
        pred = model.predict(test, te_vec)
        hit = pred == truth
        accs.append(float(hit.mean()))
        for lbl in np.unique(truth):
            per_class.setdefault(str(lbl), []).append(float(hit[truth == lbl].mean()))
    return EvalReport(
        "closed-world",
        metrics=_summary(accs),
        per_class={k: float(np.mean(v)) for k, v in per_class.items()},
        config=_config_dict(config, feature_set=feature_set, repetitions=repetitions),
    )


# --------------------------------------------------------------------------
# open world


def binary_labels(samples: Iterable[TraceSample]) -> list[str]:
    return [TARGETED if s.meta.is_targeted else NON_TARGETED for s in samples]


def fit_binary(train: Dataset, feature_set: str, config: TrainConfig = TrainConfig(), vectors=None) -> KeywordClassifier:
    labels = binary_labels(train)
    if len(set(labels)) < 2:
        raise PreconditionError("binary training needs both targeted and non-targeted samples")
    return KeywordClassifier.fit(train, feature_set, config, labels=labels, vectors=vectors)


def fit_keyword_model(train: Dataset, feature_set: str, config: TrainConfig = TrainConfig(), vectors=None) -> KeywordClassifier:
    """Keyword classifier trained on the targeted samples only."""
    keep = [i for i, s in enumerate(train) if s.meta.is_targeted]
    samples = [train[i] for i in keep]
    vecs = [vectors[i] for i in keep] if vectors is not None else None
    return KeywordClassifier.fit(samples, feature_set, config, vectors=vecs)


def binary_counts(score: np.ndarray, is_targeted: np.ndarray, threshold: float = 0.5) -> ConfusionCounts:
    flagged = score >= threshold
    return ConfusionCounts(
        tp=int((flagged & is_targeted).sum()),
        fp=int((flagged & ~is_targeted).sum()),
        tn=int((~flagged & ~is_targeted).sum()),
        fn=int((~flagged & is_targeted).sum()),
    )


def binary_eval(
    train: Dataset,
    test: Dataset,
    feature_set: str,
    config: TrainConfig = TrainConfig(),
    threshold: float = 0.5,
    model: KeywordClassifier | None = None,
    test_vectors=None,
) -> EvalReport:
    """Targeted vs non-targeted: PR curve and AP over the targeted-class score."""
    model = model or fit_binary(train, feature_set, config)
    score = model.score(test, TARGETED, test_vectors)
    truth = np.array([s.meta.is_targeted for s in test])
    curve, ap = prc_and_ap(score, truth)
    counts = binary_counts(score, truth, threshold)
    return EvalReport(
        "binary",
        metrics={"ap": ap, "precision": counts.precision, "recall": counts.recall,
                 "fpr": counts.fpr, "fnr": counts.fnr},
        counts=counts,
        config=_config_dict(config, feature_set=feature_set, threshold=threshold),
        pr_curve=curve,
    )


def multilevel_eval(
    binary_model: KeywordClassifier,
    keyword_model: KeywordClassifier,
    test: Dataset,
    threshold: float = 0.5,
) -> EvalReport:
    """Binary stage then keyword stage on the true positives.

    ``accuracy_ml`` is the share of true positives given their exact keyword
    and is ``None`` (undefined) when there are no true positives.
    """
    samples = list(test)
    truth = np.array([s.meta.is_targeted for s in samples])
    score = binary_model.score(samples, TARGETED)
    counts = binary_counts(score, truth, threshold)
    tp_idx = np.flatnonzero((score >= threshold) & truth)
    correct = 0
    if len(tp_idx):
        tp_samples = [samples[i] for i in tp_idx]
        pred = keyword_model.predict(tp_samples)
        correct = int(sum(p == s.meta.label for p, s in zip(pred, tp_samples)))
    acc_ml = correct / len(tp_idx) if len(tp_idx) else None
    return EvalReport(
        "multilevel",
        metrics={"fpr": counts.fpr, "fnr": counts.fnr, "accuracy_ml": acc_ml, "stage2_correct": correct},
        counts=counts,
        config={"threshold": threshold, "binary": asdict(binary_model.forest.config),
                "keyword": asdict(keyword_model.forest.config)},
    )


def multiclass_counts(pred: Sequence[str], truth: Sequence[str]) -> ConfusionCounts:
    tp = fp = tn = fn = fm = 0
    for p, t in zip(pred, truth):
        if t == NON_TARGETED:
            if p == NON_TARGETED:
                tn += 1
            else:
                fp += 1
        elif p == t:
            tp += 1
        elif p == NON_TARGETED:
            fn += 1
        else:
            fm += 1
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn, fm=fm)


def multiclass_eval(model: KeywordClassifier, test: Dataset) -> EvalReport:
    """Targeted keywords plus one shared non-targeted label in a single model."""
    if NON_TARGETED not in model.forest.classes:
        raise PreconditionError(f"the model was not trained with the non-targeted label {NON_TARGETED!r}")
    counts = multiclass_counts(model.predict(test).tolist(), test.labels)
    return EvalReport(
        "multiclass",
        metrics={"fpr": counts.fpr, "fmr": counts.fmr, "tpr": counts.tpr,
                 "fn_fraction": None if not counts.targeted else counts.fn / counts.targeted},
        counts=counts,
        config=asdict(model.forest.config) | {"feature_set": model.feature_set},
    )


# --------------------------------------------------------------------------
# cross-platform and time gap


def cross_platform_eval(
    trains: Mapping[str, Dataset],
    tests: Mapping[str, Dataset],
    feature_set: str,
    config: TrainConfig = TrainConfig(),
    repetitions: int = DEFAULT_REPETITIONS,
    merged: Sequence[Sequence[str]] = (),
) -> EvalReport:
    """Accuracy of every (training platform, test platform) pair.

    ``merged`` lists groups of training platforms whose union forms an
    extra row named ``"a+b"``.  Each row's forest is trained once per seed
    and scored on every test set.
    """
    rows: dict[str, Dataset] = dict(trains)
    for group in merged:
        missing = [g for g in group if g not in trains]
        if missing:
            raise PreconditionError(f"unknown training sets in merge: {missing}")
        ds = Dataset(())
        for g in group:
            ds = ds + trains[g]
        rows["+".join(group)] = ds
    test_vecs = {name: featurize(ds, feature_set) for name, ds in tests.items()}
    for rname, rds in rows.items():
        for tname, tds in tests.items():
            check_label_sets(rds.labels, tds.labels)
    table, metrics = [], {}
    for rname, rds in rows.items():
        tr_vec = featurize(rds, feature_set)
        accs = {t: [] for t in tests}
        for cfg in seed_configs(config, repetitions):
            model = KeywordClassifier.fit(rds, feature_set, cfg, vectors=tr_vec)
            for tname, tds in tests.items():
                pred = model.predict(tds, test_vecs[tname])
                accs[tname].append(float(np.mean(pred == np.array(tds.labels, dtype=object))))
        for tname in tests:
            s = _summary(accs[tname])
            table.append({"train": rname, "test": tname, "mean": s["accuracy_mean"], "std": s["accuracy_std"]})
            metrics[f"{rname}->{tname}"] = s["accuracy_mean"]
    return EvalReport(
        "cross-platform",
        metrics=metrics,
        rows=table,
        config=_config_dict(config, feature_set=feature_set, repetitions=repetitions,
                            merged=[list(g) for g in merged]),
    )


def time_gap_eval(
    train: Dataset,
    tests: Sequence[tuple[str, Dataset]],
    feature_set: str,
    config: TrainConfig = TrainConfig(),
    repetitions: int = DEFAULT_REPETITIONS,
) -> EvalReport:
    """Fixed models scored on test sets taken at growing gaps, in the given order."""
    for _, tds in tests:
        check_label_sets(train.labels, tds.labels)
    tr_vec = featurize(train, feature_set)
    te_vecs = [featurize(tds, feature_set) for _, tds in tests]
    accs = [[] for _ in tests]
    for cfg in seed_configs(config, repetitions):
        model = KeywordClassifier.fit(train, feature_set, cfg, vectors=tr_vec)
        for j, ((_, tds), vecs) in enumerate(zip(tests, te_vecs)):
            accs[j].append(float(np.mean(model.predict(tds, vecs) == np.array(tds.labels, dtype=object))))
    rows = []
    for (gap, _), a in zip(tests, accs):
        s = _summary(a)
        rows.append({"gap": gap, "mean": s["accuracy_mean"], "std": s["accuracy_std"]})
    return EvalReport(
        "time-gap",
        metrics={f"gap:{r['gap']}": r["mean"] for r in rows},
        rows=rows,
        config=_config_dict(config, feature_set=feature_set, repetitions=repetitions),
    )


# --------------------------------------------------------------------------
# page vs query

PAGE, QUERY = "page", "query"


def census_matrix(
    samples: Sequence[TraceSample],
    domains: Sequence[str] | None = None,
    public_suffixes: Iterable[str] = DEFAULT_PUBLIC_SUFFIXES,
) -> tuple[np.ndarray, tuple[str, ...]]:
    """Connection count per second-level domain; columns are the sorted observed domains."""
    censuses = [domain_census(s, public_suffixes).counts for s in samples]
    if domains is None:
        domains = sorted({d for c in censuses for d in c})
    col = {d: j for j, d in enumerate(domains)}
    X = np.zeros((len(samples), len(domains)))
    for i, c in enumerate(censuses):
        for d, n in c.items():
            if d in col:
                X[i, col[d]] = n
    return X, tuple(domains)


def page_vs_query_eval(
    pages: Dataset,
    queries: Dataset,
    config: TrainConfig = TrainConfig(),
    repetitions: int = DEFAULT_REPETITIONS,
    test_fraction: float = 0.5,
) -> EvalReport:
    """Tell web-page visits from search queries by their per-domain connection counts.

    Each repetition draws a fresh stratified split (seeded by the
    repetition's forest seed) and trains a binary forest on the rest.
    """
    if not len(pages) or not len(queries):
        raise PreconditionError("both pages and queries must be non-empty")
    if not 0 < test_fraction < 1:
        raise PreconditionError("test_fraction must lie in (0, 1)")
    samples = list(pages) + list(queries)
    X, domains = census_matrix(samples)
    y = np.array([PAGE] * len(pages) + [QUERY] * len(queries), dtype=object)
    accs = []
    for cfg in seed_configs(config, repetitions):
        rng = np.random.default_rng([cfg.rng_seed, 1])
        test_mask = np.zeros(len(y), dtype=bool)
        for cls in (PAGE, QUERY):
            idx = np.flatnonzero(y == cls)
            n_test = min(len(idx) - 1, max(1, round(test_fraction * len(idx))))
            test_mask[rng.permutation(idx)[:n_test]] = True
        forest = train_forest(X[~test_mask], y[~test_mask], cfg, feature_names=domains)
        accs.append(float(np.mean(forest.predict(X[test_mask]) == y[test_mask])))
    return EvalReport(
        "page-vs-query",
        metrics={**_summary(accs), "n_domains": len(domains)},
        config=_config_dict(config, repetitions=repetitions, test_fraction=test_fraction),
        rows=[{"domain": d} for d in domains],
    )
