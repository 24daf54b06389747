import csv
import json
import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from conftest import make_sample
from kwfp.errors import LabelMismatchError, PreconditionError
from kwfp.evaluation import (
    ConfusionCounts, EvalReport, KeywordClassifier, SplitSpec, UndefinedMetricError, binary_eval,
    census_matrix, closed_world_eval, cross_platform_eval, export_lda_csv, fit_binary,
    fit_keyword_model, interleaved_split, lda_project, multiclass_counts, multiclass_eval,
    multilevel_eval, page_vs_query_eval, prc_and_ap, scatter_matrices, time_gap_eval,
)
from kwfp.learner import TrainConfig
from kwfp.synth import build_world, generate_dataset, with_profile
from kwfp.trace import Dataset

FAST = TrainConfig(n_trees=30, rng_seed=0)


def labelled(labels_visits):
    return Dataset(tuple(make_sample([([(0, 1, 10)], {})], label=lbl, visit_index=v) for lbl, v in labels_visits))


# ---------------------------------------------------------------- splits

@pytest.mark.parametrize("n, spec, sizes", [(54, "4:1:1", (36, 9, 9)), (40, "8:1:1", (32, 4, 4))])
def test_split_sizes(n, spec, sizes):
    d = labelled([("a", v) for v in range(n)] + [("b", v) for v in range(n)])
    parts = interleaved_split(d, SplitSpec.parse(spec))
    assert tuple(len(p) for p in parts) == tuple(2 * s for s in sizes)


def test_single_block_assignment():
    d = labelled([("a", v) for v in (5, 3, 1, 0, 2, 4)])
    tr, va, te = interleaved_split(d, SplitSpec(4, 1, 1))
    assert [s.meta.visit_index for s in tr] == [0, 1, 2, 3]
    assert [s.meta.visit_index for s in va] == [4]
    assert [s.meta.visit_index for s in te] == [5]
    assert "[train 4:1:1]" in tr.provenance


def test_split_names_short_keywords():
    d = labelled([("a", v) for v in range(6)] + [("zz", v) for v in range(3)])
    with pytest.raises(PreconditionError, match="zz"):
        interleaved_split(d)
    with pytest.raises(PreconditionError):
        SplitSpec.parse("4:1")
    with pytest.raises(PreconditionError):
        SplitSpec(0, 0, 0)


@given(st.integers(0, 5), st.integers(0, 3), st.integers(0, 3), st.integers(0, 40))
def test_split_partitions_full_blocks(a, b, c, extra):
    if a + b + c == 0:
        return
    n = a + b + c + extra
    d = labelled([("k", v) for v in range(n)])
    parts = interleaved_split(d, SplitSpec(a, b, c))
    ids = [s.meta.visit_index for p in parts for s in p]
    full = n - n % (a + b + c)
    assert sorted(ids) == list(range(full))
    assert len(parts[0]) == a * (full // (a + b + c))


# ---------------------------------------------------------------- metrics

def brute_force_ap(scores, targeted):
    scores, targeted = list(scores), list(targeted)
    n_pos = sum(targeted)
    ap, prev_r = 0.0, 0.0
    for t in sorted(set(scores), reverse=True):
        tp = sum(1 for s, y in zip(scores, targeted) if s >= t and y)
        fp = sum(1 for s, y in zip(scores, targeted) if s >= t and not y)
        r, p = tp / n_pos, tp / (tp + fp)
        ap += (r - prev_r) * p
        prev_r = r
    return ap


def test_ap_worked_example():
    curve, ap = prc_and_ap([0.9, 0.8, 0.7], [True, False, True])
    assert ap == pytest.approx(0.5 * 1 + 0 * 0.5 + 0.5 * (2 / 3), abs=1e-12)
    assert ap == pytest.approx(0.8333333333, abs=1e-9)
    assert curve.points() == [(0.7, 2 / 3, 1.0), (0.8, 0.5, 0.5), (0.9, 1.0, 0.5)]


def test_ap_perfect_and_degenerate():
    assert prc_and_ap([0.9, 0.8, 0.7, 0.1, 0.0], [1, 1, 1, 0, 0])[1] == 1.0
    curve, ap = prc_and_ap([0.5] * 4, [1, 0, 0, 1])
    assert len(curve.thresholds) == 1 and ap == 0.5
    with pytest.raises(UndefinedMetricError):
        prc_and_ap([0.1, 0.2], [0, 0])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 10), st.booleans()), min_size=1, max_size=40))
def test_ap_matches_brute_force(pairs):
    scores = [s / 10 for s, _ in pairs]
    targeted = [y for _, y in pairs]
    if not any(targeted):
        return
    curve, ap = prc_and_ap(scores, targeted)
    assert ap == pytest.approx(brute_force_ap(scores, targeted), abs=1e-9)
    assert (np.diff(curve.recall) <= 1e-15).all()
    assert ((curve.precision >= 0) & (curve.precision <= 1)).all()


def test_count_examples():
    c = ConfusionCounts(tp=8, fn=1, fp=2, tn=9)
    assert c.fnr == pytest.approx(1 / 9) and c.fpr == pytest.approx(2 / 11)
    m = ConfusionCounts(tp=8, fn=1, fm=1)
    assert m.fmr == pytest.approx(0.1) and m.tpr == pytest.approx(0.8)
    assert ConfusionCounts().precision is None
    with pytest.raises(ValueError):
        ConfusionCounts(tp=-1)


def test_multiclass_counts_all_sentinel():
    c = multiclass_counts(["-1"] * 3, ["a", "b", "c"])
    assert (c.tpr, c.fmr, c.fn / c.targeted) == (0, 0, 1)


@given(st.lists(st.tuples(st.sampled_from(["a", "b", "-1"]), st.sampled_from(["a", "b", "-1"])), max_size=50))
def test_multiclass_partition_identity(pairs):
    c = multiclass_counts([p for p, _ in pairs], [t for _, t in pairs])
    assert c.tp + c.fn + c.fm == sum(1 for _, t in pairs if t != "-1")
    assert c.fp + c.tn == sum(1 for _, t in pairs if t == "-1")
    if c.targeted:
        assert c.tpr + c.fmr + c.fn / c.targeted == pytest.approx(1.0)


# ---------------------------------------------------------------- closed world

@pytest.fixture(scope="module")
def small_world():
    return build_world(31, 5, "stable")


def test_closed_world_on_training_subset_is_perfect(small_world):
    train = generate_dataset(small_world, 6)
    rep = closed_world_eval(train, train[::3], "psc", FAST, repetitions=3)
    assert rep.metrics["accuracy_mean"] == 1.0 and rep.metrics["accuracy_std"] == 0.0
    assert len(rep.metrics["accuracies"]) == 3


def test_single_repetition_has_zero_std(small_world):
    train = generate_dataset(small_world, range(4))
    test = generate_dataset(small_world, range(4, 6))
    rep = closed_world_eval(train, test, "kfp", FAST, repetitions=1)
    assert rep.metrics["accuracy_std"] == 0.0
    assert set(rep.per_class) == set(small_world.keywords)


def test_permuted_labels_sit_at_chance():
    w = build_world(32, 10, "stable")
    train = generate_dataset(w, 10)
    labels = np.random.default_rng(1).permutation(train.labels)
    shuffled = Dataset(tuple(s.with_connections(s.connections, label=str(l)) for s, l in zip(train, labels)))
    test = generate_dataset(w, range(10, 20))
    acc = closed_world_eval(shuffled, test, "psc", FAST, repetitions=1).metrics["accuracy_mean"]
    p, n = 0.1, len(test)
    assert abs(acc - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_label_mismatch_is_rejected(small_world):
    train = generate_dataset(small_world, 2)
    test = generate_dataset(small_world, 2, keywords=small_world.keywords[:3])
    with pytest.raises(LabelMismatchError, match="absent from test"):
        closed_world_eval(train, test, "psc", FAST)


# ---------------------------------------------------------------- open world

@pytest.fixture(scope="module")
def open_world():
    """Eight targeted keywords plus non-targeted traffic from an unrelated world, noisy profile."""
    prof = with_profile("noisy", template_noise=3.0)
    w = build_world(21, 12, prof)
    kws = w.keywords[:8]
    wn = build_world(22, 40, prof)
    train = generate_dataset(w, range(10), keywords=kws) + generate_dataset(wn, range(3), label="-1")
    test_t = generate_dataset(w, range(10, 20), keywords=kws)
    test_n = generate_dataset(wn, range(3, 6), label="-1")
    cfg = TrainConfig(n_trees=60, rng_seed=0)
    return {
        "train": train, "test_t": test_t, "test_n": test_n, "cfg": cfg,
        "binary": fit_binary(train, "kfp", cfg), "keyword": fit_keyword_model(train, "kfp", cfg),
    }


def test_binary_separable_gives_unit_ap(small_world):
    other = build_world(33, 5, "stable")
    train = generate_dataset(small_world, 4) + generate_dataset(other, 4, label="-1")
    test = generate_dataset(small_world, range(4, 6)) + generate_dataset(other, range(4, 6), label="-1")
    rep = binary_eval(train, test, "kfp", FAST)
    assert rep.metrics["ap"] == 1.0
    with pytest.raises(PreconditionError):
        fit_binary(generate_dataset(small_world, 2), "kfp", FAST)


def test_binary_counts_recompute_metrics(open_world):
    ow = open_world
    rep = binary_eval(ow["train"], ow["test_t"] + ow["test_n"], "kfp", model=ow["binary"])
    c = rep.counts
    assert rep.metrics["precision"] == c.tp / (c.tp + c.fp)
    assert rep.metrics["recall"] == c.tp / (c.tp + c.fn)
    assert rep.metrics["fpr"] == c.fp / (c.fp + c.tn)
    assert c.tp + c.fn == len(ow["test_t"]) and c.fp + c.tn == len(ow["test_n"])


def test_ap_weakly_decreases_as_non_targeted_grow(open_world):
    ow = open_world
    aps = [binary_eval(ow["train"], ow["test_t"] + ow["test_n"][:k], "kfp", model=ow["binary"]).metrics["ap"]
           for k in (0, 10, 40, 80, 120)]
    assert all(b <= a + 1e-12 for a, b in zip(aps, aps[1:]))
    assert aps[-1] < aps[0]


def test_multilevel_perfect_case(small_world):
    other = build_world(34, 5, "stable")
    train = generate_dataset(small_world, 4) + generate_dataset(other, 4, label="-1")
    test = generate_dataset(small_world, range(4, 6)) + generate_dataset(other, range(4, 6), label="-1")
    rep = multilevel_eval(fit_binary(train, "kfp", FAST), fit_keyword_model(train, "kfp", FAST), test)
    assert (rep.metrics["fpr"], rep.metrics["fnr"], rep.metrics["accuracy_ml"]) == (0, 0, 1)


def test_multilevel_without_true_positives_is_undefined(open_world, tmp_path):
    ow = open_world
    rep = multilevel_eval(ow["binary"], ow["keyword"], ow["test_n"])
    assert rep.metrics["accuracy_ml"] is None and rep.metrics["fnr"] is None
    rep.write(tmp_path / "r.json", tmp_path / "r.csv")
    assert json.loads((tmp_path / "r.json").read_text())["metrics"]["accuracy_ml"] is None
    rows = dict(csv.reader(open(tmp_path / "r.csv")))
    assert rows["accuracy_ml"] == "undefined"


def test_multilevel_fnr_ignores_non_targeted(open_world):
    ow = open_world
    base = multilevel_eval(ow["binary"], ow["keyword"], ow["test_t"])
    more = multilevel_eval(ow["binary"], ow["keyword"], ow["test_t"] + ow["test_n"])
    assert base.metrics["fnr"] == more.metrics["fnr"]
    assert base.counts.tp == more.counts.tp


def test_multilevel_and_multiclass_agree_on_false_monitored_rate(open_world):
    ow = open_world
    test = ow["test_t"] + ow["test_n"]
    ml = multilevel_eval(ow["binary"], ow["keyword"], test)
    pipeline_fm = (ml.counts.tp - ml.metrics["stage2_correct"]) / ml.counts.targeted
    mc = multiclass_eval(KeywordClassifier.fit(ow["train"], "kfp", ow["cfg"]), test)
    n = ml.counts.targeted
    p = (pipeline_fm + mc.metrics["fmr"]) / 2
    assert abs(pipeline_fm - mc.metrics["fmr"]) <= 3 * math.sqrt(max(p * (1 - p), 1 / n) * 2 / n)
    c = mc.counts
    assert c.tp + c.fn + c.fm == n
    assert mc.metrics["tpr"] + mc.metrics["fmr"] + mc.metrics["fn_fraction"] == pytest.approx(1.0)


def test_multiclass_needs_sentinel(small_world):
    model = KeywordClassifier.fit(generate_dataset(small_world, 2), "psc", FAST)
    with pytest.raises(PreconditionError):
        multiclass_eval(model, generate_dataset(small_world, 1))


# ---------------------------------------------------------------- cross-platform and time gap

def test_cross_platform_same_distribution(small_world):
    trains = {"a": generate_dataset(small_world, 5, browser="a"), "b": generate_dataset(small_world, 5, browser="b")}
    tests = {"a": generate_dataset(small_world, range(5, 8), browser="a"),
             "b": generate_dataset(small_world, range(5, 8), browser="b")}
    rep = cross_platform_eval(trains, tests, "kfp", FAST, repetitions=1, merged=[("a", "b")])
    m = rep.metrics
    assert abs(m["a->b"] - m["a->a"]) <= 0.15 and abs(m["b->a"] - m["b->b"]) <= 0.15
    assert [(r["train"], r["test"]) for r in rep.rows] == [
        ("a", "a"), ("a", "b"), ("b", "a"), ("b", "b"), ("a+b", "a"), ("a+b", "b")]
    with pytest.raises(PreconditionError):
        cross_platform_eval(trains, tests, "kfp", FAST, merged=[("a", "zz")])


def test_time_gap_keeps_input_order(small_world):
    train = generate_dataset(small_world, 4)
    tests = [(g, generate_dataset(small_world, range(10, 12), gap=float(g))) for g in ("9", "1", "5")]
    rep = time_gap_eval(train, tests, "kfp", FAST, repetitions=1)
    assert [r["gap"] for r in rep.rows] == ["9", "1", "5"]


# ---------------------------------------------------------------- LDA

def lda_oracle(X, y, k):
    """Generalized symmetric eigenproblem solved directly by LAPACK."""
    Xc = X - X.mean(axis=0)
    sw, sb = scatter_matrices(Xc, y)
    d = X.shape[1]
    eps = 1e-6 * np.trace(sw) / d
    vals, vecs = scipy.linalg.eigh(sb, sw + eps * np.eye(d))
    order = np.argsort(vals)[::-1][:k]
    return vals[order], Xc @ vecs[:, order]


def test_lda_matches_generalized_eigensolver():
    rng = np.random.default_rng(40)
    means = rng.normal(0, 3, size=(5, 8))
    X = np.vstack([m + rng.normal(size=(40, 8)) @ np.diag(rng.uniform(0.5, 2, 8)) for m in means])
    y = np.repeat(np.arange(5), 40)
    res = lda_project(X, y, 3)
    vals, coords = lda_oracle(X, y, 3)
    assert res.converged
    assert np.allclose(res.eigenvalues, vals, rtol=1e-8)
    for j in range(3):
        a, b = res.coords[:, j], coords[:, j]
        assert min(np.abs(a - b).max(), np.abs(a + b).max()) <= 1e-6 * np.abs(b).max()


def test_lda_gaussian_separation():
    rng = np.random.default_rng(41)
    X = np.r_[rng.normal(-10, 1, 200), rng.normal(10, 1, 200)][:, None]
    y = np.repeat([0, 1], 200)
    z = lda_project(X, y, 1).coords[:, 0]
    pooled = math.sqrt((z[y == 0].var() + z[y == 1].var()) / 2)
    assert abs(z[y == 0].mean() - z[y == 1].mean()) > 5 * pooled


def test_lda_identical_classes_do_not_separate():
    rng = np.random.default_rng(42)
    X = rng.normal(size=(400, 2))
    y = np.repeat([0, 1], 200)
    z = lda_project(X, y, 1).coords[:, 0]
    diff = z[y == 0].mean() - z[y == 1].mean()
    assert abs(diff) <= 3 * z.std() * math.sqrt(2 / 200) * 1.5


def test_lda_invariant_to_translation_and_sign_canonical():
    rng = np.random.default_rng(43)
    X = rng.normal(size=(90, 4)) + np.repeat(np.eye(3, 4) * 4, 30, axis=0)
    y = np.repeat([0, 1, 2], 30)
    a = lda_project(X, y, 2)
    b = lda_project(X + 1000.0, y, 2)
    assert np.allclose(a.coords, b.coords, atol=1e-6)
    for j in range(2):
        col = a.directions[:, j]
        assert col[np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())[0]] > 0


def test_lda_dimension_limits(tmp_path):
    X = np.random.default_rng(44).normal(size=(20, 5))
    y = np.repeat([0, 1], 10)
    with pytest.raises(PreconditionError):
        lda_project(X, y, 2)
    with pytest.raises(PreconditionError):
        lda_project(X, np.zeros(20), 1)
    res = lda_project(X, y, 1)
    export_lda_csv(res, [str(v) for v in y], [f"s{i}" for i in range(20)], tmp_path / "l.csv")
    rows = list(csv.reader(open(tmp_path / "l.csv")))
    assert rows[0] == ["sample_id", "label", "x", "y", "z"] and rows[1][3:] == ["", ""]


# ---------------------------------------------------------------- page vs query

def test_page_vs_query_separates():
    pages = generate_dataset(build_world(11, 10, "page"), 5, label="page")
    queries = generate_dataset(build_world(12, 10, "stable"), 5, label="query")
    rep = page_vs_query_eval(pages, queries, FAST, repetitions=2)
    assert rep.metrics["accuracy_mean"] >= 0.99
    X, domains = census_matrix(list(pages) + list(queries))
    assert rep.metrics["n_domains"] == len(domains) == X.shape[1]
    assert len(set(domains)) == len(domains)


def test_page_vs_query_identical_distributions_near_chance():
    w = build_world(13, 20, "noisy")
    a = generate_dataset(w, range(0, 10, 2))
    b = generate_dataset(w, range(1, 10, 2))
    rep = page_vs_query_eval(a, b, FAST, repetitions=3)
    n_test = 100
    assert abs(rep.metrics["accuracy_mean"] - 0.5) <= 3 * math.sqrt(0.25 / (3 * n_test)) + 0.05


def test_page_vs_query_preconditions():
    with pytest.raises(PreconditionError):
        page_vs_query_eval(Dataset(), labelled([("a", 0)]))


def test_report_json_round_trip(tmp_path):
    rep = EvalReport("x", metrics={"a": 0.5, "b": None}, counts=ConfusionCounts(tp=1))
    rep.write(tmp_path / "r.json", tmp_path / "r.csv")
    obj = json.loads((tmp_path / "r.json").read_text())
    assert obj["metrics"] == {"a": 0.5, "b": None} and obj["counts"]["tp"] == 1
