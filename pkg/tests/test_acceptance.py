"""Acceptance suite: one test per criterion, each logging a single PASS/FAIL line.

The lines are printed inline (visible with ``-s``) and repeated in the
terminal summary of every pytest run that includes this module.
"""

import math
import time
from fractions import Fraction

import dpkt
import numpy as np
import pytest

from conftest import SESSION_START, random_dataset, random_sample, record
from test_evaluation import brute_force_ap
from test_features import loop_bursts, merged
from test_ingest import client_hello, tcp, write_pcap
from kwfp.countermeasures import CmConfig, apply_countermeasure, bandwidth_overhead, httpos_transform
from kwfp.evaluation import (
    KeywordClassifier, SplitSpec, cross_platform_eval, fit_binary, fit_keyword_model, interleaved_split,
    multiclass_counts, multiclass_eval, multilevel_eval, page_vs_query_eval, prc_and_ap, time_gap_eval,
)
from kwfp.features import extract_bursts, featurize, psc, wfinpp_extras
from kwfp.ingest import ingest_session
from kwfp.learner import TrainConfig, forward_select, rank_categories, train_forest
from kwfp.synth import build_world, generate_dataset, with_profile
from kwfp.trace import Connection, Dataset, SampleMeta, TraceSample, load_dataset, save_dataset


def verdict(number: int, ok: bool, detail: str) -> None:
    record(number, ok, detail)
    print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def sigma(p: float, n: int) -> float:
    return math.sqrt(p * (1 - p) / n)


def accuracy(pred, ds) -> float:
    return float(np.mean(np.asarray(pred) == np.array(ds.labels, dtype=object)))


# ---------------------------------------------------------------- 1

def test_criterion_01_format_round_trip(tmp_path):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    failures = 0
    for i in range(100):
        ds = random_dataset(rng, int(rng.integers(1, 30)))
        path = tmp_path / f"d{i}.jsonl"
        save_dataset(ds, path)
        failures += load_dataset(path) != ds
    dt = time.perf_counter() - t0
    verdict(1, failures == 0 and dt < 10, f"100 datasets round-trip, {failures} mismatches, {dt:.2f} s (limit 10 s)")


# ---------------------------------------------------------------- 2

A, B, C = "10.0.0.1", "93.184.216.34", "151.101.1.1"
TICK = 1 / 64  # exact in binary, so microsecond timestamps are unambiguous


def golden_frames(h1, h2):
    return [
        tcp(A, B, 50000, 443, "S", seq=10, t=0 * TICK),
        tcp(A, C, 50001, 443, "S", seq=20, t=1 * TICK),
        tcp(B, A, 443, 50000, "SA", seq=70, t=2 * TICK),
        tcp(C, A, 443, 50001, "SA", seq=80, t=3 * TICK),
        tcp(A, B, 50000, 443, "A", seq=11, t=4 * TICK),
        tcp(A, C, 50001, 443, "A", seq=21, t=5 * TICK),
        tcp(A, B, 50000, 443, "PA", seq=11, payload=h1, t=6 * TICK),
        tcp(A, C, 50001, 443, "PA", seq=21, payload=h2, t=7 * TICK),
        tcp(B, A, 443, 50000, "PA", seq=71, payload=b"r" * 1460, t=8 * TICK),
        tcp(C, A, 443, 50001, "PA", seq=81, payload=b"s" * 700, t=9 * TICK),
        tcp(A, B, 50000, 443, "PA", seq=11 + len(h1), payload=b"q" * 50, t=10 * TICK),
    ]


def dpkt_connections(path):
    """Independent reading: payload-bearing TCP segments per 4-tuple, client = SYN sender."""
    flows, client, sni, origin = {}, {}, {}, None
    for ts, buf in dpkt.pcap.Reader(open(path, "rb")):
        us = round(ts * 1e6)
        origin = us if origin is None else origin
        ip = dpkt.ethernet.Ethernet(buf).data
        seg = ip.data
        src, dst = (ip.src, seg.sport), (ip.dst, seg.dport)
        key = frozenset((src, dst))
        if seg.flags & dpkt.tcp.TH_SYN and not seg.flags & dpkt.tcp.TH_ACK:
            client[key] = src
        if not seg.data:
            continue
        out = src == client[key]
        if out and key not in sni:
            hello = dpkt.ssl.TLSHandshake(dpkt.ssl.TLSRecord(seg.data).data).data
            name = dict(hello.extensions)[0]
            sni[key] = name[5:].decode()
        flows.setdefault(key, []).append((us - origin, -1 if out else 1, len(seg.data)))
    return [(pkts, sni.get(key)) for key, pkts in flows.items()]


def test_criterion_02_ingest_goldens(tmp_path):
    h1, h2 = client_hello("duckduckgo.com"), client_hello("search.yahoo.com")
    frames = golden_frames(h1, h2)
    expected = [
        ([(93750, -1, len(h1)), (125000, 1, 1460), (156250, -1, 50)], "duckduckgo.com"),
        ([(109375, -1, len(h2)), (140625, 1, 700)], "search.yahoo.com"),
    ]
    meta = SampleMeta("weather", engine="duckduckgo", browser="chrome")
    problems = []
    for order in ("<", ">"):
        path = write_pcap(tmp_path / f"golden{order == '>'}.pcap", frames, endianness=order)
        s = ingest_session(path, meta)
        got = [(list(zip(c.timestamps.tolist(), c.directions.tolist(), c.sizes.tolist())), c.server_name)
               for c in s.connections]
        if got != expected:
            problems.append(f"byte order {order!r}: {got}")
        if got != dpkt_connections(path):
            problems.append(f"dpkt disagrees for byte order {order!r}")
        if any(c.server_port != 443 for c in s.connections):
            problems.append("server port")
    verdict(2, not problems, "handshake, SNI, interleaved flows and both byte orders match goldens and dpkt"
            if not problems else "; ".join(problems))


# ---------------------------------------------------------------- 3

def test_criterion_03_feature_oracles():
    rng = np.random.default_rng(303)
    t0 = time.perf_counter()
    bad = {"psc": 0, "bursts": 0, "reversed": 0}
    for _ in range(1000):
        s = random_sample(rng)
        pairs = merged(s)
        oracle = {}
        for d, size in pairs:
            key = f"packet_size_count/{'in' if d > 0 else 'out'}:{size:05d}"
            oracle[key] = oracle.get(key, 0) + 1
        bad["psc"] += psc(s).as_dict() != oracle
        bursts = [(int(b.direction), b.packet_count, b.byte_sum) for b in extract_bursts(s)]
        tiles = sum(b[1] for b in bursts) == len(pairs)
        alternates = all(a[0] != b[0] for a, b in zip(bursts, bursts[1:]))
        bad["bursts"] += not (bursts == loop_bursts(pairs) and tiles and alternates)
        total = sum(size for _, size in pairs)
        fv = wfinpp_extras(s)
        bad["reversed"] += not (fv.category("reversed_cumulative_packet_size")[-1] == total
                                == fv.category("reversed_cumulative_burst_size")[-1])
    dt = time.perf_counter() - t0
    verdict(3, not any(bad.values()) and dt < 30, f"1000 samples, mismatches {bad}, {dt:.1f} s (limit 30 s)")


# ---------------------------------------------------------------- 4

def test_criterion_04_metric_oracles():
    rng = np.random.default_rng(404)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 41))
        scores = (rng.integers(0, 11, size=n) / 10).tolist()
        targeted = rng.integers(0, 2, size=n).astype(bool)
        targeted[rng.integers(n)] = True
        worst = max(worst, abs(prc_and_ap(scores, targeted)[1] - brute_force_ap(scores, targeted)))
    example = prc_and_ap([0.9, 0.8, 0.7], [True, False, True])[1]

    # multiclass partition identity over random and trained runs
    partition_ok = True
    for _ in range(100):
        truth = rng.choice(["a", "b", "c", "-1"], size=30).tolist()
        pred = rng.choice(["a", "b", "c", "-1"], size=30).tolist()
        c = multiclass_counts(pred, truth)
        partition_ok &= c.tp + c.fn + c.fm == c.targeted == sum(t != "-1" for t in truth)
        partition_ok &= c.targeted == 0 or abs(c.tpr + c.fmr + c.fn / c.targeted - 1) < 1e-12

    prof = with_profile("noisy", template_noise=3.0)
    w, wn = build_world(41, 6, prof), build_world(42, 30, prof)
    train = generate_dataset(w, range(6)) + generate_dataset(wn, range(2), label="-1")
    test_t = generate_dataset(w, range(6, 12))
    test_n = generate_dataset(wn, range(2, 6), label="-1")
    cfg = TrainConfig(n_trees=40, rng_seed=0)
    mc_model = KeywordClassifier.fit(train, "kfp", cfg)
    binary, keyword = fit_binary(train, "kfp", cfg), fit_keyword_model(train, "kfp", cfg)
    fnrs = []
    for k in (0, 30, 60, 120):
        test = test_t + test_n[:k]
        m = multiclass_eval(mc_model, test).metrics
        partition_ok &= abs(m["tpr"] + m["fmr"] + m["fn_fraction"] - 1) < 1e-12
        fnrs.append(multilevel_eval(binary, keyword, test).metrics["fnr"])
    fnr_ok = len(set(fnrs)) == 1

    ok = worst <= 1e-9 and abs(example - 5 / 6) <= 1e-9 and partition_ok and fnr_ok
    verdict(4, ok, f"AP max error {worst:.1e} over 100 sets, example AP {example:.10f}, "
                   f"partition {'holds' if partition_ok else 'broken'}, FNR over growing non-targeted {fnrs}")


# ---------------------------------------------------------------- 5

def test_criterion_05_split_exactness():
    def corpus(n):
        return Dataset(tuple(random_sample(np.random.default_rng(v), label=k, visit_index=v, max_conns=1, max_packets=1)
                             for k in ("a", "b") for v in range(n)))

    sizes54 = tuple(len(p) // 2 for p in interleaved_split(corpus(54), SplitSpec(4, 1, 1)))
    sizes40 = tuple(len(p) // 2 for p in interleaved_split(corpus(40), SplitSpec(8, 1, 1)))
    tr, va, te = interleaved_split(corpus(54), SplitSpec(4, 1, 1))
    pattern = (
        all(s.meta.visit_index % 6 in range(4) for s in tr)
        and all(s.meta.visit_index % 6 == 4 for s in va)
        and all(s.meta.visit_index % 6 == 5 for s in te)
    )
    ok = sizes54 == (36, 9, 9) and sizes40 == (32, 4, 4) and pattern
    verdict(5, ok, f"54 at 4:1:1 -> {sizes54}, 40 at 8:1:1 -> {sizes40}, block pattern {'ok' if pattern else 'wrong'}")


# ---------------------------------------------------------------- 6

@pytest.fixture(scope="module")
def stable50():
    return build_world(6, 50, "stable")


def test_criterion_06_learner_soundness(stable50):
    t0 = time.perf_counter()
    tr, _, te = interleaved_split(generate_dataset(stable50, 54), SplitSpec(5, 0, 1))
    trv, tev = featurize(tr, "psc"), featurize(te, "psc")
    cfg = TrainConfig(n_trees=100, rng_seed=0)
    pred = KeywordClassifier.fit(tr, "psc", cfg, vectors=trv).predict(te, tev)
    again = KeywordClassifier.fit(tr, "psc", cfg, vectors=trv).predict(te, tev)
    acc = accuracy(pred, te)
    perm = np.random.default_rng(1).permutation(np.array(tr.labels, dtype=object)).tolist()
    acc_perm = accuracy(KeywordClassifier.fit(tr, "psc", cfg, labels=perm, vectors=trv).predict(te, tev), te)
    band = 3 * sigma(1 / 50, len(te))
    dt = time.perf_counter() - t0
    ok = (len(tr), len(te)) == (45 * 50, 9 * 50) and acc >= 0.95 and abs(acc_perm - 1 / 50) <= band \
        and np.array_equal(pred, again) and dt < 120
    verdict(6, ok, f"accuracy {acc:.4f} (>= 0.95), permuted {acc_perm:.4f} (0.02 ± {band:.4f}), "
                   f"replay {'identical' if np.array_equal(pred, again) else 'differs'}, {dt:.0f} s (limit 120 s)")


# ---------------------------------------------------------------- 7

def planted_two_categories(rng, n):
    """Four classes coded by two bits; only categories ``sig_a`` and ``sig_b`` carry them."""
    y = rng.integers(0, 4, size=n)
    a = (y & 1)[:, None] * 3.0 + rng.normal(0, 0.3, size=(n, 2))
    b = (y >> 1)[:, None] * 3.0 + rng.normal(0, 0.3, size=(n, 2))
    noise = rng.normal(size=(n, 8))
    X = np.hstack([noise[:, :4], a, noise[:, 4:], b])
    cats = ["n0", "n0", "n1", "n1", "sig_a", "sig_a", "n2", "n2", "n3", "n3", "sig_b", "sig_b"]
    return X, y, cats


def test_criterion_07_selection_sanity():
    rng = np.random.default_rng(707)
    X, y, cats = planted_two_categories(rng, 400)
    cfg = TrainConfig(n_trees=50, rng_seed=3)
    top = rank_categories(train_forest(X[:300], y[:300], cfg), cats)[:2]
    res = forward_select((X[:300], y[:300]), (X[300:], y[300:]), cats, cfg, grid=[1, 2, 3, 5])
    ok = set(top) == {"sig_a", "sig_b"} and res.accuracies[res.best_n] >= res.accuracies[1]
    verdict(7, ok, f"top-2 categories {top}, best N {res.best_n} at {res.accuracies[res.best_n]:.3f} "
                   f"vs N=1 at {res.accuracies[1]:.3f}")


# ---------------------------------------------------------------- 8

def test_criterion_08_cross_platform_collapse():
    w = build_world(8, 20, "stable")
    trains = {"chrome": generate_dataset(w, range(20)),
              "firefox": generate_dataset(w, range(20), browser="firefox", size_shift=25)}
    tests = {"chrome": generate_dataset(w, range(20, 30)),
             "firefox": generate_dataset(w, range(20, 30), browser="firefox", size_shift=25)}
    m = cross_platform_eval(trains, tests, "psc", TrainConfig(n_trees=50, rng_seed=0), 1,
                            merged=[("chrome", "firefox")]).metrics
    chance = 1 / 20
    diag = min(m["chrome->chrome"], m["firefox->firefox"])
    off = max(m["chrome->firefox"], m["firefox->chrome"])
    merged_acc = min(m["chrome+firefox->chrome"], m["chrome+firefox->firefox"])
    ok = diag >= 0.95 and off <= 2 * chance and merged_acc >= 0.90
    verdict(8, ok, f"diagonal min {diag:.3f} (>= 0.95), off-diagonal max {off:.3f} (<= {2 * chance:.2f}), "
                   f"merged min {merged_acc:.3f} (>= 0.90)")


# ---------------------------------------------------------------- 9

def test_criterion_09_countermeasure_contracts():
    defaults = CmConfig()
    rng = np.random.default_rng(909)
    ds = random_dataset(rng, 200)
    padded, _, _ = apply_countermeasure(ds, "pad-to-mtu")
    sizes = [int(x) for s in ds for c in s.connections for x in c.sizes]
    exact = Fraction(sum(1500 - x for x in sizes), sum(sizes))
    rep = bandwidth_overhead(ds, padded)
    overhead_ok = Fraction(rep.transformed_bytes - rep.original_bytes, rep.original_bytes) == exact \
        and rep.overhead == float(exact)

    w = build_world(6, 50, "stable", shared_skeleton=True)
    tr, _, te = interleaved_split(generate_dataset(w, 54), SplitSpec(5, 0, 1))
    cfg = TrainConfig(n_trees=100, rng_seed=0)
    before = accuracy(KeywordClassifier.fit(tr, "psc", cfg).predict(te), te)
    ptr, _, _ = apply_countermeasure(tr, "pad-to-mtu")
    pte, _, _ = apply_countermeasure(te, "pad-to-mtu")
    after = accuracy(KeywordClassifier.fit(ptr, "psc", cfg).predict(pte), pte)

    errors = {}
    for s in (1, 400, 1460):
        conn = Connection(np.zeros(10_000, dtype=np.int64), np.ones(10_000, dtype=np.int64), np.full(10_000, s))
        _, r = httpos_transform(TraceSample(SampleMeta("kw"), (conn,)), defaults, np.random.default_rng(s))
        mean_pad = (r.transformed_bytes - r.original_bytes) / 10_000
        target = (3 * defaults.mss - s) / 2
        errors[s] = round(abs(mean_pad - target) / target, 4)
    ok = overhead_ok and after <= 2 / 50 and max(errors.values()) <= 0.05 and (defaults.mtu, defaults.mss) == (1500, 1000)
    verdict(9, ok, f"pad overhead exact {'yes' if overhead_ok else 'no'} ({float(exact):.4f}), accuracy {before:.3f} -> "
                   f"{after:.3f} after padding (<= 0.04), httpos relative pad error {errors} (<= 0.05), "
                   f"defaults {defaults.mtu}/{defaults.mss}")


# ---------------------------------------------------------------- 10

def test_criterion_10_time_gap_direction():
    gaps = [0, 2, 4, 6, 8]
    curves = {}
    n_test = 0
    for drift in (0.1, 0.0):
        w = build_world(10, 20, with_profile("stable", drift_rate=drift, template_noise=3.0))
        tests = [(str(g), generate_dataset(w, range(100 + 10 * i, 110 + 10 * i), gap=float(g)))
                 for i, g in enumerate(gaps)]
        n_test = len(tests[0][1])
        rep = time_gap_eval(generate_dataset(w, range(20)), tests, "psc", TrainConfig(n_trees=50, rng_seed=0), 1)
        curves[drift] = [r["mean"] for r in rep.rows]
    drifting, flat = curves[0.1], curves[0.0]
    pooled = float(np.mean(flat))
    band = 3 * sigma(pooled, n_test)
    non_increasing = all(b <= a for a, b in zip(drifting, drifting[1:])) and drifting[-1] < drifting[0]
    within = max(abs(a - pooled) for a in flat) <= band
    verdict(10, non_increasing and within,
            f"drift curve {[round(a, 3) for a in drifting]} non-increasing, zero-drift {[round(a, 3) for a in flat]} "
            f"within {pooled:.3f} ± {band:.3f}")


# ---------------------------------------------------------------- 11

def test_criterion_11_page_vs_query():
    pages = generate_dataset(build_world(11, 20, "page"), 10, label="page")
    queries = generate_dataset(build_world(12, 20, "stable"), 10, label="query")
    m = page_vs_query_eval(pages, queries, TrainConfig(n_trees=50, rng_seed=0), 5).metrics
    verdict(11, m["accuracy_mean"] >= 0.99,
            f"accuracy {m['accuracy_mean']:.4f} ± {m['accuracy_std']:.4f} over 5 splits (>= 0.99)")


# ---------------------------------------------------------------- 12

@pytest.mark.runs_last
def test_criterion_12_suite_wall_clock():
    elapsed = time.perf_counter() - SESSION_START[0]
    verdict(12, elapsed < 600, f"pytest session wall-clock {elapsed:.0f} s at its last test (limit 600 s)")
