"""Command-line front end.

Exit status: 0 on success, 1 on usage errors, 2 on data or validation
errors.  Every run writes a manifest JSON next to its main output (or at
``--manifest``) recording the resolved options, seed, inputs and output
hashes.  Options can also come from a JSON ``--config`` file whose keys
are the option names with dashes replaced by underscores; flags win.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Callable

from . import __version__
from .errors import KwfpError
from .trace import SampleMeta, load_dataset, save_dataset

STOCHASTIC = {
    "train", "select-features", "eval-closed", "eval-binary", "eval-multilevel", "eval-multiclass",
    "eval-cross", "eval-timegap", "countermeasure", "synth", "page-vs-query",
}
FEATURE_SETS = ("psc", "kfp", "etresp", "wfin", "wfinpp")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class Run:
    """Resolved options of one invocation plus the files it touched."""

    def __init__(self, command: str, opts: dict, argv: list[str]):
        self.command = command
        self.opts = opts
        self.argv = argv
        self.inputs: list[Path] = []
        self.outputs: list[Path] = []

    def __getattr__(self, name):
        try:
            return self.opts[name]
        except KeyError:
            raise AttributeError(name) from None

    def input(self, path) -> Path:
        p = Path(path)
        if not p.exists():
            raise UsageError(f"input file not found: {p}")
        self.inputs.append(p)
        return p

    def output(self, path) -> Path:
        p = Path(path)
        if p.parent and not p.parent.exists():
            p.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(p)
        return p

    def manifest(self) -> dict:
        return {
            "tool": "kwfp",
            "version": __version__,
            "subcommand": self.command,
            "argv": self.argv,
            "config": self.opts,
            "seed": self.opts.get("seed"),
            "inputs": [{"path": str(p), "sha256": _sha256(p)} for p in self.inputs],
            "outputs": [{"path": str(p), "sha256": _sha256(p)} for p in self.outputs if p.exists()],
        }


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# --------------------------------------------------------------------------
# option plumbing

_DEFAULTS: dict[str, dict[str, object]] = {}
_REQUIRED: dict[str, set[str]] = {}


def _opt(p: argparse.ArgumentParser, *flags, default=None, required=False, **kw):
    """Add an option whose default is applied after merging the config file."""
    action = p.add_argument(*flags, default=None, **kw)
    _DEFAULTS.setdefault(p.prog, {})[action.dest] = default
    if required:
        _REQUIRED.setdefault(p.prog, set()).add(action.dest)
    return action


def _learner_opts(p):
    _opt(p, "--features", choices=FEATURE_SETS, default="psc", help="feature set")
    _opt(p, "--trees", dest="n_trees", type=int, default=700, help="number of trees")
    _opt(p, "--criterion", choices=("gini", "info_gain"), default="gini")
    _opt(p, "--k-features", dest="k_candidate_features", type=int, help="candidate features per node (default ceil(sqrt(d)))")
    _opt(p, "--min-samples-split", type=int, default=2)
    _opt(p, "--max-depth", type=int)
    _opt(p, "--bootstrap", action="store_const", const=True, default=False)


def _seed_opt(p):
    _opt(p, "--seed", type=int, help="master random seed (required)")


def _train_config(run: Run):
    from .learner import TrainConfig

    return TrainConfig(
        n_trees=run.n_trees, criterion=run.criterion, bootstrap=bool(run.bootstrap),
        k_candidate_features=run.k_candidate_features, min_samples_split=run.min_samples_split,
        max_depth=run.max_depth, rng_seed=run.seed, n_jobs=run.jobs,
    )


def _pairs(items, what) -> list[tuple[str, str]]:
    out = []
    for item in items or []:
        name, sep, path = item.partition("=")
        if not sep or not name or not path:
            raise UsageError(f"{what} must look like NAME=PATH, got {item!r}")
        out.append((name, path))
    return out


def _write_json(run: Run, path, obj) -> None:
    run.output(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _load(run: Run, path):
    return load_dataset(run.input(path))


def _train_test(run: Run):
    from .evaluation import SplitSpec, interleaved_split

    if run.opts.get("input_path"):
        train, _, test = interleaved_split(_load(run, run.input_path), SplitSpec.parse(run.split))
        return train, test
    if not (run.train and run.test):
        raise UsageError("give --train and --test, or --in with --split")
    return _load(run, run.train), _load(run, run.test)


def _train_test_opts(p):
    _opt(p, "--train", help="training traces")
    _opt(p, "--test", help="test traces")
    _opt(p, "--in", dest="input_path", help="single trace file split by --split instead")
    _opt(p, "--split", default="4:1:1", help="train:val:test ratio used with --in")


# --------------------------------------------------------------------------
# subcommands


def cmd_ingest(run: Run) -> None:
    from .ingest import IngestDiagnostics, ingest_session

    ports = None if run.ports == "all" else {int(x) for x in run.ports.split(",")}
    samples, diags = [], []
    for i, pcap in enumerate(run.pcaps):
        meta = SampleMeta(
            label=run.label, engine=run.engine, browser=run.browser, mode="homepage",
            capture_start_us=run.capture_start_us, first_keystroke_us=run.first_keystroke_us,
            visit_index=run.visit_index + i,
        )
        d = IngestDiagnostics()
        samples.append(ingest_session(run.input(pcap), meta, retain_acks=bool(run.retain_acks), ports=ports, diagnostics=d))
        diags.append({"pcap": str(pcap), **asdict(d)})
    save_dataset(samples, run.output(run.out))
    _write_json(run, run.diagnostics or f"{run.out}.diagnostics.json", diags)


def cmd_validate(run: Run) -> None:
    ds = _load(run, run.input_path)
    print(f"{len(ds)} samples valid")


def cmd_stats(run: Run) -> None:
    from .preprocess import export_stats_csv, median_stats

    ds = _load(run, run.input_path)
    export_stats_csv(ds, run.output(run.out))
    print(json.dumps(median_stats(ds), indent=2))


def cmd_census(run: Run) -> None:
    from .preprocess import dataset_census, export_census_csv, load_name_list, DEFAULT_PUBLIC_SUFFIXES

    suffixes = load_name_list(run.input(run.public_suffixes)) if run.public_suffixes else DEFAULT_PUBLIC_SUFFIXES
    export_census_csv(dataset_census(_load(run, run.input_path), suffixes), run.output(run.out))


def _read_allowlist(run: Run) -> frozenset[str]:
    from .preprocess import allowlist_for, load_name_list

    if run.allowlist:
        return load_name_list(run.input(run.allowlist))
    return allowlist_for(run.engine)


def cmd_filter(run: Run) -> None:
    from .preprocess import addressbar_filter, domain_filter

    if run.mode != "addressbar" and not (run.allowlist or run.engine):
        raise UsageError("filter needs --mode addressbar, --allowlist or --engine")
    ds = _load(run, run.input_path)
    if run.mode == "addressbar":
        ds = ds.map(addressbar_filter)
    if run.allowlist or run.engine:
        allow = _read_allowlist(run)
        ds = ds.map(lambda s: domain_filter(s, allow))
    save_dataset(ds, run.output(run.out))


def cmd_featurize(run: Run) -> None:
    from .features import VectorSpace, featurize
    from .features.space import export_csv, export_matrix

    ds = _load(run, run.input_path)
    vecs = featurize(ds, run.features)
    if run.space:
        space = VectorSpace.from_json(run.input(run.space).read_text(encoding="utf-8"))
        if space.feature_set != run.features:
            raise UsageError(f"--space was built for {space.feature_set}, not {run.features}")
    else:
        space = VectorSpace.from_vectors(run.features, vecs)
    X = space.matrix(vecs)
    out = run.output(run.out)
    if out.suffix == ".npy":
        run.outputs.append(export_matrix(X, space, out))
    else:
        export_csv(ds, space, out, X)
        run.output(f"{out}.space.json").write_text(space.to_json(), encoding="utf-8")


def cmd_train(run: Run) -> None:
    from .evaluation import KeywordClassifier
    from .learner import export_importance, save_forest

    ds = _load(run, run.input_path)
    model = KeywordClassifier.fit(ds, run.features, _train_config(run))
    save_forest(model.forest, run.output(run.out))
    run.output(f"{run.out}.space.json").write_text(model.space.to_json(), encoding="utf-8")
    if run.importance:
        export_importance(model.forest, model.space.catalog, run.output(run.importance))


def cmd_select_features(run: Run) -> None:
    from .features import VectorSpace, featurize
    from .learner import forward_select

    train, val = _load(run, run.train), _load(run, run.val)
    tr_vec = featurize(train, run.features)
    space = VectorSpace.from_vectors(run.features, tr_vec)
    grid = [int(x) for x in str(run.grid).split(",")]
    res = forward_select(
        (space.matrix(tr_vec), train.labels), (space.transform(val), val.labels),
        space.catalog, _train_config(run), grid, feature_names=space.names,
    )
    _write_json(run, run.out, {
        "best_n": res.best_n, "categories": list(res.categories), "ranking": list(res.ranking),
        "accuracies": {str(k): v for k, v in res.accuracies.items()}, "features": list(res.features),
    })


def _report_out(run: Run, report) -> None:
    out = run.output(run.out)  # registered first so the manifest sits next to it
    csv_path = run.output(run.csv) if run.opts.get("csv") else None
    pr_path = run.output(run.pr_csv) if run.opts.get("pr_csv") and report.pr_curve is not None else None
    report.write(out, csv_path, pr_path)


def cmd_eval_closed(run: Run) -> None:
    from .evaluation import closed_world_eval

    train, test = _train_test(run)
    rep = closed_world_eval(train, test, run.features, _train_config(run), run.repetitions)
    _report_out(run, rep)
    m = rep.metrics
    print(f"accuracy {100 * m['accuracy_mean']:.2f} ± {100 * m['accuracy_std']:.2f} %")


def cmd_eval_binary(run: Run) -> None:
    from .evaluation import binary_eval

    train, test = _train_test(run)
    rep = binary_eval(train, test, run.features, _train_config(run), run.threshold)
    _report_out(run, rep)
    print(f"AP {rep.metrics['ap']:.4f}")


def cmd_eval_multilevel(run: Run) -> None:
    from .evaluation import fit_binary, fit_keyword_model, multilevel_eval

    train, test = _train_test(run)
    cfg = _train_config(run)
    rep = multilevel_eval(fit_binary(train, run.features, cfg), fit_keyword_model(train, run.features, cfg), test, run.threshold)
    _report_out(run, rep)


def cmd_eval_multiclass(run: Run) -> None:
    from .evaluation import KeywordClassifier, multiclass_eval

    train, test = _train_test(run)
    rep = multiclass_eval(KeywordClassifier.fit(train, run.features, _train_config(run)), test)
    _report_out(run, rep)


def cmd_eval_cross(run: Run) -> None:
    from .evaluation import cross_platform_eval

    trains = {n: _load(run, p) for n, p in _pairs(run.train, "--train")}
    tests = {n: _load(run, p) for n, p in _pairs(run.test, "--test")}
    if not trains or not tests:
        raise UsageError("eval-cross needs at least one --train NAME=PATH and one --test NAME=PATH")
    merged = [m.split("+") for m in run.merge or []]
    rep = cross_platform_eval(trains, tests, run.features, _train_config(run), run.repetitions, merged)
    _report_out(run, rep)


def cmd_eval_timegap(run: Run) -> None:
    from .evaluation import time_gap_eval

    tests = [(g, _load(run, p)) for g, p in _pairs(run.test, "--test")]
    if not tests:
        raise UsageError("eval-timegap needs at least one --test GAP=PATH")
    rep = time_gap_eval(_load(run, run.train), tests, run.features, _train_config(run), run.repetitions)
    _report_out(run, rep)


def cmd_lda(run: Run) -> None:
    from .evaluation import export_lda_csv, lda_project
    from .features import fit_transform
    from .preprocess import sample_id

    ds = _load(run, run.input_path)
    _, X = fit_transform(ds, run.features)
    res = lda_project(X, ds.labels, run.dims)
    export_lda_csv(res, ds.labels, [sample_id(s) for s in ds], run.output(run.out))


def cmd_countermeasure(run: Run) -> None:
    from .countermeasures import CmConfig, apply_countermeasure, bandwidth_overhead, export_overhead_csv

    ds = _load(run, run.input_path)
    cfg = CmConfig(mtu=run.mtu, mss=run.mss, rng_seed=run.seed)
    out, reports, diag = apply_countermeasure(ds, run.defense, cfg)
    save_dataset(out, run.output(run.out))
    export_overhead_csv(list(ds), reports, run.output(run.overhead_csv or f"{run.out}.overhead.csv"))
    total = bandwidth_overhead(ds, out)
    print(f"bandwidth overhead {100 * total.overhead:.1f} % (clamped incoming packets: {diag.clamped_packets})")


def cmd_synth(run: Run) -> None:
    from .synth import PROFILES, build_world, generate_dataset, with_profile

    if run.profile not in PROFILES:
        raise UsageError(f"unknown profile {run.profile!r}; choose from {sorted(PROFILES)}")
    changes = {k: run.opts[k] for k in ("noise_conn_rate", "template_noise", "drift_rate") if run.opts.get(k) is not None}
    profile = with_profile(run.profile, **changes)
    world = build_world(run.seed, run.keywords, profile, shared_skeleton=bool(run.shared_skeleton))
    first = run.first_visit
    ds = generate_dataset(world, range(first, first + run.visits), gap=run.gap, browser=run.browser,
                          size_shift=run.size_shift, label=run.label)
    save_dataset(ds, run.output(run.out))
    if run.world_out:
        run.output(run.world_out).write_text(world.to_json() + "\n", encoding="utf-8")


def cmd_page_vs_query(run: Run) -> None:
    from .evaluation import page_vs_query_eval
    from .learner import TrainConfig

    cfg = TrainConfig(n_trees=run.n_trees, rng_seed=run.seed, n_jobs=run.jobs)
    rep = page_vs_query_eval(_load(run, run.pages), _load(run, run.queries), cfg, run.repetitions)
    _report_out(run, rep)
    m = rep.metrics
    print(f"accuracy {100 * m['accuracy_mean']:.2f} ± {100 * m['accuracy_std']:.2f} %")


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    _DEFAULTS.clear()
    _REQUIRED.clear()
    parser = _Parser(prog="kwfp", description="Keyword fingerprinting toolkit for HTTPS search traces.")
    parser.add_argument("--version", action="version", version=f"kwfp {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="SUBCOMMAND")
    commands: dict[str, Callable] = {}

    def add(name, fn, help_text, out_required=True):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="JSON file of option defaults; flags override it")
        p.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")
        _opt(p, "--jobs", type=int, default=os.cpu_count() or 1, help="worker processes for tree training")
        if out_required:
            _opt(p, "--out", required=True, help="output path")
        commands[name] = fn
        return p

    p = add("ingest", cmd_ingest, "convert pcap captures (one per session) into canonical traces")
    p.add_argument("pcaps", nargs="+", help="pcap files; each becomes one sample")
    _opt(p, "--label", required=True, help="keyword label of these sessions")
    _opt(p, "--engine", default="")
    _opt(p, "--browser", default="")
    _opt(p, "--visit-index", type=int, default=0, help="visit index of the first file; later files count up")
    _opt(p, "--capture-start-us", type=int, default=0)
    _opt(p, "--first-keystroke-us", type=int, help="keystroke offset from the first record, microseconds")
    _opt(p, "--ports", default="443,80", help="comma-separated server ports to keep, or 'all'")
    _opt(p, "--retain-acks", action="store_const", const=True, default=False)
    _opt(p, "--diagnostics", help="diagnostics JSON path (default: <out>.diagnostics.json)")

    p = add("validate", cmd_validate, "check a trace file against every invariant", out_required=False)
    _opt(p, "--in", dest="input_path", required=True)

    p = add("stats", cmd_stats, "per-sample packet, connection, byte and load-time statistics")
    _opt(p, "--in", dest="input_path", required=True)

    p = add("census", cmd_census, "connection counts per second-level domain")
    _opt(p, "--in", dest="input_path", required=True)
    _opt(p, "--public-suffixes", help="JSON list or text file overriding the public-suffix list")

    p = add("filter", cmd_filter, "address-bar packet filter and/or primary-domain allowlist")
    _opt(p, "--in", dest="input_path", required=True)
    _opt(p, "--mode", choices=("homepage", "addressbar"), default="homepage")
    _opt(p, "--allowlist", help="allowed second-level domains (JSON list or one per line)")
    _opt(p, "--engine", help="use the built-in allowlist of this search engine")

    p = add("featurize", cmd_featurize, "feature matrix as CSV (with metadata) or .npy")
    _opt(p, "--in", dest="input_path", required=True)
    _opt(p, "--features", choices=FEATURE_SETS, default="psc")
    _opt(p, "--space", help="reuse the feature layout saved by an earlier featurize/train run")

    p = add("train", cmd_train, "train a forest and save it with its feature layout")
    _opt(p, "--in", dest="input_path", required=True)
    _learner_opts(p)
    _seed_opt(p)
    _opt(p, "--importance", help="write per-feature importance CSV here")

    p = add("select-features", cmd_select_features, "top-N category forward selection")
    _opt(p, "--train", required=True)
    _opt(p, "--val", required=True)
    _opt(p, "--grid", default="1,2,3,5,10,15,20", help="comma-separated N values")
    _learner_opts(p)
    _seed_opt(p)

    for name, fn, text in (
        ("eval-closed", cmd_eval_closed, "closed-world accuracy over repeated seeds"),
        ("eval-binary", cmd_eval_binary, "open-world targeted vs non-targeted PR curve and AP"),
        ("eval-multilevel", cmd_eval_multilevel, "open-world binary then keyword classification"),
        ("eval-multiclass", cmd_eval_multiclass, "open-world single model with a non-targeted label"),
    ):
        p = add(name, fn, text)
        _train_test_opts(p)
        _learner_opts(p)
        _seed_opt(p)
        _opt(p, "--csv", help="flat metrics CSV")
        if name == "eval-closed":
            _opt(p, "--repetitions", type=int, default=5)
        else:
            _opt(p, "--threshold", type=float, default=0.5)
        if name == "eval-binary":
            _opt(p, "--pr-csv", help="PR curve CSV (threshold, precision, recall)")

    p = add("eval-cross", cmd_eval_cross, "train on one platform, test on another")
    _opt(p, "--train", action="append", help="NAME=PATH, repeatable")
    _opt(p, "--test", action="append", help="NAME=PATH, repeatable")
    _opt(p, "--merge", action="append", help="A+B: add a row trained on the union, repeatable")
    _opt(p, "--repetitions", type=int, default=5)
    _opt(p, "--csv")
    _learner_opts(p)
    _seed_opt(p)

    p = add("eval-timegap", cmd_eval_timegap, "accuracy against test sets taken at growing time gaps")
    _opt(p, "--train", required=True)
    _opt(p, "--test", action="append", help="GAP=PATH in gap order, repeatable")
    _opt(p, "--repetitions", type=int, default=5)
    _opt(p, "--csv")
    _learner_opts(p)
    _seed_opt(p)

    p = add("lda", cmd_lda, "LDA coordinates (sample_id, label, x, y, z)")
    _opt(p, "--in", dest="input_path", required=True)
    _opt(p, "--features", choices=FEATURE_SETS, default="psc")
    _opt(p, "--dims", type=int, default=3)

    p = add("countermeasure", cmd_countermeasure, "apply pad-to-mtu or httpos to every trace")
    _opt(p, "--in", dest="input_path", required=True)
    _opt(p, "--defense", choices=("pad-to-mtu", "httpos"), required=True)
    _opt(p, "--mtu", type=int, default=1500)
    _opt(p, "--mss", type=int, default=1000)
    _opt(p, "--overhead-csv", help="per-sample overhead CSV (default: <out>.overhead.csv)")
    _seed_opt(p)

    p = add("synth", cmd_synth, "generate a synthetic trace corpus")
    _seed_opt(p)
    _opt(p, "--keywords", type=int, default=50)
    _opt(p, "--profile", default="stable")
    _opt(p, "--visits", type=int, default=54)
    _opt(p, "--first-visit", type=int, default=0)
    _opt(p, "--gap", type=float, default=0.0)
    _opt(p, "--browser", default="chrome")
    _opt(p, "--size-shift", type=int, default=0)
    _opt(p, "--label", help="override every sample's label (e.g. -1 for non-targeted)")
    _opt(p, "--shared-skeleton", action="store_const", const=True, default=False)
    _opt(p, "--noise-conn-rate", type=float)
    _opt(p, "--template-noise", type=float)
    _opt(p, "--drift-rate", type=float)
    _opt(p, "--world-out", help="write the world description JSON here")

    p = add("page-vs-query", cmd_page_vs_query, "tell page visits from queries by domain connection counts")
    _opt(p, "--pages", required=True)
    _opt(p, "--queries", required=True)
    _opt(p, "--trees", dest="n_trees", type=int, default=700)
    _opt(p, "--repetitions", type=int, default=5)
    _opt(p, "--csv")
    _seed_opt(p)

    parser.set_defaults(_commands=commands)
    return parser


def _resolve(parser, args, argv) -> Run:
    sub = parser._subparsers._group_actions[0].choices[args.command]
    cfg: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        try:
            cfg = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise UsageError(f"config file {path} is not valid JSON: {e}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
    defaults = _DEFAULTS.get(sub.prog, {})
    unknown = sorted(set(cfg) - set(defaults))
    if unknown:
        raise UsageError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
    opts = {}
    for dest, default in defaults.items():
        value = getattr(args, dest, None)
        opts[dest] = value if value is not None else cfg.get(dest, default)
    if args.command == "ingest":
        opts["pcaps"] = args.pcaps
    missing = sorted(d for d in _REQUIRED.get(sub.prog, ()) if opts.get(d) is None)
    if missing:
        raise UsageError(f"{args.command}: missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")
    if args.command in STOCHASTIC and opts.get("seed") is None:
        raise UsageError(f"{args.command} is stochastic: --seed is required")
    return Run(args.command, opts, list(argv))


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("kwfp: a subcommand is required (see --help)")
        r = _resolve(parser, args, argv)
        args._commands[args.command](r)
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return 1
    except (KwfpError, ValueError) as e:
        print(f"kwfp {argv[0] if argv else ''}: error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"kwfp: error: {e}", file=sys.stderr)
        return 2
    manifest_path = Path(args.manifest) if args.manifest else (
        Path(f"{r.outputs[0]}.manifest.json") if r.outputs else Path(f"{r.command}.manifest.json")
    )
    manifest_path.write_text(json.dumps(r.manifest(), indent=2) + "\n", encoding="utf-8")
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
