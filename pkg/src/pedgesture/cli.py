"""Command-line entry point.

Exit codes: 0 success, 2 I/O failure, 3 data validation failure, 4 bad arguments.

Files written by one ``--out`` directory (``<s>`` is a feature subset):
``features.csv``, ``model_<s>.json``, ``report_<s>.json``, ``ranking_<s>.csv``,
``embedding_<s>.csv``, ``ellipses_<s>.json``; the report command adds
``comparison.md``, ``comparison.json`` and ``scatter_<s>.svg``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import TSNEParams
from .errors import DataValidationError, ManifestError
from .experiment import (
    AnalysisReport,
    FeatureTable,
    derive_seeds,
    run_subset,
    train_subset,
)
from .features import SCHEMA_VERSION, SUBSETS, extract_feature_vector, subset_names
from .forest import ForestModel, ForestParams
from .ingest import DEFAULT_CONFIDENCE_THRESHOLD, load_manifest, manifest_hash
from .report import comparison_document, comparison_table, embedding_from_csv, gaussians_from_json, scatter_svg
from .synth import DEFAULT_COUNTS, SynthParams, generate_corpus

log = logging.getLogger("pedgesture")

EXIT_OK, EXIT_IO, EXIT_DATA, EXIT_ARGS = 0, 2, 3, 4


class UsageError(Exception):
    """Bad or inconsistent command-line arguments."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)


# ---------------------------------------------------------------- loading

def _extract_table(manifest_path, subset, threshold) -> FeatureTable:
    raw = Path(manifest_path).read_bytes()
    loaded = load_manifest(raw, Path(manifest_path).parent, threshold=threshold)
    failures = list(loaded.errors)
    ids, labels, rows = [], [], []
    for seq, label in loaded.items:
        try:
            rows.append(extract_feature_vector(seq, subset).values)
        except DataValidationError as exc:
            failures.append((seq.source_id, exc))
            continue
        ids.append(seq.source_id)
        labels.append(int(label))
    if failures:
        raise ManifestError(failures)
    meta = {
        "schema_version": SCHEMA_VERSION,
        "subset": subset,
        "manifest_hash": manifest_hash(raw),
        "confidence_threshold": threshold,
        "tool_version": __version__,
    }
    names = subset_names(subset)
    X = np.vstack(rows) if rows else np.zeros((0, len(names)))
    return FeatureTable(ids, np.asarray(labels, dtype=np.int64), X, names, meta)


def _load_table(args, subset="combined") -> FeatureTable:
    if getattr(args, "features", None):
        table = FeatureTable.loads(Path(args.features).read_text())
        if table.names != subset_names(table.subset):
            raise DataValidationError(f"{args.features}: header does not match the {table.subset} layout")
        return table
    if not args.manifest:
        raise UsageError("one of --manifest or --features is required")
    return _extract_table(args.manifest, subset, args.confidence_threshold)


def _subsets(args) -> tuple[str, ...]:
    return SUBSETS if args.subset == "all" else (args.subset,)


def _forest_params(args) -> ForestParams:
    params = ForestParams(n_trees=args.trees)
    try:
        params.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return params


def _tsne_params(args) -> TSNEParams:
    if args.perplexity <= 0:
        raise UsageError("--perplexity must be positive")
    return TSNEParams(perplexity=args.perplexity)


def _check_common(args):
    if not 0 < args.test_fraction < 1:
        raise UsageError(f"--test-fraction must be in (0, 1), got {args.test_fraction}")
    if not 0 <= args.confidence_threshold <= 1:
        raise UsageError("--confidence-threshold must be in [0, 1]")


def _table_for(table: FeatureTable, subset: str) -> FeatureTable:
    if table.subset not in (subset, "combined"):
        raise UsageError(f"features file holds the {table.subset} subset, cannot analyse {subset}")
    return table


# ---------------------------------------------------------------- writers

def _write_subset_outputs(out: Path, run, table: FeatureTable):
    s = run.report.subset
    provenance = _provenance(s, run.report.seeds, table, test_fraction=run.report.params["test_fraction"])
    _write(out / f"report_{s}.json", run.report.dumps())
    _write(out / f"model_{s}.json", _model_text(run.model, provenance))
    _write(out / f"ranking_{s}.csv", _ranking_text(run.model, provenance))
    _write(out / f"embedding_{s}.csv", _embedding_text(run.embedding, _provenance(s, run.report.seeds, table)))
    _write(out / f"ellipses_{s}.json", _ellipses_text(run, _provenance(s, run.report.seeds, table)))


def _provenance(subset, seeds, table: FeatureTable, **extra) -> dict:
    doc = {
        "schema_version": 1,
        "subset": subset,
        "seeds": dict(seeds),
        "manifest_hash": table.meta.get("manifest_hash", ""),
        "tool_version": __version__,
    }
    doc.update(extra)
    return doc


def _embedding_text(embedding, provenance: dict) -> str:
    provenance = dict(provenance, tsne=asdict(embedding.params))
    return "# " + json.dumps(provenance, sort_keys=True) + "\n" + embedding.to_csv()


def _model_text(model: ForestModel, provenance: dict) -> str:
    doc = model.to_dict()
    doc["provenance"] = provenance
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def _ranking_text(model: ForestModel, provenance: dict) -> str:
    from .forest import gini_importance

    lines = ["# " + json.dumps(provenance, sort_keys=True), "rank,feature,importance"]
    for k, (name, score) in enumerate(gini_importance(model), start=1):
        lines.append(f"{k},{name},{score!r}")
    return "\n".join(lines) + "\n"


def _ellipses_text(run, provenance: dict) -> str:
    doc = {
        "schema": "pedgesture.ellipses",
        "schema_version": 1,
        "provenance": provenance,
        "kl_divergence": run.embedding.kl_divergence,
        "kl_initial": run.embedding.kl_initial,
        "tsne": asdict(run.embedding.params),
        "classes": [g.to_dict() for g in run.gaussians],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    counts = tuple(args.counts)
    if len(counts) != 4 or min(counts) < 1:
        raise UsageError("--counts needs four positive integers (stop go thank_greet no_gesture)")
    try:
        params = SynthParams(noise_sigma=args.noise_sigma, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _, manifest = generate_corpus(params, counts, seed=args.seed, out_dir=args.out)
    path = Path(args.out) / "manifest.json"
    print(path)
    return EXIT_OK


def cmd_extract(args) -> int:
    if args.subset == "all":
        raise UsageError("extract writes one subset; use combined to keep all 76 columns")
    if not 0 <= args.confidence_threshold <= 1:
        raise UsageError("--confidence-threshold must be in [0, 1]")
    table = _extract_table(args.manifest, args.subset, args.confidence_threshold)
    out = Path(args.out)
    if out.suffix == "":
        out = out / "features.csv"
    _write(out, table.dumps())
    print(out)
    return EXIT_OK


def cmd_train(args) -> int:
    _check_common(args)
    forest = _forest_params(args)
    out = Path(args.out)
    table = _load_table(args)
    for s in _subsets(args):
        _table_for(table, s)
        model = train_subset(table.X, table.labels, table.ids, s, args.seed, forest, args.test_fraction)
        provenance = _provenance(s, derive_seeds(args.seed), table, test_fraction=args.test_fraction)
        _write(out / f"model_{s}.json", _model_text(model, provenance))
    return EXIT_OK


def _analyse(args, table, subsets=None):
    _check_common(args)
    forest = _forest_params(args)
    tsne = _tsne_params(args)
    runs = []
    for s in subsets or _subsets(args):
        _table_for(table, s)
        model = None
        if getattr(args, "model", None):
            model = ForestModel.loads(Path(args.model).read_text())
        runs.append(run_subset(
            table.X, table.labels, table.ids, s, seed=args.seed, forest=forest, tsne=tsne,
            test_fraction=args.test_fraction, top_k=args.top_k,
            manifest_hash=table.meta.get("manifest_hash", ""), model=model,
        ))
    return runs


def cmd_evaluate(args) -> int:
    if args.model and args.subset == "all":
        raise UsageError("--model fits one subset; pick static, dynamic or combined")
    _check_common(args)
    _forest_params(args)
    _tsne_params(args)
    table = _load_table(args)
    out = Path(args.out)
    for run in _analyse(args, table):
        _write_subset_outputs(out, run, table)
        print(json.dumps({"subset": run.report.subset, "accuracy": run.report.accuracy,
                          "silhouette": run.report.silhouette}))
    return EXIT_OK


def cmd_rank(args) -> int:
    out = Path(args.out)
    if args.model:
        model = ForestModel.loads(Path(args.model).read_text())
        doc = json.loads(Path(args.model).read_text())
        _write(out / f"ranking_{doc.get('provenance', {}).get('subset', 'model')}.csv",
               _ranking_text(model, doc.get("provenance", {})))
        return EXIT_OK
    _check_common(args)
    forest = _forest_params(args)
    table = _load_table(args)
    for s in _subsets(args):
        _table_for(table, s)
        model = train_subset(table.X, table.labels, table.ids, s, args.seed, forest, args.test_fraction)
        provenance = _provenance(s, derive_seeds(args.seed), table, test_fraction=args.test_fraction)
        _write(out / f"ranking_{s}.csv", _ranking_text(model, provenance))
    return EXIT_OK


def cmd_embed(args) -> int:
    from .clustering import fit_class_gaussians, silhouette_score, tsne_embed

    _check_common(args)
    tsne = _tsne_params(args)
    table = _load_table(args)
    out = Path(args.out)
    seeds = derive_seeds(args.seed)
    for s in _subsets(args):
        _table_for(table, s)
        X = table.X if table.subset == s else table.X[:, [table.names.index(n) for n in subset_names(s)]]
        emb = tsne_embed(X, seed=seeds["tsne"], ids=table.ids, labels=table.labels, params=tsne)
        provenance = _provenance(s, seeds, table)
        run = argparse.Namespace(embedding=emb, gaussians=fit_class_gaussians(emb))
        _write(out / f"embedding_{s}.csv", _embedding_text(emb, provenance))
        _write(out / f"ellipses_{s}.json", _ellipses_text(run, provenance))
        print(json.dumps({"subset": s, "silhouette": silhouette_score(emb.points, table.labels)}))
    return EXIT_OK


def cmd_report(args) -> int:
    reports, paths = [], []
    for p in args.reports:
        path = Path(p)
        reports.append(AnalysisReport.from_dict(json.loads(path.read_text())))
        paths.append(path)
    if not reports:
        raise UsageError("report needs at least one report file")
    hashes = {r.manifest_hash for r in reports}
    if len(hashes) > 1:
        raise UsageError(f"reports come from different corpora (manifest hashes {sorted(hashes)})")
    out = Path(args.out) if args.out else paths[0].parent
    _write(out / "comparison.md", comparison_table(reports))
    _write(out / "comparison.json", json.dumps(comparison_document(reports), indent=2, sort_keys=True) + "\n")
    for r, path in zip(reports, paths):
        emb = embedding_from_csv((path.parent / f"embedding_{r.subset}.csv").read_text())
        gaussians = gaussians_from_json((path.parent / f"ellipses_{r.subset}.json").read_text())
        svg, _ = scatter_svg(emb, gaussians, title=f"{r.subset} features (silhouette {r.silhouette:.3f})")
        _write(out / f"scatter_{r.subset}.svg", svg)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    _check_common(args)
    _forest_params(args)
    _tsne_params(args)
    out = Path(args.out)
    try:
        params = SynthParams(noise_sigma=args.noise_sigma, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    generate_corpus(params, DEFAULT_COUNTS, seed=args.seed, out_dir=out / "corpus")
    table = _extract_table(out / "corpus" / "manifest.json", "combined", args.confidence_threshold)
    _write(out / "features.csv", table.dumps())
    runs = _analyse(args, table)
    for run in runs:
        _write_subset_outputs(out, run, table)
    args.reports = [str(out / f"report_{run.report.subset}.json") for run in runs]
    return cmd_report(replace_ns(args, out=str(out)))


def replace_ns(ns, **kw):
    d = vars(ns).copy()
    d.update(kw)
    return argparse.Namespace(**d)


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pedgesture", description="Skeleton-based pedestrian gesture analysis.")
    p.add_argument("--version", action="version", version=f"pedgesture {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    verbose = argparse.ArgumentParser(add_help=False)
    verbose.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    add = sub.add_parser

    def add_parser(name, **kw):
        return add(name, parents=[verbose], **kw)

    sub.add_parser = add_parser

    def common(sp, manifest=True, subset_default="combined", analysis=True):
        if manifest:
            sp.add_argument("--manifest", help="dataset manifest JSON")
            sp.add_argument("--features", help="feature table written by extract (instead of --manifest)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--subset", default=subset_default, choices=SUBSETS + ("all",))
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--confidence-threshold", type=float, default=DEFAULT_CONFIDENCE_THRESHOLD)
        if analysis:
            sp.add_argument("--test-fraction", type=float, default=0.3)
            sp.add_argument("--trees", type=int, default=ForestParams.n_trees)
            sp.add_argument("--perplexity", type=float, default=TSNEParams.perplexity)
            sp.add_argument("--top-k", type=int, default=10)

    sp = sub.add_parser("synth", help="generate a synthetic corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--noise-sigma", type=float, default=SynthParams.noise_sigma)
    sp.add_argument("--counts", type=int, nargs=4, default=list(DEFAULT_COUNTS),
                    metavar=("STOP", "GO", "THANK_GREET", "NO_GESTURE"))
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("extract", help="write the feature table for a manifest")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True, help="output file, or a directory for features.csv")
    sp.add_argument("--subset", default="combined", choices=SUBSETS + ("all",))
    sp.add_argument("--confidence-threshold", type=float, default=DEFAULT_CONFIDENCE_THRESHOLD)
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("train", help="train one forest per subset on the training split")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="split, train, score, rank and embed; writes reports")
    common(sp)
    sp.add_argument("--model", help="use this trained model instead of training")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("rank", help="write Gini importance rankings")
    common(sp)
    sp.add_argument("--model", help="rank the features of an existing model")
    sp.set_defaults(func=cmd_rank)

    sp = sub.add_parser("embed", help="t-SNE embedding plus class ellipses")
    common(sp)
    sp.set_defaults(func=cmd_embed)

    sp = sub.add_parser("report", help="compare reports and draw embedding plots")
    sp.add_argument("reports", nargs="+", help="report_<subset>.json files")
    sp.add_argument("--out", help="output directory (default: next to the first report)")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("pipeline", help="synth, extract, train, evaluate, embed and report in one go")
    common(sp, manifest=False, subset_default="all")
    sp.add_argument("--noise-sigma", type=float, default=SynthParams.noise_sigma)
    sp.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s", stream=sys.stderr)
        if not getattr(args, "command", None):
            raise UsageError("a command is required")
        return args.func(args)
    except UsageError as exc:
        print(f"pedgesture: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except ManifestError as exc:
        for path, err in exc.failures:
            print(f"pedgesture: {path}: {err}", file=sys.stderr)
        return EXIT_DATA
    except DataValidationError as exc:
        print(f"pedgesture: invalid data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"pedgesture: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # malformed inputs that slipped past the typed checks
        print(f"pedgesture: invalid data: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
