"""Command-line interface.

Data goes to stdout (or the requested output files); logs go to stderr.
Exit codes: 0 success, 2 usage/validation errors, 1 runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import sys
from pathlib import Path

from . import __version__
from .backend import GeneratorHandle, open_backend
from .config import load_run_config
from .corpus import (
    PreprocessConfig,
    filter_auto_generated,
    load_corpus,
    save_corpus,
    split_by_project,
)
from .errors import ConfigError, HybridsumError
from .labeler import build_triplet_dataset, save_triplets
from .metrics import BleuConfig, evaluate_pairs
from .pipeline import EvaluationReport, run_experiment
from .report import FORMATS, render_report
from .retrieval import Bm25Retriever, build_index
from .router import curve_to_csv, load_sweep_candidates, sweep_threshold, threshold_grid

logger = logging.getLogger("hybridsum")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybridsum",
        description="Retrieve-or-generate comment generation toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--seed", type=int, default=None, help="override random seeds")
    parser.add_argument("--config", default=None, help="run configuration file")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="debug logging on stderr")
    verbosity.add_argument("--quiet", action="store_true", help="errors only on stderr")
    commands = parser.add_subparsers(dest="command", required=True)

    corpus = commands.add_parser("corpus", help="corpus preparation")
    corpus_sub = corpus.add_subparsers(dest="subcommand", required=True)
    prepare = corpus_sub.add_parser("prepare", help="preprocess, filter, and split a corpus")
    prepare.add_argument("--input", required=True)
    prepare.add_argument("--output", required=True)
    prepare.add_argument("--ratios", default="0.9,0.05,0.05",
                         help="train,validation,test sample ratios")
    prepare.add_argument("--keep-auto-generated", action="store_true",
                         help="skip the auto-generated comment filter")
    prepare.add_argument("--no-split", action="store_true",
                         help="preprocess and filter only")

    index = commands.add_parser("index", help="BM25 index operations")
    index_sub = index.add_subparsers(dest="subcommand", required=True)
    build = index_sub.add_parser("build", help="index the training split")
    build.add_argument("--corpus", required=True)
    build.add_argument("--output", required=True)
    build.add_argument("--split", default="train")
    build.add_argument("--k1", type=float, default=1.2)
    build.add_argument("--b", type=float, default=0.75)
    query = index_sub.add_parser("query", help="retrieve the most similar sample")
    query.add_argument("--index", required=True)
    query.add_argument("--code", required=True, help="raw code text")
    query.add_argument("--id", default="query", help="id to report for the query")
    query.add_argument("--exclude-id", default=None)

    label = commands.add_parser("label", help="build the routing triplet dataset")
    label.add_argument("--corpus", required=True)
    label.add_argument("--index", required=True)
    label.add_argument("--backend", required=True, help="generator command (shell syntax)")
    label.add_argument("--output", required=True)
    label.add_argument("--split", default="validation")
    label.add_argument("--dev-fraction", type=float, default=0.1)
    label.add_argument("--timeout", type=float, default=60.0)

    router = commands.add_parser("router", help="routing utilities")
    router_sub = router.add_subparsers(dest="subcommand", required=True)
    sweep = router_sub.add_parser("sweep", help="sweep the decision threshold")
    sweep.add_argument("--candidates", required=True,
                       help="JSONL with id/reference/ir/nmt/score per line")
    sweep.add_argument("--output", default=None, help="CSV file for the curve")
    sweep.add_argument("--step", type=float, default=0.05)

    run = commands.add_parser("run", help="run a full experiment from a config file")
    run.add_argument("--output-dir", default=None, help="override the configured output dir")

    evaluate = commands.add_parser("evaluate", help="score a predictions file")
    evaluate.add_argument("--pred", required=True,
                          help="JSONL with id/candidate/reference per line")
    evaluate.add_argument("--percent", action="store_true")
    evaluate.add_argument("--format", choices=("table", "json"), default="table")

    report = commands.add_parser("report", help="report rendering")
    report_sub = report.add_subparsers(dest="subcommand", required=True)
    render = report_sub.add_parser("render", help="render a stored report")
    render.add_argument("--report", required=True)
    render.add_argument("--format", choices=FORMATS, default="text")
    render.add_argument("--percent", action="store_true")

    return parser


def _parse_ratios(raw: str) -> tuple[float, float, float]:
    parts = raw.split(",")
    if len(parts) != 3:
        raise ConfigError("ratios", f"expected 3 comma-separated values, got {raw!r}")
    try:
        values = tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError("ratios", f"not numbers: {raw!r}") from None
    return values


def _cmd_corpus_prepare(args) -> int:
    cfg = PreprocessConfig()
    corpus, stats = load_corpus(args.input, cfg)
    removed = 0
    if not args.keep_auto_generated:
        corpus, removed = filter_auto_generated(corpus, cfg)
    if not args.no_split:
        seed = args.seed if args.seed is not None else 0
        corpus = split_by_project(corpus, _parse_ratios(args.ratios), seed)
    save_corpus(corpus, args.output)
    logger.info(
        "prepared %d samples (%d records read, %d empty-comment, %d empty-code, "
        "%d auto-generated removed)",
        len(corpus), stats.total_records, stats.dropped_empty_comment,
        stats.dropped_empty_code, removed,
    )
    return 0


def _cmd_index_build(args) -> int:
    corpus, _ = load_corpus(args.corpus)
    retriever = build_index(corpus, split=args.split, k1=args.k1, b=args.b)
    retriever.save(args.output)
    logger.info("indexed %d documents", retriever.doc_count_)
    return 0


def _cmd_index_query(args) -> int:
    from .corpus import Sample, preprocess

    retriever = Bm25Retriever.load(args.index)
    tokens = preprocess(args.code)
    query = Sample(id=args.id, project_id="", code_tokens=tuple(tokens), comment_tokens=("",))
    exclude = args.exclude_id
    if exclude is None:
        result = retriever.retrieve_top1(query)
    else:
        doc_id, score = retriever.retrieve(tokens, exclude_id=exclude)
        from .retrieval import RetrievalResult
        result = RetrievalResult(args.id, doc_id, score, retriever.comment_of(doc_id))
    print(json.dumps({
        "query_id": result.query_id,
        "retrieved_id": result.retrieved_id,
        "score": result.score,
        "retrieved_comment": list(result.retrieved_comment),
    }, ensure_ascii=False))
    return 0


def _cmd_label(args) -> int:
    corpus, _ = load_corpus(args.corpus)
    retriever = Bm25Retriever.load(args.index)
    handle = GeneratorHandle(
        transport="subprocess",
        command=tuple(shlex.split(args.backend)),
        timeout=args.timeout,
    )
    seed = args.seed if args.seed is not None else 0
    with open_backend(handle) as backend:
        triplets = build_triplet_dataset(
            corpus, retriever, backend,
            seed=seed, dev_fraction=args.dev_fraction, split=args.split,
        )
    save_triplets(triplets, args.output)
    logger.info("wrote %d triplets (%d positive)", len(triplets),
                sum(t.label for t in triplets))
    return 0


def _cmd_router_sweep(args) -> int:
    candidates = load_sweep_candidates(args.candidates)
    grid = threshold_grid(step=args.step)
    result = sweep_threshold(candidates, grid)
    csv_text = curve_to_csv(result.curve)
    if args.output:
        Path(args.output).write_text(csv_text, encoding="utf-8")
    else:
        sys.stdout.write(csv_text)
    best_bleu = dict(result.curve)[result.best_threshold]
    print(json.dumps({"best_threshold": result.best_threshold, "bleu": best_bleu}))
    return 0


def _cmd_run(args) -> int:
    if not args.config:
        raise ConfigError("--config", "run requires a config file")
    config = load_run_config(args.config)
    if args.output_dir:
        from dataclasses import replace
        config = replace(config, output_dir=args.output_dir)
    if args.seed is not None:
        from dataclasses import replace
        config = replace(config, seed=args.seed)
    report = run_experiment(config)
    print(render_report(report, fmt="text", percent=True), end="")
    return 0


def _load_predictions(path: str) -> tuple[list[str], list[tuple[list[str], list[str]]]]:
    ids, pairs = [], []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise HybridsumError(f"{path}:{lineno}: malformed prediction: {exc.msg}") from exc
            try:
                sid, cand, ref = record["id"], record["candidate"], record["reference"]
            except KeyError as exc:
                raise HybridsumError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from exc
            cand = cand.split() if isinstance(cand, str) else list(cand)
            ref = ref.split() if isinstance(ref, str) else list(ref)
            if not ref:
                raise HybridsumError(f"{path}:{lineno}: empty reference for id {sid!r}")
            ids.append(str(sid))
            pairs.append((cand, ref))
    if not pairs:
        raise HybridsumError(f"{path}: no predictions found")
    return ids, pairs


def _cmd_evaluate(args) -> int:
    ids, pairs = _load_predictions(args.pred)
    row = evaluate_pairs(pairs, sample_ids=ids)
    values = row.as_dict(percent=args.percent)
    if args.format == "json":
        print(json.dumps(values, sort_keys=True))
    else:
        names = list(values)
        widths = [max(len(n), 8) for n in names]
        print("  ".join(n.ljust(w) for n, w in zip(names, widths)).rstrip())
        print("  ".join(f"{values[n]:.2f}".ljust(w) for n, w in zip(names, widths)).rstrip())
    return 0


def _cmd_report_render(args) -> int:
    try:
        payload = json.loads(Path(args.report).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise HybridsumError(f"cannot read report {args.report}: {exc}") from exc
    report = EvaluationReport.from_json_dict(payload)
    sys.stdout.write(render_report(report, fmt=args.format, percent=args.percent))
    return 0


_DISPATCH = {
    ("corpus", "prepare"): _cmd_corpus_prepare,
    ("index", "build"): _cmd_index_build,
    ("index", "query"): _cmd_index_query,
    ("label", None): _cmd_label,
    ("router", "sweep"): _cmd_router_sweep,
    ("run", None): _cmd_run,
    ("evaluate", None): _cmd_evaluate,
    ("report", "render"): _cmd_report_render,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.ERROR
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = _DISPATCH[(args.command, getattr(args, "subcommand", None))]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except HybridsumError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        return 1


if __name__ == "__main__":
    sys.exit(main())
