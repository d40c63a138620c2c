"""End-to-end experiment: retrieve, route, generate, evaluate, analyze.

`run_experiment` produces, for each configured system, a predictions file
and a metric row, then the routing analyses: classification quality of the
router against the per-sample truth, the partition of the test set into
retrieval-better and generation-better samples, effort saved (samples that
never touch the generator), and pairwise significance tests.

Systems:
    ir        reuse the retrieved comment for every sample
    nmt       generate a comment for every sample
    combined  route per sample with the configured router
    oracle    per sample, whichever of ir/nmt scores higher

The generator backend is invoked once per sample that needs it; a run
whose systems include "nmt" or "oracle" therefore generates for the whole
test set, while a run with only "ir" and "combined" generates exactly for
the samples the router sends to the generator.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .backend import Backend, GeneratorHandle, open_backend
from .config import RunConfig
from .corpus import Corpus, load_corpus, split_by_project
from .errors import ConfigError, CorpusError, MetricError
from .labeler import label_sample
from .metrics import (
    BleuConfig,
    ClassificationMetrics,
    MetricReport,
    classification_metrics,
    corpus_bleu,
    evaluate_pairs,
    sentence_bleu,
    wilcoxon_signed_rank,
)
from .retrieval import Bm25Retriever, build_index
from .router import (
    CHOICE_IR,
    CHOICE_NMT,
    RouterConfig,
    clamp_score,
    lexical_score,
    oracle_route,
    route,
)

logger = logging.getLogger(__name__)

REPORT_FORMAT = "hybridsum-report/1"
KNOWN_SYSTEMS = ("ir", "nmt", "combined", "oracle")


@dataclass(frozen=True)
class RoutingDecision:
    """Per-sample outcome of the reuse-or-generate decision."""

    sample_id: str
    score: float
    choice: str
    emitted_comment: tuple[str, ...]
    retrieved_id: str


@dataclass(frozen=True)
class EffortStats:
    """How many samples skipped neural generation."""

    skipped_nmt: int
    fraction: float


@dataclass(frozen=True)
class PartitionTable:
    count: int
    bleu_by_system: dict[str, float | None]


@dataclass(frozen=True)
class EvaluationReport:
    test_size: int
    router: RouterConfig
    seed: int
    systems: dict[str, MetricReport]
    effort: EffortStats
    classifier: ClassificationMetrics | None
    classifier_combined_bleu: float | None
    partition_ir_better: PartitionTable | None
    partition_nmt_better: PartitionTable | None
    significance: dict[str, float | None]

    def to_json_dict(self) -> dict:
        payload: dict = {
            "format": REPORT_FORMAT,
            "test_size": self.test_size,
            "router": {"kind": self.router.kind, "threshold": self.router.threshold},
            "seed": self.seed,
            "systems": {
                name: report.as_dict() for name, report in self.systems.items()
            },
            "effort": {
                "skipped_nmt": self.effort.skipped_nmt,
                "fraction": self.effort.fraction,
            },
            "classifier": None,
            "partition": None,
            "significance": dict(self.significance),
        }
        if self.classifier is not None:
            payload["classifier"] = {
                "accuracy": self.classifier.accuracy,
                "precision": self.classifier.precision,
                "recall": self.classifier.recall,
                "f1": self.classifier.f1,
                "degenerate": list(self.classifier.degenerate),
                "combined_bleu": self.classifier_combined_bleu,
            }
        if self.partition_ir_better is not None and self.partition_nmt_better is not None:
            payload["partition"] = {
                "ir_better": {
                    "count": self.partition_ir_better.count,
                    "bleu_by_system": self.partition_ir_better.bleu_by_system,
                },
                "nmt_better": {
                    "count": self.partition_nmt_better.count,
                    "bleu_by_system": self.partition_nmt_better.bleu_by_system,
                },
            }
        return payload

    @classmethod
    def from_json_dict(cls, payload: dict) -> "EvaluationReport":
        if payload.get("format") != REPORT_FORMAT:
            raise CorpusError(f"unsupported report format: {payload.get('format')!r}")
        systems = {
            name: MetricReport(**values) for name, values in payload["systems"].items()
        }
        classifier = None
        combined_bleu = None
        if payload.get("classifier") is not None:
            section = payload["classifier"]
            classifier = ClassificationMetrics(
                accuracy=section["accuracy"],
                precision=section["precision"],
                recall=section["recall"],
                f1=section["f1"],
                degenerate=tuple(section.get("degenerate", ())),
            )
            combined_bleu = section.get("combined_bleu")
        part_ir = part_nmt = None
        if payload.get("partition") is not None:
            section = payload["partition"]
            part_ir = PartitionTable(
                section["ir_better"]["count"], dict(section["ir_better"]["bleu_by_system"])
            )
            part_nmt = PartitionTable(
                section["nmt_better"]["count"], dict(section["nmt_better"]["bleu_by_system"])
            )
        return cls(
            test_size=payload["test_size"],
            router=RouterConfig(**payload["router"]),
            seed=payload["seed"],
            systems=systems,
            effort=EffortStats(
                payload["effort"]["skipped_nmt"], payload["effort"]["fraction"]
            ),
            classifier=classifier,
            classifier_combined_bleu=combined_bleu,
            partition_ir_better=part_ir,
            partition_nmt_better=part_nmt,
            significance=dict(payload.get("significance", {})),
        )


def effort_saved(decisions: Sequence[RoutingDecision]) -> EffortStats:
    """Count decisions that reused a retrieved comment."""
    if not decisions:
        raise MetricError("no routing decisions to account")
    skipped = sum(1 for d in decisions if d.choice == CHOICE_IR)
    return EffortStats(skipped, skipped / len(decisions))


def generate_comment(
    sample,
    retriever: Bm25Retriever,
    router: RouterConfig,
    backend: Backend | None = None,
    classifier: Backend | None = None,
    bleu_cfg: BleuConfig = BleuConfig(),
) -> RoutingDecision:
    """Route one sample and emit its comment.

    The generator backend is only invoked when the choice is NMT (the
    oracle kind is the exception: it needs both outputs to compare).
    """
    result = retriever.retrieve_top1(sample)
    retrieved_code = retriever.code_of(result.retrieved_id)

    if router.kind == "always_ir":
        score, choice = 1.0, CHOICE_IR
    elif router.kind == "always_nmt":
        score, choice = 0.0, CHOICE_NMT
    elif router.kind == "lexical":
        score = lexical_score(sample.code_tokens, retrieved_code, bleu_cfg)
        choice = route(score, router.threshold)
    elif router.kind == "external":
        if classifier is None:
            raise ConfigError("classifier", "external router needs a classifier backend")
        raw = classifier.classify(sample.id, list(sample.code_tokens), list(retrieved_code))
        score = clamp_score(raw, request_id=sample.id)
        choice = route(score, router.threshold)
    elif router.kind == "oracle":
        if backend is None:
            raise ConfigError("generator", "oracle routing needs the generator backend")
        generated = backend.generate(sample.id, list(sample.code_tokens),
                                     list(sample.ast_tokens) if sample.ast_tokens else None)
        bleu_ir = sentence_bleu(result.retrieved_comment, sample.comment_tokens, bleu_cfg)
        bleu_nmt = sentence_bleu(generated, sample.comment_tokens, bleu_cfg)
        choice = oracle_route(bleu_ir, bleu_nmt)
        emitted = result.retrieved_comment if choice == CHOICE_IR else generated
        return RoutingDecision(sample.id, bleu_ir, choice, tuple(emitted), result.retrieved_id)
    else:  # pragma: no cover - RouterConfig validates kinds
        raise ConfigError("router.kind", f"unhandled kind {router.kind!r}")

    if choice == CHOICE_IR:
        emitted = result.retrieved_comment
    else:
        if backend is None:
            raise ConfigError("generator", "router chose NMT but no generator backend is configured")
        emitted = backend.generate(sample.id, list(sample.code_tokens),
                                   list(sample.ast_tokens) if sample.ast_tokens else None)
    return RoutingDecision(sample.id, score, choice, tuple(emitted), result.retrieved_id)


def partition_analysis(
    references: Mapping[str, Sequence[str]],
    predictions: Mapping[str, Mapping[str, Sequence[str]]],
    ir_scores: Mapping[str, float],
    nmt_scores: Mapping[str, float],
    bleu_cfg: BleuConfig = BleuConfig(),
) -> tuple[PartitionTable, PartitionTable]:
    """Split the test set by which base system wins each sample.

    A sample is retrieval-better when its retrieved comment scores
    strictly higher sentence BLEU than the generated one. Per-partition
    corpus BLEU is recomputed for every system; an empty partition yields
    None entries.
    """
    ids = sorted(references)
    ir_better = [sid for sid in ids if ir_scores[sid] > nmt_scores[sid]]
    nmt_better = [sid for sid in ids if ir_scores[sid] <= nmt_scores[sid]]

    def table(member_ids: list[str]) -> PartitionTable:
        by_system: dict[str, float | None] = {}
        for system, preds in predictions.items():
            if member_ids:
                pairs = [(preds[sid], references[sid]) for sid in member_ids]
                by_system[system] = corpus_bleu(pairs, bleu_cfg).composite
            else:
                by_system[system] = None
        return PartitionTable(len(member_ids), by_system)

    return table(ir_better), table(nmt_better)


def _backend_or_none(handle: GeneratorHandle | None) -> Backend | None:
    return open_backend(handle) if handle is not None else None


def run_experiment(config: RunConfig, corpus: Corpus | None = None) -> EvaluationReport:
    """Run the full pipeline described by `config` and write its outputs.

    Deterministic: given the same corpus, seeds, and deterministic
    backends, the emitted files are byte-identical across runs.
    """
    if corpus is None:
        corpus, _ = load_corpus(config.corpus_path)
    if not corpus.has_split or config.resplit:
        corpus = split_by_project(corpus, config.ratios, config.seed)

    for system in config.systems:
        if system not in KNOWN_SYSTEMS:
            raise ConfigError("systems", f"unknown system {system!r}")

    retriever = build_index(corpus, "train", k1=config.bm25_k1, b=config.bm25_b)
    test_samples = sorted(corpus.subset("test"), key=lambda s: s.id)
    if not test_samples:
        raise CorpusError("test split is empty")
    bleu_cfg = config.bleu

    references = {s.id: s.comment_tokens for s in test_samples}
    retrievals = {s.id: retriever.retrieve_top1(s) for s in test_samples}
    ir_pred = {sid: r.retrieved_comment for sid, r in retrievals.items()}

    generator = _backend_or_none(config.generator)
    classifier = _backend_or_none(config.classifier)
    try:
        # routing scores and choices for the combined system
        scores: dict[str, float] = {}
        choices: dict[str, str] = {}
        kind = config.router.kind
        if kind == "lexical":
            for s in test_samples:
                code = retriever.code_of(retrievals[s.id].retrieved_id)
                scores[s.id] = lexical_score(s.code_tokens, code, bleu_cfg)
                choices[s.id] = route(scores[s.id], config.router.threshold)
        elif kind == "external":
            if classifier is None:
                raise ConfigError("classifier", "external router needs a classifier backend")
            raw = classifier.classify_batch([
                (s.id, list(s.code_tokens), list(retriever.code_of(retrievals[s.id].retrieved_id)))
                for s in test_samples
            ])
            for s in test_samples:
                scores[s.id] = clamp_score(raw[s.id], request_id=s.id)
                choices[s.id] = route(scores[s.id], config.router.threshold)
        elif kind == "always_ir":
            for s in test_samples:
                scores[s.id], choices[s.id] = 1.0, CHOICE_IR
        elif kind == "always_nmt":
            for s in test_samples:
                scores[s.id], choices[s.id] = 0.0, CHOICE_NMT
        # "oracle" routing needs generated comments; resolved below

        needs_all_nmt = (
            "nmt" in config.systems or "oracle" in config.systems or kind == "oracle"
        )
        if needs_all_nmt:
            needed_ids = [s.id for s in test_samples]
        elif "combined" in config.systems:
            needed_ids = [s.id for s in test_samples if choices.get(s.id) == CHOICE_NMT]
        else:
            needed_ids = []

        nmt_pred: dict[str, tuple[str, ...]] = {}
        if needed_ids:
            if generator is None:
                raise ConfigError("generator", "a generator backend is required for this run")
            by_id = {s.id: s for s in test_samples}
            nmt_pred = generator.generate_batch([
                (sid, list(by_id[sid].code_tokens),
                 list(by_id[sid].ast_tokens) if by_id[sid].ast_tokens else None)
                for sid in needed_ids
            ])

        ir_sentence = {
            sid: sentence_bleu(ir_pred[sid], references[sid], bleu_cfg)
            for sid in references
        }
        nmt_sentence = {
            sid: sentence_bleu(nmt_pred[sid], references[sid], bleu_cfg)
            for sid in nmt_pred
        }

        if kind == "oracle":
            for s in test_samples:
                scores[s.id] = ir_sentence[s.id]
                choices[s.id] = oracle_route(ir_sentence[s.id], nmt_sentence[s.id])

        decisions = [
            RoutingDecision(
                sample_id=s.id,
                score=scores[s.id],
                choice=choices[s.id],
                emitted_comment=(
                    ir_pred[s.id] if choices[s.id] == CHOICE_IR else nmt_pred[s.id]
                ),
                retrieved_id=retrievals[s.id].retrieved_id,
            )
            for s in test_samples
        ] if "combined" in config.systems else []

        predictions: dict[str, dict[str, tuple[str, ...]]] = {}
        if "ir" in config.systems:
            predictions["ir"] = dict(ir_pred)
        if "nmt" in config.systems:
            predictions["nmt"] = dict(nmt_pred)
        if "combined" in config.systems:
            predictions["combined"] = {d.sample_id: d.emitted_comment for d in decisions}
        if "oracle" in config.systems:
            predictions["oracle"] = {
                sid: (
                    ir_pred[sid]
                    if oracle_route(ir_sentence[sid], nmt_sentence[sid]) == CHOICE_IR
                    else nmt_pred[sid]
                )
                for sid in references
            }
    finally:
        if generator is not None:
            generator.close()
        if classifier is not None:
            classifier.close()

    ordered_ids = [s.id for s in test_samples]
    system_rows = {
        system: evaluate_pairs(
            [(preds[sid], references[sid]) for sid in ordered_ids],
            bleu_cfg=bleu_cfg,
            sample_ids=ordered_ids,
            include_per_sample=True,
        )
        for system, preds in predictions.items()
    }

    effort = (
        effort_saved(decisions)
        if decisions
        else EffortStats(0, 0.0)
    )

    classifier_row = None
    combined_bleu = None
    part_ir = part_nmt = None
    if "nmt" in predictions and "ir" in predictions:
        part_ir, part_nmt = partition_analysis(
            references, predictions, ir_sentence, nmt_sentence, bleu_cfg
        )
        if decisions:
            tp = fp = tn = fn = 0
            for d in decisions:
                truth, _, _ = label_sample(
                    references[d.sample_id], ir_pred[d.sample_id], nmt_pred[d.sample_id], bleu_cfg
                )
                predicted = d.choice == CHOICE_IR
                if predicted and truth:
                    tp += 1
                elif predicted and not truth:
                    fp += 1
                elif not predicted and not truth:
                    tn += 1
                else:
                    fn += 1
            classifier_row = classification_metrics(tp, fp, tn, fn)
            combined_bleu = system_rows["combined"].bleu_composite

    significance: dict[str, float | None] = {}
    if "combined" in system_rows:
        combined_scores = system_rows["combined"].per_sample
        for other in ("ir", "nmt", "oracle"):
            if other not in system_rows:
                continue
            other_scores = system_rows[other].per_sample
            paired = [(combined_scores[sid], other_scores[sid]) for sid in ordered_ids]
            try:
                significance[f"combined_vs_{other}"] = wilcoxon_signed_rank(paired).p_value
            except MetricError:
                significance[f"combined_vs_{other}"] = None

    report = EvaluationReport(
        test_size=len(test_samples),
        router=config.router,
        seed=config.seed,
        systems=system_rows,
        effort=effort,
        classifier=classifier_row,
        classifier_combined_bleu=combined_bleu,
        partition_ir_better=part_ir,
        partition_nmt_better=part_nmt,
        significance=significance,
    )
    _write_outputs(config, report, predictions, decisions, references,
                   ir_sentence, nmt_sentence)
    return report


def _write_outputs(
    config: RunConfig,
    report: EvaluationReport,
    predictions: Mapping[str, Mapping[str, tuple[str, ...]]],
    decisions: Sequence[RoutingDecision],
    references: Mapping[str, Sequence[str]],
    ir_sentence: Mapping[str, float],
    nmt_sentence: Mapping[str, float],
) -> None:
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ordered_ids = sorted(references)
    for system, preds in predictions.items():
        path = out_dir / f"predictions_{system}.jsonl"
        with path.open("w", encoding="utf-8", newline="") as handle:
            for sid in ordered_ids:
                handle.write(json.dumps({
                    "id": sid,
                    "candidate": list(preds[sid]),
                    "reference": list(references[sid]),
                }, ensure_ascii=False) + "\n")
    if decisions:
        with (out_dir / "decisions.jsonl").open("w", encoding="utf-8", newline="") as handle:
            for d in decisions:
                handle.write(json.dumps({
                    "id": d.sample_id,
                    "score": d.score,
                    "choice": d.choice,
                    "comment": list(d.emitted_comment),
                    "retrieved_id": d.retrieved_id,
                }, ensure_ascii=False) + "\n")
    with (out_dir / "scores.jsonl").open("w", encoding="utf-8", newline="") as handle:
        for sid in ordered_ids:
            handle.write(json.dumps({
                "id": sid,
                "ir": ir_sentence.get(sid),
                "nmt": nmt_sentence.get(sid),
            }, ensure_ascii=False) + "\n")
    report_json = json.dumps(report.to_json_dict(), sort_keys=True, indent=2)
    (out_dir / "report.json").write_text(report_json + "\n", encoding="utf-8")
    logger.info("wrote results to %s", out_dir)
