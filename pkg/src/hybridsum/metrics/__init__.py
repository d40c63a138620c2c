"""Comment-quality metrics: BLEU, METEOR, ROUGE-L, CIDEr, classification
metrics, and the Wilcoxon signed-rank test.

`evaluate_pairs` bundles the per-system numbers into a `MetricReport`
matching the standard results-table column order (BLEU, BLEU1-4, METEOR,
ROUGE-L, CIDER). BLEU columns are corpus-pooled; METEOR and ROUGE-L are
sentence means; CIDEr is the consensus mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from ..errors import MetricError
from .bleu import BleuConfig, CorpusBleu, corpus_bleu, ngram_counts, sentence_bleu
from .cider import cider, cider_per_sample
from .classification import ClassificationMetrics, classification_metrics
from .meteor import MeteorConfig, meteor
from .rouge import rouge_l
from .significance import WilcoxonResult, wilcoxon_signed_rank

__all__ = [
    "BleuConfig",
    "ClassificationMetrics",
    "CorpusBleu",
    "MeteorConfig",
    "MetricReport",
    "WilcoxonResult",
    "cider",
    "cider_per_sample",
    "classification_metrics",
    "corpus_bleu",
    "evaluate_pairs",
    "meteor",
    "ngram_counts",
    "rouge_l",
    "sentence_bleu",
    "wilcoxon_signed_rank",
]

PERCENT_FIELDS = ("bleu_composite", "bleu_1", "bleu_2", "bleu_3", "bleu_4",
                  "meteor", "rouge_l")
REPORT_FIELDS = PERCENT_FIELDS + ("cider",)


@dataclass(frozen=True)
class MetricReport:
    """One row of the results table, plus optional per-sample sentence BLEU."""

    bleu_composite: float
    bleu_1: float
    bleu_2: float
    bleu_3: float
    bleu_4: float
    meteor: float
    rouge_l: float
    cider: float
    per_sample: Mapping[str, float] | None = field(default=None, compare=False)

    def as_dict(self, percent: bool = False) -> dict[str, float]:
        values = {name: getattr(self, name) for name in REPORT_FIELDS}
        if percent:
            for name in PERCENT_FIELDS:
                values[name] = values[name] * 100.0
        return values


def evaluate_pairs(
    pairs: Sequence[tuple[Sequence[str], Sequence[str]]],
    bleu_cfg: BleuConfig = BleuConfig(),
    meteor_cfg: MeteorConfig = MeteorConfig(),
    sample_ids: Sequence[str] | None = None,
    include_per_sample: bool = False,
) -> MetricReport:
    """Score (candidate, reference) pairs into a full metric row."""
    if not pairs:
        raise MetricError("cannot evaluate an empty pair list")
    if sample_ids is not None and len(sample_ids) != len(pairs):
        raise MetricError("sample_ids length does not match pairs")
    pooled = corpus_bleu(pairs, bleu_cfg)
    meteor_mean = sum(meteor(c, r, meteor_cfg) for c, r in pairs) / len(pairs)
    rouge_mean = sum(rouge_l(c, r) if c else 0.0 for c, r in pairs) / len(pairs)
    per_sample = None
    if include_per_sample:
        ids = sample_ids or [str(i) for i in range(len(pairs))]
        per_sample = {
            sid: sentence_bleu(c, r, bleu_cfg) for sid, (c, r) in zip(ids, pairs)
        }
    return MetricReport(
        bleu_composite=pooled.composite,
        bleu_1=pooled.per_n[0],
        bleu_2=pooled.per_n[1] if len(pooled.per_n) > 1 else 0.0,
        bleu_3=pooled.per_n[2] if len(pooled.per_n) > 2 else 0.0,
        bleu_4=pooled.per_n[3] if len(pooled.per_n) > 3 else 0.0,
        meteor=meteor_mean,
        rouge_l=rouge_mean,
        cider=cider(pairs),
        per_sample=per_sample,
    )
