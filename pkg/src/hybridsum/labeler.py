"""Build the triplet dataset that supervises the reuse-or-generate decision.

For each sample in a held-out split we retrieve the most similar training
sample, generate a neural comment, score both against the ground truth
with sentence BLEU, and label the pair: positive means the retrieved
comment is the better output and can be reused verbatim.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from random import Random
from typing import Callable, Sequence

from .corpus import Corpus
from .errors import CorpusError, MetricError
from .metrics import BleuConfig, sentence_bleu
from .retrieval import Bm25Retriever

logger = logging.getLogger(__name__)

Tokens = Sequence[str]
BothPoorPredicate = Callable[[Tokens, Tokens, Tokens], bool]

SUBSET_TRAIN = "train"
SUBSET_DEV = "dev"


@dataclass(frozen=True)
class Triplet:
    """<input code, retrieved code, is the retrieved comment better?>

    Both BLEU scores that produced the label are kept for auditing.
    """

    input_id: str
    retrieved_id: str
    input_code: tuple[str, ...]
    retrieved_code: tuple[str, ...]
    label: bool
    bleu_ir: float
    bleu_nmt: float
    subset: str = SUBSET_TRAIN


def hits_any_word(result: Tokens, ground_truth: Tokens) -> bool:
    """True when the result shares at least one token with the ground truth."""
    return bool(set(result) & set(ground_truth))


def default_both_poor(ground_truth: Tokens, ir_comment: Tokens, nmt_comment: Tokens) -> bool:
    """Both outputs miss every ground-truth word."""
    return not hits_any_word(ir_comment, ground_truth) and not hits_any_word(
        nmt_comment, ground_truth
    )


def label_sample(
    ground_truth: Tokens,
    ir_comment: Tokens,
    nmt_comment: Tokens,
    cfg: BleuConfig = BleuConfig(),
    both_poor: BothPoorPredicate = default_both_poor,
) -> tuple[bool, float, float]:
    """Label one sample: positive iff the retrieved comment scores strictly
    higher AND the pair is not a both-poor case.

    Ties are negative, and so are samples where neither output hits a
    single ground-truth word (no evidence the retrieval is reusable).
    """
    if not ground_truth:
        raise MetricError("ground truth must be nonempty")
    bleu_ir = sentence_bleu(ir_comment, ground_truth, cfg)
    bleu_nmt = sentence_bleu(nmt_comment, ground_truth, cfg)
    label = bleu_ir > bleu_nmt and not both_poor(ground_truth, ir_comment, nmt_comment)
    return label, bleu_ir, bleu_nmt


def build_triplet_dataset(
    corpus: Corpus,
    retriever: Bm25Retriever,
    backend,
    cfg: BleuConfig = BleuConfig(),
    seed: int = 0,
    dev_fraction: float = 0.1,
    split: str = "validation",
    both_poor: BothPoorPredicate = default_both_poor,
) -> list[Triplet]:
    """One triplet per sample of the given split, ordered by input id.

    The neural comments come from `backend` (anything with a
    `generate_batch` method speaking the wire protocol types); a backend
    failure on any sample aborts the build. Triplets are divided into
    train/dev subsets by a seeded shuffle, dev taking `dev_fraction`.
    """
    samples = sorted(corpus.subset(split), key=lambda s: s.id)
    if not samples:
        raise CorpusError(f"split {split!r} is empty")
    generated = backend.generate_batch(
        [(s.id, list(s.code_tokens), list(s.ast_tokens) if s.ast_tokens else None)
         for s in samples]
    )

    ids = [s.id for s in samples]
    shuffled = list(ids)
    Random(seed).shuffle(shuffled)
    n_train = int(round((1.0 - dev_fraction) * len(ids)))
    dev_ids = set(shuffled[n_train:])

    triplets: list[Triplet] = []
    for sample in samples:
        result = retriever.retrieve_top1(sample)
        retrieved_code = retriever.code_of(result.retrieved_id)
        label, bleu_ir, bleu_nmt = label_sample(
            sample.comment_tokens,
            result.retrieved_comment,
            generated[sample.id],
            cfg,
            both_poor,
        )
        triplets.append(
            Triplet(
                input_id=sample.id,
                retrieved_id=result.retrieved_id,
                input_code=tuple(sample.code_tokens),
                retrieved_code=tuple(retrieved_code),
                label=label,
                bleu_ir=bleu_ir,
                bleu_nmt=bleu_nmt,
                subset=SUBSET_DEV if sample.id in dev_ids else SUBSET_TRAIN,
            )
        )
    positives = sum(t.label for t in triplets)
    logger.info(
        "labeled %d samples: %d positive, %d dev", len(triplets), positives, len(dev_ids)
    )
    return triplets


def save_triplets(triplets: Sequence[Triplet], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        for t in triplets:
            record = {
                "input_id": t.input_id,
                "retrieved_id": t.retrieved_id,
                "input_code": " ".join(t.input_code),
                "retrieved_code": " ".join(t.retrieved_code),
                "label": int(t.label),
                "bleu_ir": t.bleu_ir,
                "bleu_nmt": t.bleu_nmt,
                "subset": t.subset,
            }
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_triplets(path: str | Path) -> list[Triplet]:
    triplets = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed triplet: {exc.msg}") from exc
            triplets.append(
                Triplet(
                    input_id=record["input_id"],
                    retrieved_id=record["retrieved_id"],
                    input_code=tuple(record["input_code"].split()),
                    retrieved_code=tuple(record["retrieved_code"].split()),
                    label=bool(record["label"]),
                    bleu_ir=float(record["bleu_ir"]),
                    bleu_nmt=float(record["bleu_nmt"]),
                    subset=record.get("subset", SUBSET_TRAIN),
                )
            )
    return triplets
