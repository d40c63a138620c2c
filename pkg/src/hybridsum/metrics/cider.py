"""CIDEr: consensus scoring via TF-IDF weighted n-gram cosine similarity.

Document frequencies come from the reference side of the evaluated pairs
(each reference is one document). With a single reference per candidate
the per-sample score is the average, over n = 1..4, of the cosine between
the TF-IDF n-gram vectors of candidate and reference.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

from ..errors import MetricError
from .bleu import ngram_counts

Tokens = Sequence[str]

MAX_N = 4


def _document_frequencies(references: Sequence[Tokens]) -> list[Counter]:
    df: list[Counter] = [Counter() for _ in range(MAX_N + 1)]
    for reference in references:
        for n in range(1, MAX_N + 1):
            for gram in set(ngram_counts(reference, n)):
                df[n][gram] += 1
    return df


def _tfidf(counts: Counter, df: Counter, corpus_size: int) -> dict:
    return {
        gram: count * math.log(corpus_size / max(1, df[gram]))
        for gram, count in counts.items()
    }


def _cosine(u: dict, v: dict) -> float:
    dot = sum(weight * v.get(gram, 0.0) for gram, weight in u.items())
    norm_u = math.sqrt(sum(w * w for w in u.values()))
    norm_v = math.sqrt(sum(w * w for w in v.values()))
    if norm_u == 0.0 or norm_v == 0.0:
        return 0.0
    return dot / (norm_u * norm_v)


def cider_per_sample(pairs: Sequence[tuple[Tokens, Tokens]]) -> list[float]:
    """Per-pair CIDEr scores; see `cider` for the corpus mean."""
    if not pairs:
        raise MetricError("cider needs at least one pair")
    corpus_size = len(pairs)
    df = _document_frequencies([reference for _, reference in pairs])
    scores = []
    for candidate, reference in pairs:
        total = 0.0
        for n in range(1, MAX_N + 1):
            cand_vec = _tfidf(ngram_counts(candidate, n), df[n], corpus_size)
            ref_vec = _tfidf(ngram_counts(reference, n), df[n], corpus_size)
            total += _cosine(cand_vec, ref_vec) / MAX_N
        scores.append(total)
    return scores


def cider(pairs: Sequence[tuple[Tokens, Tokens]]) -> float:
    """Mean per-sample CIDEr over the evaluated pairs (non-negative)."""
    scores = cider_per_sample(pairs)
    return sum(scores) / len(scores)
