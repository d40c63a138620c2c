"""Sentence- and corpus-level BLEU with clipped n-gram precision.

Both entry points use the same n-gram machinery but aggregate differently:
the sentence score multiplies per-sentence precisions, the corpus score
pools match/total counts over all pairs before taking the geometric mean,
and applies the brevity penalty to the summed lengths.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from ..errors import MetricError

Tokens = Sequence[str]

SMOOTHING_NONE = "none"
SMOOTHING_EPSILON = "epsilon"


@dataclass(frozen=True)
class BleuConfig:
    """BLEU settings: n-gram order, weights, and zero-precision handling.

    `weights` defaults to uniform 1/max_n. With `smoothing="none"` any zero
    precision collapses the sentence score to 0; `"epsilon"` substitutes
    `epsilon` for zero precisions instead. Corpus-level scoring never
    smooths regardless of this setting.
    """

    max_n: int = 4
    weights: tuple[float, ...] | None = None
    smoothing: str = SMOOTHING_NONE
    epsilon: float = 1e-9

    def __post_init__(self):
        if self.max_n < 1:
            raise MetricError(f"max_n must be >= 1, got {self.max_n}")
        if self.weights is not None:
            if len(self.weights) != self.max_n:
                raise MetricError(
                    f"expected {self.max_n} weights, got {len(self.weights)}"
                )
            if abs(sum(self.weights) - 1.0) > 1e-9:
                raise MetricError("weights must sum to 1")
        if self.smoothing not in (SMOOTHING_NONE, SMOOTHING_EPSILON):
            raise MetricError(f"unknown smoothing mode: {self.smoothing!r}")

    def order_weights(self, orders: Sequence[int]) -> list[float]:
        """Weights for the n-gram orders actually used.

        When some orders are unusable (candidate too short), the remaining
        ones are re-weighted uniformly.
        """
        if len(orders) == self.max_n and self.weights is not None:
            return list(self.weights)
        return [1.0 / len(orders)] * len(orders)


@dataclass(frozen=True)
class CorpusBleu:
    """Corpus-level composite BLEU plus individual per-order scores."""

    composite: float
    per_n: tuple[float, ...]


def ngram_counts(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _clipped_matches(candidate: Tokens, reference: Tokens, n: int) -> tuple[int, int]:
    """(clipped match count, candidate n-gram count) for one order."""
    cand = ngram_counts(candidate, n)
    if not cand:
        return 0, 0
    ref = ngram_counts(reference, n)
    matches = sum(min(count, ref[gram]) for gram, count in cand.items())
    return matches, sum(cand.values())


def brevity_penalty(candidate_len: int, reference_len: int) -> float:
    if candidate_len == 0:
        return 0.0
    if candidate_len > reference_len:
        return 1.0
    return math.exp(1.0 - reference_len / candidate_len)


def sentence_bleu(candidate: Tokens, reference: Tokens, cfg: BleuConfig = BleuConfig()) -> float:
    """BLEU of a single candidate against a single reference, in [0, 1].

    Candidates shorter than `cfg.max_n` are scored over the orders they
    support, with uniform re-weighting. An empty candidate scores 0.
    """
    if not reference:
        raise MetricError("reference must be nonempty")
    if not candidate:
        return 0.0
    orders = [n for n in range(1, cfg.max_n + 1) if n <= len(candidate)]
    weights = cfg.order_weights(orders)
    log_sum = 0.0
    for weight, n in zip(weights, orders):
        matches, total = _clipped_matches(candidate, reference, n)
        if matches == 0:
            if cfg.smoothing == SMOOTHING_NONE:
                return 0.0
            precision = cfg.epsilon
        else:
            precision = matches / total
        log_sum += weight * math.log(precision)
    return brevity_penalty(len(candidate), len(reference)) * math.exp(log_sum)


def corpus_bleu(
    pairs: Sequence[tuple[Tokens, Tokens]], cfg: BleuConfig = BleuConfig()
) -> CorpusBleu:
    """Pooled corpus BLEU over (candidate, reference) pairs.

    The composite score uses pooled match/total counts per order and a
    brevity penalty over summed lengths; `per_n` holds the individual
    (not cumulative) per-order scores BP * p_n. Orders with no candidate
    n-grams anywhere are dropped from the composite with uniform
    re-weighting, which keeps singleton lists consistent with
    `sentence_bleu`. No smoothing is applied at corpus level.
    """
    if not pairs:
        raise MetricError("corpus_bleu needs at least one pair")
    matches = [0] * (cfg.max_n + 1)
    totals = [0] * (cfg.max_n + 1)
    candidate_len = 0
    reference_len = 0
    for candidate, reference in pairs:
        if not reference:
            raise MetricError("reference must be nonempty")
        candidate_len += len(candidate)
        reference_len += len(reference)
        for n in range(1, cfg.max_n + 1):
            m, t = _clipped_matches(candidate, reference, n)
            matches[n] += m
            totals[n] += t

    bp = brevity_penalty(candidate_len, reference_len)
    per_n = tuple(
        bp * (matches[n] / totals[n]) if totals[n] else 0.0
        for n in range(1, cfg.max_n + 1)
    )
    if candidate_len == 0:
        return CorpusBleu(0.0, per_n)
    orders = [n for n in range(1, cfg.max_n + 1) if totals[n] > 0]
    if not orders or any(matches[n] == 0 for n in orders):
        return CorpusBleu(0.0, per_n)
    weights = cfg.order_weights(orders)
    log_sum = sum(
        w * math.log(matches[n] / totals[n]) for w, n in zip(weights, orders)
    )
    return CorpusBleu(bp * math.exp(log_sum), per_n)
