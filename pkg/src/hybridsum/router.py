"""Per-sample routing between reusing a retrieved comment and generating one.

Routers score the (input code, retrieved code) pair in [0, 1]; a score at
or above the threshold selects the retrieved comment ("IR"), otherwise the
neural generator ("NMT"). Available kinds:

- lexical: sentence BLEU between the two code snippets (no training)
- external: a classifier backend scores the pair over the wire protocol
- oracle: picks whichever output has the higher BLEU against ground truth
- always_ir / always_nmt: constant baselines
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from sklearn.base import BaseEstimator

from .errors import ConfigError, CorpusError, MetricError
from .metrics import BleuConfig, corpus_bleu, sentence_bleu

logger = logging.getLogger(__name__)

Tokens = Sequence[str]

CHOICE_IR = "IR"
CHOICE_NMT = "NMT"

ROUTER_KINDS = ("lexical", "external", "oracle", "always_ir", "always_nmt")

DEFAULT_THRESHOLD = 0.40


@dataclass(frozen=True)
class RouterConfig:
    """Router kind plus the decision threshold (score >= threshold -> IR)."""

    kind: str = "lexical"
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if self.kind not in ROUTER_KINDS:
            raise ConfigError("router.kind", f"must be one of {ROUTER_KINDS}, got {self.kind!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("router.threshold", f"must be within [0, 1], got {self.threshold}")


def route(score: float, threshold: float) -> str:
    """IR iff score >= threshold (a tie goes to IR)."""
    if not 0.0 <= score <= 1.0:
        raise MetricError(f"score must be within [0, 1], got {score}")
    if not 0.0 <= threshold <= 1.0:
        raise MetricError(f"threshold must be within [0, 1], got {threshold}")
    return CHOICE_IR if score >= threshold else CHOICE_NMT


def lexical_score(
    input_code: Tokens, retrieved_code: Tokens, cfg: BleuConfig = BleuConfig()
) -> float:
    """Sentence BLEU of the input code against the retrieved code.

    The retrieved snippet plays the reference role; an empty retrieved
    snippet scores 0 rather than erroring.
    """
    if not retrieved_code:
        return 0.0
    return sentence_bleu(input_code, retrieved_code, cfg)


def clamp_score(raw: float, request_id: str = "") -> float:
    """Clamp a classifier score to [0, 1], warning when it was outside.

    Backends whose heads drift slightly out of range keep working instead
    of aborting a whole run.
    """
    if raw < 0.0 or raw > 1.0:
        logger.warning("request %r: classifier score %s outside [0, 1]; clamped", request_id, raw)
        return min(1.0, max(0.0, raw))
    return float(raw)


def classify_external(
    backend, input_code: Tokens, retrieved_code: Tokens, request_id: str = "classify"
) -> float:
    """Score a pair through a classifier backend, clamped to [0, 1]."""
    raw = backend.classify(request_id, list(input_code), list(retrieved_code))
    return clamp_score(raw, request_id)


def oracle_route(bleu_ir: float, bleu_nmt: float) -> str:
    """IR only when the retrieved comment is strictly better; ties go to NMT."""
    return CHOICE_IR if bleu_ir > bleu_nmt else CHOICE_NMT


class LexicalRouter(BaseEstimator):
    """Threshold router over code-to-code sentence BLEU."""

    def __init__(self, threshold: float = DEFAULT_THRESHOLD, bleu_config: BleuConfig | None = None):
        self.threshold = threshold
        self.bleu_config = bleu_config

    def _cfg(self) -> BleuConfig:
        return self.bleu_config if self.bleu_config is not None else BleuConfig()

    def score_pair(self, input_code: Tokens, retrieved_code: Tokens, request_id: str = "") -> float:
        return lexical_score(input_code, retrieved_code, self._cfg())

    def decision_function(self, pairs: Sequence[tuple[Tokens, Tokens]]) -> list[float]:
        return [self.score_pair(i, r) for i, r in pairs]

    def predict(self, pairs: Sequence[tuple[Tokens, Tokens]]) -> list[str]:
        return [route(s, self.threshold) for s in self.decision_function(pairs)]


class ExternalClassifierRouter(BaseEstimator):
    """Threshold router over an external pair-classifier backend."""

    def __init__(self, backend=None, threshold: float = DEFAULT_THRESHOLD):
        self.backend = backend
        self.threshold = threshold

    def score_pair(self, input_code: Tokens, retrieved_code: Tokens, request_id: str = "classify") -> float:
        if self.backend is None:
            raise ConfigError("router.backend", "external router needs a classifier backend")
        return classify_external(self.backend, input_code, retrieved_code, request_id)

    def predict(self, pairs: Sequence[tuple[Tokens, Tokens]]) -> list[str]:
        return [route(self.score_pair(i, r), self.threshold) for i, r in pairs]


# -- threshold sweep -------------------------------------------------------


@dataclass(frozen=True)
class SweepCandidate:
    """Everything the sweep needs for one development sample."""

    id: str
    reference: tuple[str, ...]
    ir_comment: tuple[str, ...]
    nmt_comment: tuple[str, ...]
    score: float


@dataclass(frozen=True)
class SweepResult:
    best_threshold: float
    curve: tuple[tuple[float, float], ...]  # (threshold, combined corpus BLEU)


def threshold_grid(start: float = 0.0, stop: float = 1.0, step: float = 0.05) -> list[float]:
    count = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 10) for i in range(count)]


def sweep_threshold(
    candidates: Sequence[SweepCandidate],
    grid: Sequence[float] | None = None,
    cfg: BleuConfig = BleuConfig(),
) -> SweepResult:
    """Evaluate every grid threshold on a development set.

    For each threshold the routed outputs (IR comment when the stored
    score clears it, NMT comment otherwise) are pooled into one corpus
    BLEU. Returns the full curve and the best threshold, ties resolved
    toward the smallest value.
    """
    if not candidates:
        raise MetricError("cannot sweep an empty development set")
    if grid is None:
        grid = threshold_grid()
    curve = []
    best_threshold, best_bleu = None, -1.0
    for threshold in grid:
        pairs = [
            (
                c.ir_comment if c.score >= threshold else c.nmt_comment,
                c.reference,
            )
            for c in candidates
        ]
        combined = corpus_bleu(pairs, cfg).composite
        curve.append((threshold, combined))
        if combined > best_bleu:
            best_threshold, best_bleu = threshold, combined
    return SweepResult(best_threshold, tuple(curve))


def save_sweep_candidates(candidates: Sequence[SweepCandidate], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        for c in candidates:
            handle.write(json.dumps({
                "id": c.id,
                "reference": list(c.reference),
                "ir": list(c.ir_comment),
                "nmt": list(c.nmt_comment),
                "score": c.score,
            }, ensure_ascii=False) + "\n")


def load_sweep_candidates(path: str | Path) -> list[SweepCandidate]:
    candidates = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed candidate: {exc.msg}") from exc
            candidates.append(SweepCandidate(
                id=record["id"],
                reference=tuple(record["reference"]),
                ir_comment=tuple(record["ir"]),
                nmt_comment=tuple(record["nmt"]),
                score=float(record["score"]),
            ))
    return candidates


def curve_to_csv(curve: Sequence[tuple[float, float]]) -> str:
    """CSV rendering of a sweep curve, full float precision."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["threshold", "bleu"])
    for threshold, bleu in curve:
        writer.writerow([repr(threshold), repr(bleu)])
    return buffer.getvalue()
