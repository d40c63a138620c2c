"""METEOR with exact-token unigram alignment and a fragmentation penalty."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ..errors import MetricError

Tokens = Sequence[str]


@dataclass(frozen=True)
class MeteorConfig:
    alpha: float = 0.9
    beta: float = 3.0
    gamma: float = 0.5


def align(candidate: Tokens, reference: Tokens) -> list[tuple[int, int]]:
    """Exact-token alignment between candidate and reference positions.

    Repeatedly matches the longest common contiguous run of unmatched
    tokens (ties: leftmost in the candidate, then in the reference). This
    always reaches the maximum number of unigram matches and keeps chunks
    close to minimal; exact chunk minimization over all maximum matchings
    is a hard partition problem, so the longest-run heuristic is used.

    Returns (candidate_index, reference_index) pairs sorted by candidate
    position.
    """
    cand_used = [False] * len(candidate)
    ref_used = [False] * len(reference)
    pairs: list[tuple[int, int]] = []
    while True:
        best_len, best_i, best_j = 0, -1, -1
        for i in range(len(candidate)):
            if cand_used[i]:
                continue
            for j in range(len(reference)):
                if ref_used[j] or reference[j] != candidate[i]:
                    continue
                length = 0
                while (
                    i + length < len(candidate)
                    and j + length < len(reference)
                    and not cand_used[i + length]
                    and not ref_used[j + length]
                    and candidate[i + length] == reference[j + length]
                ):
                    length += 1
                if length > best_len:
                    best_len, best_i, best_j = length, i, j
        if best_len == 0:
            break
        for k in range(best_len):
            cand_used[best_i + k] = True
            ref_used[best_j + k] = True
            pairs.append((best_i + k, best_j + k))
    pairs.sort()
    return pairs


def _chunk_count(pairs: list[tuple[int, int]]) -> int:
    """Number of maximal runs that are contiguous in both sequences."""
    chunks = 0
    prev = None
    for c, r in pairs:
        if prev is None or c != prev[0] + 1 or r != prev[1] + 1:
            chunks += 1
        prev = (c, r)
    return chunks


def meteor(candidate: Tokens, reference: Tokens, cfg: MeteorConfig = MeteorConfig()) -> float:
    """METEOR score in [0, 1]; 0 when no token matches."""
    if not reference:
        raise MetricError("reference must be nonempty")
    if not candidate:
        return 0.0
    pairs = align(candidate, reference)
    matches = len(pairs)
    if matches == 0:
        return 0.0
    precision = matches / len(candidate)
    recall = matches / len(reference)
    fmean = precision * recall / (cfg.alpha * precision + (1.0 - cfg.alpha) * recall)
    fragmentation = _chunk_count(pairs) / matches
    penalty = cfg.gamma * fragmentation ** cfg.beta
    return (1.0 - penalty) * fmean
