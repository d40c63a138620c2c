"""ROUGE-L: longest-common-subsequence F-score."""

from __future__ import annotations

from typing import Sequence

from ..errors import MetricError

Tokens = Sequence[str]


def lcs_length(a: Tokens, b: Tokens) -> int:
    """Length of the longest common subsequence, O(len(a) * len(b))."""
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for x in a:
        current = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def rouge_l(candidate: Tokens, reference: Tokens) -> float:
    """LCS F-score with beta = P/R; 0 when there is no common subsequence."""
    if not candidate or not reference:
        raise MetricError("candidate and reference must be nonempty")
    lcs = lcs_length(reference, candidate)
    if lcs == 0:
        return 0.0
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    beta = precision / recall
    return (1.0 + beta ** 2) * precision * recall / (recall + beta ** 2 * precision)
