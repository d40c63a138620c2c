"""Two-sided Wilcoxon signed-rank test.

The exact null distribution (used up to `EXACT_LIMIT` pairs) is computed
by dynamic programming over doubled ranks, so tied absolute differences
with average ranks stay exact. Larger samples use the normal
approximation with tie and continuity corrections.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from ..errors import MetricError

EXACT_LIMIT = 25
MIN_PAIRS = 6


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float
    p_value: float
    n_used: int
    method: str  # "exact" | "normal"


def average_ranks(values: Sequence[float]) -> list[float]:
    """Ranks 1..n with tied values sharing their average rank."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        shared = (i + j + 2) / 2.0
        for k in range(i, j + 1):
            ranks[order[k]] = shared
        i = j + 1
    return ranks


def _exact_p(doubled_ranks: list[int], doubled_stat: int) -> float:
    """P(min(W+, W-) <= observed) by enumeration of the sign-flip null.

    Counts sign assignments via the subset-sum distribution of the doubled
    ranks; exact for any tie structure.
    """
    total = sum(doubled_ranks)
    counts = [0] * (total + 1)
    counts[0] = 1
    reached = 0
    for rank in doubled_ranks:
        reached = min(total, reached + rank)
        for s in range(reached, rank - 1, -1):
            counts[s] += counts[s - rank]
    threshold = min(doubled_stat, total - doubled_stat)
    if total - threshold <= threshold:
        return 1.0
    lower = sum(counts[: threshold + 1])
    upper = sum(counts[total - threshold:])
    return (lower + upper) / 2 ** len(doubled_ranks)


def _normal_p(ranks: list[float], abs_diffs: list[float], statistic: float) -> float:
    n = len(ranks)
    mu = n * (n + 1) / 4.0
    variance = n * (n + 1) * (2 * n + 1) / 24.0
    tie_sizes = Counter(abs_diffs).values()
    variance -= sum(t ** 3 - t for t in tie_sizes) / 48.0
    if variance <= 0:
        raise MetricError("all absolute differences are tied; variance is zero")
    # statistic <= mu by construction; continuity correction moves it toward mu
    z = (statistic - mu + 0.5) / math.sqrt(variance)
    p = math.erfc(-z / math.sqrt(2.0))
    return min(1.0, p)


def wilcoxon_signed_rank(paired: Sequence[tuple[float, float]]) -> WilcoxonResult:
    """Two-sided test on paired scores; zero differences are dropped.

    Requires at least `MIN_PAIRS` nonzero differences. The statistic is
    min(W+, W-), following the convention that smaller is more extreme.
    """
    diffs = [a - b for a, b in paired if a != b]
    n = len(diffs)
    if n < MIN_PAIRS:
        raise MetricError(
            f"need at least {MIN_PAIRS} non-zero-difference pairs, got {n}"
        )
    abs_diffs = [abs(d) for d in diffs]
    ranks = average_ranks(abs_diffs)
    w_plus = sum(r for r, d in zip(ranks, diffs) if d > 0)
    w_minus = sum(r for r, d in zip(ranks, diffs) if d < 0)
    statistic = min(w_plus, w_minus)
    if n <= EXACT_LIMIT:
        doubled = [int(round(2 * r)) for r in ranks]
        p = _exact_p(doubled, int(round(2 * statistic)))
        return WilcoxonResult(statistic, p, n, "exact")
    return WilcoxonResult(statistic, _normal_p(ranks, abs_diffs, statistic), n, "normal")
