"""Corpus loading, token preprocessing, filtering, and project-level splits.

The on-disk corpus format is JSON lines, one record per sample:

    {"id": "...", "project": "...", "code": "raw text",
     "ast": "space separated tokens",   # optional
     "comment": "raw text",
     "split": "train"}                  # optional, added by `save_corpus`

Code and comment text is normalized into lowercase alphabetic tokens;
AST token sequences are taken verbatim (split on whitespace).
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from random import Random
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import CorpusError

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "validation", "test")

DEFAULT_AUTO_GENERATED_PATTERNS = (("generated", "by"), ("auto", "generated"))

_CAMEL_ACRONYM = re.compile(r"([A-Z]+)([A-Z][a-z])")
_CAMEL_LOWER_UPPER = re.compile(r"([a-z0-9])([A-Z])")
_NON_ALPHA = re.compile(r"[^A-Za-z]+")


@dataclass(frozen=True)
class PreprocessConfig:
    """Switches for the normalization applied to raw code and comment text.

    The auto-generated heuristic is a configurable stand-in: a comment is
    considered auto-generated when it contains any of the configured token
    subsequences. The default list is deliberately conservative.
    """

    split_camel: bool = True
    split_underscore: bool = True
    strip_non_alpha: bool = True
    lowercase: bool = True
    auto_generated_patterns: tuple[tuple[str, ...], ...] = DEFAULT_AUTO_GENERATED_PATTERNS


@dataclass(frozen=True)
class Sample:
    """One code-comment pair. Token sequences are stored post-preprocessing."""

    id: str
    project_id: str
    code_tokens: tuple[str, ...]
    comment_tokens: tuple[str, ...]
    ast_tokens: tuple[str, ...] | None = None


@dataclass(frozen=True)
class LoadStats:
    """Counts reported by `load_corpus`."""

    total_records: int
    dropped_empty_comment: int
    dropped_empty_code: int


def preprocess(raw_text: str | bytes, cfg: PreprocessConfig = PreprocessConfig()) -> list[str]:
    """Normalize raw text into a token sequence.

    Identifiers are split at camel-case boundaries and underscores,
    non-alphabetic characters (digits and symbols) act as token
    separators, and the result is lowercased. Each step can be disabled
    through `cfg`. Idempotent: re-running on the joined output is a no-op.
    """
    if isinstance(raw_text, (bytes, bytearray)):
        try:
            raw_text = raw_text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorpusError(f"undecodable input at byte offset {exc.start}") from exc
    text = raw_text
    if cfg.split_camel:
        text = _CAMEL_ACRONYM.sub(r"\1 \2", text)
        text = _CAMEL_LOWER_UPPER.sub(r"\1 \2", text)
    if cfg.split_underscore:
        text = text.replace("_", " ")
    if cfg.strip_non_alpha:
        text = _NON_ALPHA.sub(" ", text)
    if cfg.lowercase:
        text = text.lower()
    return text.split()


class Corpus:
    """An immutable, ordered collection of samples with an optional split map.

    The split map assigns sample ids to one of "train", "validation" or
    "test"; when present it must cover every sample, and no project may
    straddle two splits (enforced by `split_by_project`, checked here).
    """

    def __init__(self, samples: Iterable[Sample], split: Mapping[str, str] | None = None):
        self._samples = tuple(samples)
        self._by_id: dict[str, Sample] = {}
        for sample in self._samples:
            if sample.id in self._by_id:
                raise CorpusError(f"duplicate sample id: {sample.id!r}")
            self._by_id[sample.id] = sample
        self._split = dict(split) if split else {}
        if self._split:
            self._check_split()

    def _check_split(self) -> None:
        for sid, name in self._split.items():
            if sid not in self._by_id:
                raise CorpusError(f"split references unknown sample id: {sid!r}")
            if name not in SPLIT_NAMES:
                raise CorpusError(f"unknown split name {name!r} for sample {sid!r}")
        missing = [s.id for s in self._samples if s.id not in self._split]
        if missing:
            raise CorpusError(f"split does not cover sample id: {missing[0]!r}")
        project_split: dict[str, str] = {}
        for sample in self._samples:
            name = self._split[sample.id]
            seen = project_split.setdefault(sample.project_id, name)
            if seen != name:
                raise CorpusError(
                    f"project {sample.project_id!r} appears in both {seen!r} and {name!r}"
                )

    @property
    def samples(self) -> tuple[Sample, ...]:
        return self._samples

    @property
    def split(self) -> dict[str, str]:
        return dict(self._split)

    @property
    def has_split(self) -> bool:
        return bool(self._split)

    def __len__(self) -> int:
        return len(self._samples)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self._samples)

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self._by_id

    def get(self, sample_id: str) -> Sample:
        try:
            return self._by_id[sample_id]
        except KeyError:
            raise CorpusError(f"unknown sample id: {sample_id!r}") from None

    def subset(self, split_name: str) -> tuple[Sample, ...]:
        """Samples assigned to one split, in corpus order."""
        if split_name not in SPLIT_NAMES:
            raise CorpusError(f"unknown split name: {split_name!r}")
        if not self._split:
            raise CorpusError("corpus has no split assignment")
        return tuple(s for s in self._samples if self._split[s.id] == split_name)

    def by_project(self) -> dict[str, list[Sample]]:
        projects: dict[str, list[Sample]] = {}
        for sample in self._samples:
            projects.setdefault(sample.project_id, []).append(sample)
        return projects

    def with_split(self, split: Mapping[str, str]) -> "Corpus":
        return Corpus(self._samples, split)


def load_corpus(
    path: str | Path, cfg: PreprocessConfig = PreprocessConfig()
) -> tuple[Corpus, LoadStats]:
    """Read a JSONL corpus file, preprocessing code and comment text.

    Records whose comment or code preprocesses to zero tokens are dropped
    and counted in the returned stats. Malformed records and duplicate ids
    raise `CorpusError` naming the line or id.
    """
    path = Path(path)
    samples: list[Sample] = []
    split: dict[str, str] = {}
    seen_ids: set[str] = set()
    total = dropped_comment = dropped_code = 0
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            total += 1
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed record: {exc.msg}") from exc
            if not isinstance(record, dict):
                raise CorpusError(f"{path}:{lineno}: record is not a JSON object")
            try:
                sample_id = record["id"]
                project = record["project"]
                code = record["code"]
                comment = record["comment"]
            except KeyError as exc:
                raise CorpusError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from exc
            for field_name, value in (("id", sample_id), ("project", project),
                                      ("code", code), ("comment", comment)):
                if not isinstance(value, str):
                    raise CorpusError(f"{path}:{lineno}: field {field_name!r} is not a string")
            if sample_id in seen_ids:
                raise CorpusError(f"{path}:{lineno}: duplicate sample id: {sample_id!r}")
            seen_ids.add(sample_id)

            comment_tokens = tuple(preprocess(comment, cfg))
            if not comment_tokens:
                dropped_comment += 1
                continue
            code_tokens = tuple(preprocess(code, cfg))
            if not code_tokens:
                dropped_code += 1
                continue
            ast_raw = record.get("ast")
            ast_tokens = tuple(ast_raw.split()) if isinstance(ast_raw, str) and ast_raw.split() else None
            samples.append(
                Sample(
                    id=sample_id,
                    project_id=project,
                    code_tokens=code_tokens,
                    comment_tokens=comment_tokens,
                    ast_tokens=ast_tokens,
                )
            )
            split_name = record.get("split")
            if split_name is not None:
                if split_name not in SPLIT_NAMES:
                    raise CorpusError(f"{path}:{lineno}: unknown split name {split_name!r}")
                split[sample_id] = split_name

    if split and len(split) != len(samples):
        raise CorpusError(f"{path}: split field present on some records but not all")
    stats = LoadStats(total, dropped_comment, dropped_code)
    if dropped_comment or dropped_code:
        logger.info(
            "loaded %s: %d records, dropped %d empty-comment and %d empty-code",
            path, total, dropped_comment, dropped_code,
        )
    return Corpus(samples, split or None), stats


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus back to JSONL, tokens space-joined, split included."""
    path = Path(path)
    split = corpus.split
    with path.open("w", encoding="utf-8", newline="") as handle:
        for sample in corpus:
            record: dict = {
                "id": sample.id,
                "project": sample.project_id,
                "code": " ".join(sample.code_tokens),
            }
            if sample.ast_tokens is not None:
                record["ast"] = " ".join(sample.ast_tokens)
            record["comment"] = " ".join(sample.comment_tokens)
            if sample.id in split:
                record["split"] = split[sample.id]
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def _contains_subsequence(tokens: Sequence[str], pattern: Sequence[str]) -> bool:
    if not pattern or len(pattern) > len(tokens):
        return False
    first = pattern[0]
    for start in range(len(tokens) - len(pattern) + 1):
        if tokens[start] == first and tuple(tokens[start:start + len(pattern)]) == tuple(pattern):
            return True
    return False


def filter_auto_generated(
    corpus: Corpus, cfg: PreprocessConfig = PreprocessConfig()
) -> tuple[Corpus, int]:
    """Drop samples whose comment contains a configured auto-generated marker.

    A marker matches when it occurs as a contiguous token subsequence of
    the comment. Returns the filtered corpus and the number removed.
    """
    patterns = [tuple(p) for p in cfg.auto_generated_patterns]
    kept: list[Sample] = []
    removed = 0
    for sample in corpus:
        if any(_contains_subsequence(sample.comment_tokens, p) for p in patterns):
            removed += 1
        else:
            kept.append(sample)
    old_split = corpus.split
    split = {s.id: old_split[s.id] for s in kept if s.id in old_split} or None
    return Corpus(kept, split), removed


def split_by_project(
    corpus: Corpus,
    ratios: tuple[float, float, float] = (0.9, 0.05, 0.05),
    seed: int = 0,
) -> Corpus:
    """Assign whole projects to train/validation/test splits.

    Projects are shuffled with `seed`, stably ordered by descending sample
    count, and assigned greedily to the split with the largest remaining
    sample deficit. Every project lands in exactly one split; with at
    least three projects every split ends up nonempty.
    """
    if len(ratios) != len(SPLIT_NAMES):
        raise CorpusError(f"expected {len(SPLIT_NAMES)} ratios, got {len(ratios)}")
    if any(r <= 0 for r in ratios):
        raise CorpusError("split ratios must all be positive")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise CorpusError(f"split ratios must sum to 1, got {sum(ratios)}")
    projects = corpus.by_project()
    if len(projects) < 3:
        raise CorpusError(f"need at least 3 projects to split, got {len(projects)}")

    order = sorted(projects)
    Random(seed).shuffle(order)
    # stable sort keeps the shuffled order among equal-sized projects
    order.sort(key=lambda pid: -len(projects[pid]))

    total = len(corpus)
    targets = [r * total for r in ratios]
    assigned_counts = [0, 0, 0]
    assignment: dict[str, int] = {}
    for pid in order:
        deficits = [targets[i] - assigned_counts[i] for i in range(3)]
        dest = max(range(3), key=lambda i: (deficits[i], -i))
        assignment[pid] = dest
        assigned_counts[dest] += len(projects[pid])

    # guarantee three nonempty splits: move the smallest project out of the
    # most populated split until none is empty
    members: list[list[str]] = [[], [], []]
    for pid, dest in assignment.items():
        members[dest].append(pid)
    while any(not m for m in members):
        empty = min(i for i in range(3) if not members[i])
        donor = max(range(3), key=lambda i: (len(members[i]), -i))
        pid = min(members[donor], key=lambda p: (len(projects[p]), p))
        members[donor].remove(pid)
        members[empty].append(pid)
        assignment[pid] = empty

    split = {
        sample.id: SPLIT_NAMES[assignment[sample.project_id]]
        for sample in corpus
    }
    return corpus.with_split(split)
