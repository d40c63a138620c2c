"""Okapi BM25 top-1 retrieval over the training split.

`Bm25Retriever` follows the fit/predict estimator convention: `fit` builds
an inverted index over sample code tokens, `predict` maps query samples to
their most similar indexed sample. Scores use

    score(q, d) = sum over unique query terms t of
        idf(t) * tf(t, d) * (k1 + 1) / (tf(t, d) + k1 * (1 - b + b * |d| / avgdl))

with idf(t) = ln(1 + (N - df(t) + 0.5) / (df(t) + 0.5)). Ties break toward
the smallest document id, and a query that is itself indexed is excluded
from its own candidate set by default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from math import log
from typing import Iterable, Sequence

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .corpus import Corpus, Sample
from .errors import RetrievalError

INDEX_FORMAT = "hybridsum-bm25/1"


@dataclass(frozen=True)
class RetrievalResult:
    """Top-1 retrieval outcome for one query."""

    query_id: str
    retrieved_id: str
    score: float
    retrieved_comment: tuple[str, ...]


class Bm25Retriever(BaseEstimator):
    """BM25 index over sample code tokens with top-1 retrieval.

    Parameters
    ----------
    k1 : term-frequency saturation (default 1.2)
    b : document-length normalization (default 0.75)

    Fitted attributes (set by `fit` / `load`): `doc_count_`, `avg_doc_len_`,
    `doc_lens_`, `postings_`, `doc_comments_`.
    """

    def __init__(self, k1: float = 1.2, b: float = 0.75):
        self.k1 = k1
        self.b = b

    def fit(self, samples: Iterable[Sample], y=None) -> "Bm25Retriever":
        samples = list(samples)
        if not samples:
            raise RetrievalError("cannot index an empty sample collection")
        doc_lens: dict[str, int] = {}
        postings: dict[str, dict[str, int]] = {}
        comments: dict[str, tuple[str, ...]] = {}
        codes: dict[str, tuple[str, ...]] = {}
        for sample in samples:
            if sample.id in doc_lens:
                raise RetrievalError(f"duplicate document id: {sample.id!r}")
            doc_lens[sample.id] = len(sample.code_tokens)
            comments[sample.id] = tuple(sample.comment_tokens)
            codes[sample.id] = tuple(sample.code_tokens)
            for token in sample.code_tokens:
                postings.setdefault(token, {}).setdefault(sample.id, 0)
                postings[token][sample.id] += 1
        self.doc_lens_ = doc_lens
        self.postings_ = postings
        self.doc_comments_ = comments
        self.doc_codes_ = codes
        self.doc_count_ = len(doc_lens)
        self.avg_doc_len_ = sum(doc_lens.values()) / len(doc_lens)
        return self

    def code_of(self, doc_id: str) -> tuple[str, ...]:
        """Code tokens of an indexed document."""
        self._check_fitted()
        try:
            return self.doc_codes_[doc_id]
        except KeyError:
            raise RetrievalError(f"unknown document id: {doc_id!r}") from None

    def comment_of(self, doc_id: str) -> tuple[str, ...]:
        """Comment tokens of an indexed document."""
        self._check_fitted()
        try:
            return self.doc_comments_[doc_id]
        except KeyError:
            raise RetrievalError(f"unknown document id: {doc_id!r}") from None

    def _check_fitted(self) -> None:
        if not hasattr(self, "postings_"):
            raise NotFittedError("retriever is not fitted; call fit() or load()")

    def _idf(self, term: str) -> float:
        df = len(self.postings_.get(term, ()))
        return log(1.0 + (self.doc_count_ - df + 0.5) / (df + 0.5))

    def _term_weight(self, tf: int, doc_len: int) -> float:
        norm = self.k1 * (1.0 - self.b + self.b * doc_len / self.avg_doc_len_)
        return tf * (self.k1 + 1.0) / (tf + norm)

    def score_one(self, query: Sequence[str], doc_id: str) -> float:
        """BM25 score of one indexed document against a query."""
        self._check_fitted()
        if doc_id not in self.doc_lens_:
            raise RetrievalError(f"unknown document id: {doc_id!r}")
        doc_len = self.doc_lens_[doc_id]
        score = 0.0
        for term in sorted(set(query)):
            tf = self.postings_.get(term, {}).get(doc_id, 0)
            if tf == 0:
                continue
            score += self._idf(term) * self._term_weight(tf, doc_len)
        return score

    def retrieve(
        self, query: Sequence[str], exclude_id: str | None = None
    ) -> tuple[str, float]:
        """Best (document id, score) for a query; ties pick the smallest id.

        A query sharing no term with any document returns the smallest
        eligible id with score 0.
        """
        self._check_fitted()
        scores: dict[str, float] = {}
        for term in sorted(set(query)):
            docs = self.postings_.get(term)
            if not docs:
                continue
            idf = self._idf(term)
            for doc_id, tf in docs.items():
                if doc_id == exclude_id:
                    continue
                scores[doc_id] = scores.get(doc_id, 0.0) + idf * self._term_weight(
                    tf, self.doc_lens_[doc_id]
                )
        best_id, best_score = None, 0.0
        for doc_id in sorted(scores):
            if scores[doc_id] > best_score:
                best_id, best_score = doc_id, scores[doc_id]
        if best_id is None:
            eligible = (d for d in self.doc_lens_ if d != exclude_id)
            best_id = min(eligible, default=None)
            if best_id is None:
                raise RetrievalError("no candidate documents after exclusion")
        return best_id, best_score

    def retrieve_top1(
        self, query: Sample, exclude_self: bool | None = None
    ) -> RetrievalResult:
        """Retrieve the most similar indexed sample for a query sample.

        `exclude_self=None` (the default) excludes the query's own id
        exactly when it is indexed, which is what labeling over the
        training split needs; pass True/False to force either behavior.
        """
        self._check_fitted()
        if exclude_self is None:
            exclude = query.id if query.id in self.doc_lens_ else None
        else:
            exclude = query.id if exclude_self else None
        doc_id, score = self.retrieve(query.code_tokens, exclude_id=exclude)
        return RetrievalResult(
            query_id=query.id,
            retrieved_id=doc_id,
            score=score,
            retrieved_comment=self.doc_comments_[doc_id],
        )

    def predict(self, queries: Iterable[Sample]) -> list[RetrievalResult]:
        return [self.retrieve_top1(q) for q in queries]

    # -- serialization ----------------------------------------------------

    def to_payload(self) -> dict:
        self._check_fitted()
        return {
            "format": INDEX_FORMAT,
            "params": {"k1": self.k1, "b": self.b},
            "doc_count": self.doc_count_,
            "avg_doc_len": self.avg_doc_len_,
            "doc_lens": self.doc_lens_,
            "postings": {
                term: sorted(docs.items()) for term, docs in self.postings_.items()
            },
            "doc_comments": {
                doc_id: list(comment) for doc_id, comment in self.doc_comments_.items()
            },
            "doc_codes": {
                doc_id: list(code) for doc_id, code in self.doc_codes_.items()
            },
        }

    def save(self, path: str | Path) -> None:
        """Serialize the fitted index; round-trips bit-exactly."""
        data = json.dumps(self.to_payload(), sort_keys=True, separators=(",", ":"))
        Path(path).write_text(data + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Bm25Retriever":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise RetrievalError(f"corrupt index file {path}: {exc.msg}") from exc
        if payload.get("format") != INDEX_FORMAT:
            raise RetrievalError(
                f"unsupported index format: {payload.get('format')!r}"
            )
        retriever = cls(**payload["params"])
        retriever.doc_lens_ = {k: int(v) for k, v in payload["doc_lens"].items()}
        retriever.postings_ = {
            term: {doc_id: int(tf) for doc_id, tf in docs}
            for term, docs in payload["postings"].items()
        }
        retriever.doc_comments_ = {
            doc_id: tuple(comment) for doc_id, comment in payload["doc_comments"].items()
        }
        retriever.doc_codes_ = {
            doc_id: tuple(code) for doc_id, code in payload["doc_codes"].items()
        }
        retriever.doc_count_ = int(payload["doc_count"])
        retriever.avg_doc_len_ = float(payload["avg_doc_len"])
        return retriever


def build_index(
    corpus: Corpus, split: str = "train", k1: float = 1.2, b: float = 0.75
) -> Bm25Retriever:
    """Index the given split of a corpus (the training split by default)."""
    samples = corpus.subset(split)
    if not samples:
        raise RetrievalError(f"split {split!r} is empty; nothing to index")
    return Bm25Retriever(k1=k1, b=b).fit(samples)
