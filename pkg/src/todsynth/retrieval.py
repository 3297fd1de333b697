"""Seed corpus ingestion and a small BM25 index over it."""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from todsynth.errors import DuplicateId, EmptyCorpus, TargetNotInCorpus

log = logging.getLogger(__name__)

BM25_K1 = 1.2
BM25_B = 0.75
DEFAULT_K = 3

_PUNCT = re.compile(r"[^\w\s]|_", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase, drop punctuation, split on whitespace."""
    return _PUNCT.sub("", text.lower()).split()


@dataclass(frozen=True)
class SeedDocument:
    doc_id: str
    title: str
    body: str = ""
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.title:
            raise ValueError("document title must be non-empty")

    def field_value(self, name: str) -> str:
        if name in ("doc_id", "id"):
            return self.doc_id
        if name == "title":
            return self.title
        if name == "body":
            return self.body
        key = name.split(".", 1)[1] if name.startswith("metadata.") else name
        return str(self.metadata.get(key, ""))

    def to_dict(self) -> dict:
        return {"id": self.doc_id, "title": self.title, "body": self.body, "metadata": dict(self.metadata)}


@dataclass
class Corpus:
    documents: list[SeedDocument]
    invalid: list[tuple[int, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._by_id = {d.doc_id: d for d in self.documents}

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def __contains__(self, doc_id: object) -> bool:
        return doc_id in self._by_id

    @property
    def size(self) -> int:
        return len(self.documents)

    def get(self, doc_id: str) -> SeedDocument:
        try:
            return self._by_id[doc_id]
        except KeyError:
            raise TargetNotInCorpus(doc_id) from None


def _doc_from_row(row: object) -> SeedDocument:
    if not isinstance(row, dict):
        raise ValueError("line is not a JSON object")
    doc_id, title = row.get("id"), row.get("title")
    if not isinstance(doc_id, str) or not doc_id:
        raise ValueError("missing or non-string 'id'")
    if not isinstance(title, str) or not title:
        raise ValueError("missing or empty 'title'")
    body = row.get("body", "")
    if not isinstance(body, str):
        raise ValueError("'body' must be a string")
    meta = row.get("metadata", {})
    if not isinstance(meta, dict):
        raise ValueError("'metadata' must be an object")
    return SeedDocument(doc_id, title, body, {str(k): str(v) for k, v in meta.items()})


def ingest(path: str | Path) -> Corpus:
    """Read a JSONL corpus.  Bad lines are skipped and listed in ``invalid``."""
    docs: list[SeedDocument] = []
    invalid: list[tuple[int, str]] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                doc = _doc_from_row(json.loads(line))
            except (json.JSONDecodeError, ValueError) as exc:
                invalid.append((lineno, str(exc)))
                continue
            if doc.doc_id in seen:
                raise DuplicateId(doc.doc_id, lineno)
            seen.add(doc.doc_id)
            docs.append(doc)
    corpus = Corpus(docs, invalid)
    for lineno, reason in invalid:
        log.warning("%s:%d skipped: %s", path, lineno, reason)
    if not docs:
        corpus.warnings.append(f"{path} contains no documents")
        log.warning("%s contains no documents", path)
    return corpus


def index_text(doc: SeedDocument) -> list[str]:
    """Tokens indexed for ``doc``; the title is counted twice."""
    parts = [doc.title, doc.title, doc.body, *doc.metadata.values()]
    return tokenize(" ".join(parts))


@dataclass(frozen=True)
class RetrievalResult:
    doc: SeedDocument
    score: float
    rank: int


class SearchIndex:
    """Okapi BM25 over :func:`index_text` tokens.

    idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)); each distinct query term
    contributes once.
    """

    def __init__(self, corpus: Corpus, k1: float = BM25_K1, b: float = BM25_B):
        if len(corpus) == 0:
            raise EmptyCorpus("cannot index an empty corpus")
        self.corpus = corpus
        self.k1 = k1
        self.b = b
        self.doc_len: list[int] = []
        self.postings: dict[str, list[tuple[int, int]]] = {}
        for i, doc in enumerate(corpus.documents):
            toks = index_text(doc)
            self.doc_len.append(len(toks))
            for term, tf in Counter(toks).items():
                self.postings.setdefault(term, []).append((i, tf))
        self.n_docs = len(corpus)
        self.avgdl = sum(self.doc_len) / self.n_docs
        self.idf = {
            t: math.log(1.0 + (self.n_docs - len(p) + 0.5) / (len(p) + 0.5))
            for t, p in self.postings.items()
        }

    def __len__(self) -> int:
        return self.n_docs

    def scores(self, query: str) -> dict[int, float]:
        """BM25 score of every document sharing at least one term with ``query``."""
        out: dict[int, float] = {}
        for term in dict.fromkeys(tokenize(query)):
            idf = self.idf.get(term)
            if idf is None:
                continue
            for i, tf in self.postings[term]:
                norm = self.k1 * (1.0 - self.b + self.b * self.doc_len[i] / self.avgdl)
                out[i] = out.get(i, 0.0) + idf * tf * (self.k1 + 1.0) / (tf + norm)
        return out

    def search(self, query: str, k: int = DEFAULT_K) -> list[RetrievalResult]:
        if k < 1:
            raise ValueError("k must be positive")
        docs = self.corpus.documents
        ranked = sorted(self.scores(query).items(), key=lambda kv: (-kv[1], docs[kv[0]].doc_id))
        return [RetrievalResult(docs[i], s, r) for r, (i, s) in enumerate(ranked[:k], 1)]


def build_index(corpus: Corpus) -> SearchIndex:
    return SearchIndex(corpus)


def search(index: SearchIndex, query: str, k: int = DEFAULT_K) -> list[RetrievalResult]:
    return index.search(query, k)


def retrieve_with_target(index: SearchIndex, query: str, k: int, target: SeedDocument,
                         extra_queries: Iterable[str] = ()) -> list[SeedDocument]:
    """Top-k for ``query`` (and any ``extra_queries``) plus ``target``, deduplicated.

    Order is first appearance across the result lists, target last when it
    was not retrieved.
    """
    if target.doc_id not in index.corpus:
        raise TargetNotInCorpus(target.doc_id)
    out: dict[str, SeedDocument] = {}
    for q in (query, *extra_queries):
        for r in index.search(q, k):
            out.setdefault(r.doc.doc_id, r.doc)
    out.setdefault(target.doc_id, target)
    return list(out.values())


def bundled_corpus_path(name: str) -> Path:
    """``recipes`` or ``products``."""
    return Path(__file__).parent / "data" / "corpora" / f"{name}.jsonl"
