"""Okapi BM25 inverted index over fragments."""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from ..errors import EmptyCorpus, FormatVersionError
from .fragments import Fragment

INDEX_FORMAT_VERSION = 1
DEFAULT_K1 = 1.2
DEFAULT_B = 0.75

_TOKEN_RE = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, drop tokens shorter than 2."""
    return [t for t in _TOKEN_RE.findall(text.lower()) if len(t) >= 2]


def query_terms(query: str | Iterable[str]) -> list[str]:
    """Distinct query terms, sorted, from a keyword list or free text."""
    if isinstance(query, str):
        query = [query]
    terms: set[str] = set()
    for kw in query:
        terms.update(tokenize(kw))
    return sorted(terms)


def idf(n_docs: int, doc_freq: int) -> float:
    return math.log((n_docs - doc_freq + 0.5) / (doc_freq + 0.5) + 1.0)


@dataclass(frozen=True)
class Bm25Index:
    postings: dict[str, tuple[tuple[str, int], ...]]
    doc_lengths: dict[str, int]
    avg_doc_length: float
    N: int
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B

    def score_all(self, query: str | Iterable[str]) -> dict[str, float]:
        """BM25 score for every fragment sharing at least one query term."""
        scores: dict[str, float] = {}
        norm = self.avg_doc_length or 1.0
        for term in query_terms(query):
            plist = self.postings.get(term)
            if not plist:
                continue
            w = idf(self.N, len(plist))
            for fid, tf in plist:
                dl = self.doc_lengths[fid]
                denom = tf + self.k1 * (1.0 - self.b + self.b * dl / norm)
                scores[fid] = scores.get(fid, 0.0) + w * tf * (self.k1 + 1.0) / denom
        return scores

    def to_dict(self) -> dict:
        return {
            "format_version": INDEX_FORMAT_VERSION,
            "k1": self.k1,
            "b": self.b,
            "N": self.N,
            "avg_doc_length": self.avg_doc_length,
            "doc_lengths": self.doc_lengths,
            "postings": {t: [list(p) for p in plist] for t, plist in self.postings.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Bm25Index":
        if d.get("format_version") != INDEX_FORMAT_VERSION:
            raise FormatVersionError(f"index format {d.get('format_version')!r}, expected {INDEX_FORMAT_VERSION}")
        return cls(
            postings={t: tuple((fid, int(tf)) for fid, tf in plist) for t, plist in d["postings"].items()},
            doc_lengths={k: int(v) for k, v in d["doc_lengths"].items()},
            avg_doc_length=float(d["avg_doc_length"]),
            N=int(d["N"]),
            k1=float(d["k1"]),
            b=float(d["b"]),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Bm25Index":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_bm25_index(frags: Sequence[Fragment] | Iterable[Fragment], k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> Bm25Index:
    frags = list(frags)
    if not frags:
        raise EmptyCorpus("cannot index an empty fragment list")
    if k1 <= 0 or not 0 <= b <= 1:
        raise ValueError(f"invalid BM25 parameters k1={k1}, b={b}")
    postings: dict[str, list[tuple[str, int]]] = {}
    lengths: dict[str, int] = {}
    for frag in sorted(frags, key=lambda f: f.id):
        toks = tokenize(frag.search_text)
        lengths[frag.id] = len(toks)
        for term, tf in sorted(Counter(toks).items()):
            postings.setdefault(term, []).append((frag.id, tf))
    return Bm25Index(
        postings={t: tuple(p) for t, p in sorted(postings.items())},
        doc_lengths=lengths,
        avg_doc_length=sum(lengths.values()) / len(lengths),
        N=len(lengths),
        k1=k1,
        b=b,
    )


def rank(scores: dict[str, float], k: int) -> list[tuple[str, float]]:
    return sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:k]


def search_bm25(index: Bm25Index, query: str | Iterable[str], k: int = 10) -> list[tuple[str, float]]:
    if k < 1:
        raise ValueError("k must be >= 1")
    return rank(index.score_all(query), k)


def scope_fraction(index: Bm25Index, keywords: Iterable[str]) -> float:
    """Fraction of fragments sharing at least one term with the keywords."""
    if not index.N:
        return 0.0
    hit: set[str] = set()
    for term in query_terms(keywords):
        hit.update(fid for fid, _ in index.postings.get(term, ()))
    return len(hit) / index.N
