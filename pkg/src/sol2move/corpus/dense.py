"""Dual-encoder retrieval with a trainable bag-of-words linear encoder.

Each encoder maps text to the mean of its in-vocabulary term rows, so an
encoding is ``w(text) @ E`` where ``w`` is the normalised term-count vector.
That linearity makes the contrastive gradient exact and cheap, which is
what lets the training loop be checked against finite differences.
"""

from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from ..errors import DimensionMismatch, FormatVersionError, InsufficientCorpus
from .bm25 import Bm25Index, build_bm25_index
from .fragments import Fragment, FragmentStore

ENCODER_FORMAT_VERSION = 1
DEFAULT_DENSE_K = 100

_TERM_RE = re.compile(r"[^\W_]+")


def terms(text: str) -> list[str]:
    return _TERM_RE.findall(text.lower())


class TextEncoder(Protocol):
    def encode(self, text: str) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class Encoder:
    vocab: dict[str, int]
    embedding: np.ndarray

    def __post_init__(self):
        if self.embedding.ndim != 2 or self.embedding.shape[0] != len(self.vocab):
            raise DimensionMismatch(f"embedding shape {self.embedding.shape} does not match vocab size {len(self.vocab)}")
        if not np.all(np.isfinite(self.embedding)):
            raise ValueError("embedding contains non-finite entries")

    @property
    def d(self) -> int:
        return self.embedding.shape[1]

    def weights(self, text: str) -> np.ndarray:
        w = np.zeros(len(self.vocab))
        idx = [self.vocab[t] for t in terms(text) if t in self.vocab]
        if idx:
            np.add.at(w, idx, 1.0)
            w /= len(idx)
        return w

    def encode(self, text: str) -> np.ndarray:
        return self.weights(text) @ self.embedding

    def with_embedding(self, embedding: np.ndarray) -> "Encoder":
        return Encoder(self.vocab, embedding)

    @classmethod
    def zeros(cls, vocab: Iterable[str], d: int) -> "Encoder":
        v = {t: i for i, t in enumerate(dict.fromkeys(vocab))}
        return cls(v, np.zeros((len(v), d)))

    @classmethod
    def random(cls, vocab: Iterable[str], d: int, seed: int = 0, scale: float = 1.0) -> "Encoder":
        v = {t: i for i, t in enumerate(dict.fromkeys(vocab))}
        rng = np.random.default_rng(seed)
        return cls(v, rng.normal(0.0, scale, size=(len(v), d)))

    def to_dict(self) -> dict:
        terms_by_row = sorted(self.vocab, key=self.vocab.__getitem__)
        return {
            "format_version": ENCODER_FORMAT_VERSION,
            "vocab": terms_by_row,
            "embedding": self.embedding.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Encoder":
        if d.get("format_version") != ENCODER_FORMAT_VERSION:
            raise FormatVersionError(f"encoder format {d.get('format_version')!r}, expected {ENCODER_FORMAT_VERSION}")
        vocab = {t: i for i, t in enumerate(d["vocab"])}
        emb = np.asarray(d["embedding"], dtype=float).reshape(len(vocab), -1)
        return cls(vocab, emb)


def save_encoders(path: str | Path, enc_q: Encoder, enc_c: Encoder) -> None:
    payload = {"format_version": ENCODER_FORMAT_VERSION, "query": enc_q.to_dict(), "context": enc_c.to_dict()}
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_encoders(path: str | Path) -> tuple[Encoder, Encoder]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format_version") != ENCODER_FORMAT_VERSION:
        raise FormatVersionError(f"encoder file format {payload.get('format_version')!r}")
    return Encoder.from_dict(payload["query"]), Encoder.from_dict(payload["context"])


def encode(enc: TextEncoder, text: str) -> np.ndarray:
    return enc.encode(text)


def sim(vq: np.ndarray, vc: np.ndarray) -> float:
    vq, vc = np.asarray(vq, dtype=float), np.asarray(vc, dtype=float)
    if vq.shape != vc.shape:
        raise DimensionMismatch(f"cannot compare vectors of shape {vq.shape} and {vc.shape}")
    return float(vq @ vc)


@dataclass(frozen=True)
class ContrastiveBatch:
    query: str
    positive: str
    negatives: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "negatives", tuple(self.negatives))
        if not self.negatives:
            raise ValueError("a contrastive batch needs at least one negative")
        if self.positive in self.negatives:
            raise ValueError("positive context appears among the negatives")

    @property
    def contexts(self) -> tuple[str, ...]:
        return (self.positive, *self.negatives)


def similarities(batch: ContrastiveBatch, enc_q: TextEncoder, enc_c: TextEncoder) -> np.ndarray:
    vq = enc_q.encode(batch.query)
    return np.array([sim(vq, enc_c.encode(c)) for c in batch.contexts])


def _loss_from_sims(s: np.ndarray) -> float:
    top = float(np.max(s))
    return top + math.log(float(np.sum(np.exp(s - top)))) - float(s[0])


def contrastive_loss(batch: ContrastiveBatch, enc_q: TextEncoder, enc_c: TextEncoder) -> float:
    """Negative log-softmax of the positive among positive + negatives."""
    return _loss_from_sims(similarities(batch, enc_q, enc_c))


def loss_and_gradients(batch: ContrastiveBatch, enc_q: Encoder, enc_c: Encoder) -> tuple[float, np.ndarray, np.ndarray]:
    wq = enc_q.weights(batch.query)
    wc = np.stack([enc_c.weights(c) for c in batch.contexts])  # (1+m, Vc)
    vq = wq @ enc_q.embedding
    vc = wc @ enc_c.embedding  # (1+m, d)
    s = vc @ vq
    p = np.exp(s - s.max())
    p /= p.sum()
    g = p.copy()
    g[0] -= 1.0  # dL/ds
    grad_vq = g @ vc
    grad_vc = np.outer(g, vq)
    grad_q = np.outer(wq, grad_vq)
    grad_c = wc.T @ grad_vc
    return _loss_from_sims(s), grad_q, grad_c


def train_step(batch: ContrastiveBatch, enc_q: Encoder, enc_c: Encoder, lr: float) -> tuple[Encoder, Encoder, float]:
    """One gradient-descent step on both embedding matrices; returns the pre-step loss."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    loss, gq, gc = loss_and_gradients(batch, enc_q, enc_c)
    return (
        enc_q.with_embedding(enc_q.embedding - lr * gq),
        enc_c.with_embedding(enc_c.embedding - lr * gc),
        loss,
    )


def search_dense(
    enc_q: TextEncoder,
    enc_c: TextEncoder,
    store: FragmentStore,
    query: str,
    k: int = DEFAULT_DENSE_K,
) -> list[tuple[str, float]]:
    """Exhaustive top-k by inner product, ties broken by ascending fragment id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    vq = enc_q.encode(query)
    scored = [(f.id, sim(vq, enc_c.encode(f.search_text))) for f in store]
    scored.sort(key=lambda kv: (-kv[1], kv[0]))
    return scored[:k]


# --------------------------------------------------------------------------
# negatives


def mine_in_file_hard_negatives(
    prompt,
    store: FragmentStore,
    m: int,
    positive_ids: Iterable[str] = (),
    index: Bm25Index | None = None,
) -> list[str]:
    """Texts of the `m` highest-BM25 fragments for the prompt that are not positives.

    `prompt` is a TaskPrompt (its rendered text is the query) or plain text.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    positives = set(positive_ids)
    candidates = [f for f in store if f.id not in positives]
    if len(candidates) < m:
        raise InsufficientCorpus(f"need {m} non-positive fragments, store has {len(candidates)}")
    query = getattr(prompt, "rendered", prompt)
    index = index or build_bm25_index(list(store))
    scores = index.score_all(query)
    candidates.sort(key=lambda f: (-scores.get(f.id, 0.0), f.id))
    return [f.search_text for f in candidates[:m]]


# --------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainingExample:
    query: str
    positive_id: str


def make_separable_corpus(n: int = 20, fillers: int = 8, seed: int = 0) -> tuple[FragmentStore, list[TrainingExample]]:
    """Synthetic corpus in which each query shares one unique term with its positive."""
    rng = random.Random(seed)
    filler_terms = [f"filler{j}" for j in range(fillers)]
    frags, examples = [], []
    for i in range(n):
        text = " ".join([f"concept{i}"] + rng.sample(filler_terms, 3))
        frag = Fragment.make("synthetic", (i,), "", text)
        frags.append(frag)
        examples.append(TrainingExample(" ".join([f"concept{i}"] + rng.sample(filler_terms, 2)), frag.id))
    return FragmentStore(frags), examples


def corpus_vocab(store: FragmentStore, examples: Sequence[TrainingExample]) -> list[str]:
    vocab = set()
    for f in store:
        vocab.update(terms(f.search_text))
    for ex in examples:
        vocab.update(terms(ex.query))
    return sorted(vocab)


def dense_accuracy_at_1(enc_q: TextEncoder, enc_c: TextEncoder, store: FragmentStore, examples: Sequence[TrainingExample]) -> float:
    if not examples:
        return 0.0
    hits = sum(search_dense(enc_q, enc_c, store, ex.query, k=1)[0][0] == ex.positive_id for ex in examples)
    return hits / len(examples)


def train_retriever(
    enc_q: Encoder,
    enc_c: Encoder,
    store: FragmentStore,
    examples: Sequence[TrainingExample],
    steps: int = 200,
    lr: float = 1.0,
    m: int = 8,
    negatives: str = "random",
    seed: int = 0,
    on_step: Callable[[int, float], None] | None = None,
) -> tuple[Encoder, Encoder, list[float]]:
    """Cycle through the examples for `steps` updates; returns encoders and per-step loss."""
    if negatives not in ("random", "hard"):
        raise ValueError(f"unknown negative strategy {negatives!r}")
    if not examples and steps:
        raise ValueError("no training examples")
    rng = random.Random(seed)
    index = build_bm25_index(list(store)) if negatives == "hard" else None
    losses: list[float] = []
    for step in range(steps):
        ex = examples[step % len(examples)]
        positive = store[ex.positive_id]
        if index is not None:
            negs = mine_in_file_hard_negatives(ex.query, store, m, {ex.positive_id}, index)
        else:
            pool = [f for f in store if f.id != ex.positive_id]
            if len(pool) < m:
                raise InsufficientCorpus(f"need {m} negatives, store has {len(pool)}")
            negs = [f.search_text for f in rng.sample(pool, m)]
        batch = ContrastiveBatch(ex.query, positive.search_text, tuple(negs))
        enc_q, enc_c, loss = train_step(batch, enc_q, enc_c, lr)
        losses.append(loss)
        if on_step:
            on_step(step, loss)
    return enc_q, enc_c, losses
