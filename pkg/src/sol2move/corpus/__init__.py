"""Concept corpus: documentation fragments, sparse and dense retrieval."""

from .bm25 import Bm25Index, build_bm25_index, scope_fraction, search_bm25, tokenize
from .dense import (
    ContrastiveBatch,
    Encoder,
    TrainingExample,
    contrastive_loss,
    encode,
    load_encoders,
    mine_in_file_hard_negatives,
    save_encoders,
    search_dense,
    sim,
    train_step,
)
from .fragments import DocPage, Fragment, FragmentStore, Origin, build_store, chunk_fragment, segment_html

__all__ = [
    "Bm25Index",
    "ContrastiveBatch",
    "DocPage",
    "Encoder",
    "Fragment",
    "FragmentStore",
    "Origin",
    "TrainingExample",
    "build_bm25_index",
    "build_store",
    "chunk_fragment",
    "contrastive_loss",
    "encode",
    "load_encoders",
    "mine_in_file_hard_negatives",
    "save_encoders",
    "scope_fraction",
    "search_bm25",
    "search_dense",
    "segment_html",
    "sim",
    "tokenize",
    "train_step",
]
