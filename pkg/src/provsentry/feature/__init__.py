"""Semantic (skip-gram) and positional (Laplacian spectral) node features."""

from .laplacian import (
    EigenError,
    jacobi_eigh,
    laplacian_degrees,
    normalized_laplacian,
    positional_encoding,
    sign_normalize,
    smallest_k_eigenvectors,
)
from .skipgram import (
    SkipGramConfig,
    VocabModel,
    encode_semantic,
    node_corpus,
    train_skipgram,
    vocab_from_entries,
    vocab_to_entries,
)

__all__ = [
    "EigenError", "SkipGramConfig", "VocabModel", "encode_semantic",
    "jacobi_eigh", "laplacian_degrees", "node_corpus", "normalized_laplacian",
    "positional_encoding", "sign_normalize", "smallest_k_eigenvectors",
    "train_skipgram", "vocab_from_entries", "vocab_to_entries",
]
