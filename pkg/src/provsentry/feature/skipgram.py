"""Skip-gram with negative sampling over node attribute tokens.

Deterministic under a fixed seed; out-of-vocabulary tokens map to the zero
vector at encode time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..graph import ProvGraph
from ..ingest import TYPE_TOKENS


@dataclass
class SkipGramConfig:
    dim: int = 32
    window: int = 4
    negatives: int = 5
    epochs: int = 20
    lr: float = 0.05
    min_lr: float = 1e-4
    seed: int = 1


class VocabModel:
    """Trained token embeddings with a stable token ordering."""

    def __init__(self, tokens: list[str], vectors: np.ndarray, cfg: SkipGramConfig):
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        self.vectors = np.asarray(vectors, dtype=np.float64)
        self.cfg = cfg

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def vector(self, token: str) -> np.ndarray:
        i = self.index.get(token)
        if i is None:
            return np.zeros(self.dim)
        return self.vectors[i]

    def encode_tokens(self, tokens: list[str]) -> np.ndarray:
        """Mean of token vectors; OOV tokens contribute zeros. No tokens
        at all yield the zero vector."""
        if not tokens:
            return np.zeros(self.dim)
        acc = np.zeros(self.dim)
        for t in tokens:
            acc += self.vector(t)
        return acc / len(tokens)

    def cosine(self, a: str, b: str) -> float:
        va, vb = self.vector(a), self.vector(b)
        na, nb = np.linalg.norm(va), np.linalg.norm(vb)
        if na == 0.0 or nb == 0.0:
            return 0.0
        return float(va @ vb / (na * nb))


def train_skipgram(corpus: list[list[str]], cfg: SkipGramConfig | None = None
                   ) -> VocabModel:
    """Train skip-gram embeddings with negative sampling on token lists."""
    cfg = cfg or SkipGramConfig()
    counts: dict[str, int] = {}
    for sent in corpus:
        for tok in sent:
            counts[tok] = counts.get(tok, 0) + 1
    if not counts:
        raise ValueError("empty vocabulary: corpus has no tokens")
    vocab = sorted(counts, key=lambda t: (-counts[t], t))
    index = {t: i for i, t in enumerate(vocab)}
    V = len(vocab)

    rng = np.random.default_rng(cfg.seed)
    w_in = (rng.random((V, cfg.dim)) - 0.5) / cfg.dim
    w_out = np.zeros((V, cfg.dim))

    # unigram^0.75 negative-sampling table as a cumulative distribution
    freq = np.array([counts[t] for t in vocab], dtype=np.float64) ** 0.75
    cum = np.cumsum(freq / freq.sum())

    pairs: list[tuple[int, int]] = []
    for sent in corpus:
        ids = [index[t] for t in sent]
        for i, center in enumerate(ids):
            lo = max(0, i - cfg.window)
            hi = min(len(ids), i + cfg.window + 1)
            for j in range(lo, hi):
                if j != i and ids[j] != center:
                    pairs.append((center, ids[j]))
    if not pairs:
        return VocabModel(vocab, w_in, cfg)

    total = cfg.epochs * len(pairs)
    step = 0
    for _ in range(cfg.epochs):
        for center, ctx in pairs:
            lr = max(cfg.min_lr, cfg.lr * (1.0 - step / total))
            step += 1
            u = w_in[center]
            grad_u = np.zeros(cfg.dim)
            negs = np.searchsorted(cum, rng.random(cfg.negatives))
            for tgt, label in [(ctx, 1.0)] + [(int(t), 0.0) for t in negs]:
                if label == 0.0 and tgt == ctx:
                    continue
                v = w_out[tgt]
                z = 1.0 / (1.0 + np.exp(-(u @ v)))
                gr = (z - label) * lr
                grad_u += gr * v
                w_out[tgt] = v - gr * u
            w_in[center] = u - grad_u
    return VocabModel(vocab, w_in, cfg)


def node_corpus(g: ProvGraph, drop_type_tokens: bool = False) -> list[list[str]]:
    """One token sentence per node, in node-ordinal order."""
    out = []
    for node in g.nodes:
        toks = node.tokens
        if drop_type_tokens:
            toks = [t for t in toks if t not in TYPE_TOKENS]
        out.append(list(toks))
    return out


def encode_semantic(g: ProvGraph, vm: VocabModel,
                    drop_type_tokens: bool = False) -> np.ndarray:
    """Per-node semantic vectors: mean of the node's token embeddings."""
    rows = [vm.encode_tokens(sent) for sent in node_corpus(g, drop_type_tokens)]
    return np.array(rows) if rows else np.zeros((0, vm.dim))


# ---------------------------------------------------------------------------
# Checkpoint persistence (token ids ride in the entry names)
# ---------------------------------------------------------------------------


def vocab_to_entries(vm: VocabModel, prefix: str = "skipgram/") -> dict[str, np.ndarray]:
    entries = {
        prefix + "vectors": vm.vectors,
        prefix + "cfg": np.array([[vm.cfg.dim, vm.cfg.window, vm.cfg.negatives,
                                   vm.cfg.epochs, vm.cfg.lr, vm.cfg.min_lr,
                                   vm.cfg.seed]], dtype=np.float64),
    }
    for i, tok in enumerate(vm.tokens):
        entries[f"{prefix}token/{i}/{tok}"] = np.array([[float(i)]])
    return entries


def vocab_from_entries(entries: dict[str, np.ndarray],
                       prefix: str = "skipgram/") -> VocabModel:
    vectors = entries[prefix + "vectors"]
    c = entries[prefix + "cfg"][0]
    cfg = SkipGramConfig(dim=int(c[0]), window=int(c[1]), negatives=int(c[2]),
                         epochs=int(c[3]), lr=float(c[4]), min_lr=float(c[5]),
                         seed=int(c[6]))
    tokens: list[str] = [""] * vectors.shape[0]
    head = prefix + "token/"
    for name in entries:
        if name.startswith(head):
            rest = name[len(head):]
            i, tok = rest.split("/", 1)
            tokens[int(i)] = tok
    return VocabModel(tokens, vectors, cfg)
