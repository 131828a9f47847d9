import numpy as np
import pytest

from provsentry.feature import (
    SkipGramConfig,
    VocabModel,
    encode_semantic,
    train_skipgram,
    vocab_from_entries,
    vocab_to_entries,
)
from provsentry.graph import build_graph
from provsentry.ingest import Action, CanonicalEvent, EntityType


def cosine(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    return float(a @ b / (na * nb)) if na and nb else 0.0


CLIQUE_A = ["sun", "moon", "star", "comet"]
CLIQUE_B = ["bolt", "nut", "gear", "cog"]


def two_clique_corpus(rng, n_sentences=60):
    corpus = []
    for i in range(n_sentences):
        pool = CLIQUE_A if i % 2 == 0 else CLIQUE_B
        corpus.append(list(rng.choice(pool, size=3, replace=False)))
    return corpus


def test_two_cliques_separate():
    rng = np.random.default_rng(0)
    vm = train_skipgram(two_clique_corpus(rng), SkipGramConfig(dim=12, seed=3))
    within, across = [], []
    for a in CLIQUE_A:
        for b in CLIQUE_A:
            if a < b:
                within.append(vm.cosine(a, b))
        for b in CLIQUE_B:
            across.append(vm.cosine(a, b))
    assert min(within) > max(across)


def test_embedding_shape():
    corpus = [[f"t{i}", f"t{(i + 1) % 10}"] for i in range(10)]
    vm = train_skipgram(corpus, SkipGramConfig(dim=8, epochs=2))
    assert vm.vectors.shape == (10, 8)


def test_oov_is_zero():
    vm = train_skipgram([["a", "b"]], SkipGramConfig(dim=4, epochs=1))
    assert np.array_equal(vm.vector("unseen"), np.zeros(4))


def test_empty_corpus_rejected():
    with pytest.raises(ValueError, match="empty vocabulary"):
        train_skipgram([[], []])


def test_deterministic_under_seed():
    rng = np.random.default_rng(1)
    corpus = two_clique_corpus(rng, 20)
    a = train_skipgram(corpus, SkipGramConfig(dim=6, seed=9, epochs=3))
    b = train_skipgram(corpus, SkipGramConfig(dim=6, seed=9, epochs=3))
    assert a.vectors.tobytes() == b.vectors.tobytes()
    assert a.tokens == b.tokens


class TestEncodeSemantic:
    def make_graph(self):
        paths = ["/bin/vim", "/bin/nano", "/bin/ls", "/bin/cat", "/bin/grep",
                 "/usr/bin/python3", "/usr/bin/perl", "/usr/bin/awk"]
        events = []
        for i, p in enumerate(paths):
            events.append(CanonicalEvent(
                "shell", EntityType.PROCESS, p, EntityType.FILE,
                Action.OPEN, i, {"dst_path": p, "src_name": "/bin/sh"}))
        return build_graph(events)

    def test_mean_of_single_token(self):
        vm = train_skipgram([["x", "y"], ["x", "z"]], SkipGramConfig(dim=4, epochs=2))
        assert np.allclose(vm.encode_tokens(["x"]), vm.vector("x"))

    def test_no_tokens_zero_vector(self):
        vm = train_skipgram([["x", "y"]], SkipGramConfig(dim=4, epochs=1))
        assert np.array_equal(vm.encode_tokens([]), np.zeros(4))

    def test_token_order_invariant(self):
        vm = train_skipgram([["x", "y", "z"]], SkipGramConfig(dim=4, epochs=2))
        assert np.allclose(vm.encode_tokens(["x", "y", "z"]),
                           vm.encode_tokens(["z", "x", "y"]))

    def test_directory_proximity(self):
        # /bin/vim should sit closer to /bin/nano than to /usr/bin/python3
        g = self.make_graph()
        corpus = [n.tokens for n in g.nodes]
        vm = train_skipgram(corpus, SkipGramConfig(dim=16, epochs=40, seed=2))
        alpha = encode_semantic(g, vm)
        idx = {n.entity_id: i for i, n in enumerate(g.nodes)}
        vim, nano, py = (alpha[idx[p]] for p in
                         ("/bin/vim", "/bin/nano", "/usr/bin/python3"))
        assert cosine(vim, nano) > cosine(vim, py)

    def test_alpha_shape_matches_graph(self):
        g = self.make_graph()
        vm = train_skipgram([n.tokens for n in g.nodes], SkipGramConfig(dim=8, epochs=2))
        alpha = encode_semantic(g, vm)
        assert alpha.shape == (g.n_nodes, 8)


def test_vocab_checkpoint_round_trip(tmp_path):
    from provsentry import nn
    vm = train_skipgram([["alpha", "beta"], ["beta", "gamma"]],
                        SkipGramConfig(dim=5, epochs=2, seed=7))
    path = tmp_path / "vocab.sntn"
    nn.save_checkpoint(path, vocab_to_entries(vm))
    back = vocab_from_entries(nn.load_checkpoint(path))
    assert back.tokens == vm.tokens
    assert back.vectors.tobytes() == vm.vectors.tobytes()
    assert back.cfg == vm.cfg
