"""Graph-transformer encoder pre-trained by node-type reconstruction.

Semantic and spectral features fuse into initial embeddings, multi-head
attention layers (neighborhood scope by default, global behind a flag)
mix them, and a type head with weighted cross-entropy drives training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .graph import ProvGraph, neighbors
from .ingest import EntityType

NEG_MASK = -1e30


@dataclass
class EncoderConfig:
    d: int = 64
    heads: int = 4
    layers: int = 2
    d_sem: int = 32
    k_pos: int = 8
    ffn_mult: int = 2
    scope: str = "neighborhood"  # "neighborhood" or "global"
    mask_type_tokens: bool = True
    n_types: int = len(EntityType)
    seed: int = 0

    def __post_init__(self):
        if self.d % self.heads:
            raise ValueError(f"model dim {self.d} not divisible by {self.heads} heads")
        if self.scope not in ("neighborhood", "global"):
            raise ValueError(f"unknown attention scope {self.scope!r}")

    @property
    def d_head(self) -> int:
        return self.d // self.heads


def _xavier(rng, fan_in, fan_out):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


def init_encoder_params(cfg: EncoderConfig) -> nn.ParamStore:
    rng = np.random.default_rng(cfg.seed)
    p = nn.ParamStore()
    d, dk = cfg.d, cfg.d_head
    p.add("pretrain/fuse/w_sem", _xavier(rng, cfg.d_sem, d))
    p.add("pretrain/fuse/b_sem", np.zeros((1, d)))
    p.add("pretrain/fuse/w_pos", _xavier(rng, cfg.k_pos, d))
    p.add("pretrain/fuse/b_pos", np.zeros((1, d)))
    for layer in range(cfg.layers):
        base = f"pretrain/layer{layer}"
        for h in range(cfg.heads):
            p.add(f"{base}/head{h}/wq", _xavier(rng, d, dk))
            p.add(f"{base}/head{h}/wk", _xavier(rng, d, dk))
            p.add(f"{base}/head{h}/wv", _xavier(rng, d, dk))
        p.add(f"{base}/proj", _xavier(rng, d, d))
        p.add(f"{base}/norm1/gain", np.ones((1, d)))
        p.add(f"{base}/norm1/bias", np.zeros((1, d)))
        p.add(f"{base}/norm2/gain", np.ones((1, d)))
        p.add(f"{base}/norm2/bias", np.zeros((1, d)))
        hidden = cfg.ffn_mult * d
        p.add(f"{base}/ffn/w1", _xavier(rng, d, hidden))
        p.add(f"{base}/ffn/b1", np.zeros((1, hidden)))
        p.add(f"{base}/ffn/w2", _xavier(rng, hidden, d))
        p.add(f"{base}/ffn/b2", np.zeros((1, d)))
    p.add("pretrain/head/w1", _xavier(rng, d, d))
    p.add("pretrain/head/b1", np.zeros((1, d)))
    p.add("pretrain/head/w2", _xavier(rng, d, cfg.n_types))
    p.add("pretrain/head/b2", np.zeros((1, cfg.n_types)))
    return p


def init_node_embedding(alpha: nn.Tensor, beta: nn.Tensor,
                        params: nn.ParamStore) -> nn.Tensor:
    """h0 = relu((alpha W_sem + b_sem) + (beta W_pos + b_pos))."""
    sem = nn.affine(alpha, params["pretrain/fuse/w_sem"], params["pretrain/fuse/b_sem"])
    pos = nn.affine(beta, params["pretrain/fuse/w_pos"], params["pretrain/fuse/b_pos"])
    return nn.relu(nn.add(sem, pos))


def attention_mask(g: ProvGraph, scope: str) -> np.ndarray:
    """Additive mask: 0 on allowed (query, key) pairs, large negative off.

    Neighborhood scope allows undirected neighbors plus self; global scope
    allows everything.
    """
    n = g.n_nodes
    if scope == "global":
        return np.zeros((n, n))
    mask = np.full((n, n), NEG_MASK)
    np.fill_diagonal(mask, 0.0)
    for e in g.edges:
        mask[e.src, e.dst] = 0.0
        mask[e.dst, e.src] = 0.0
    return mask


def attention_layer(h: nn.Tensor, g: ProvGraph, params: nn.ParamStore,
                    layer: int, cfg: EncoderConfig, scope: str | None = None,
                    impl: str = "dense", return_weights: bool = False):
    """Multi-head attention; heads concatenated then projected.

    ``impl="dense"`` computes masked dense attention; ``impl="sparse"``
    gathers each node's neighborhood explicitly. The two agree to 1e-12.
    """
    scope = scope or cfg.scope
    base = f"pretrain/layer{layer}"
    inv_sqrt = 1.0 / np.sqrt(cfg.d_head)
    heads = []
    weights_out = []
    if impl == "dense":
        mask = nn.constant(attention_mask(g, scope))
        for hd in range(cfg.heads):
            q = nn.affine(h, params[f"{base}/head{hd}/wq"])
            k = nn.affine(h, params[f"{base}/head{hd}/wk"])
            v = nn.affine(h, params[f"{base}/head{hd}/wv"])
            scores = nn.add(nn.scale(nn.matmul(q, nn.transpose(k)), inv_sqrt), mask)
            w = nn.softmax_rows(scores)
            if return_weights:
                weights_out.append(w.data.copy())
            heads.append(nn.matmul(w, v))
    elif impl == "sparse":
        neigh = [sorted(set(neighbors(g, i)) | {i}) if scope == "neighborhood"
                 else list(range(g.n_nodes)) for i in range(g.n_nodes)]
        for hd in range(cfg.heads):
            q = nn.affine(h, params[f"{base}/head{hd}/wq"])
            k = nn.affine(h, params[f"{base}/head{hd}/wk"])
            v = nn.affine(h, params[f"{base}/head{hd}/wv"])
            rows = []
            wrows = []
            for i in range(g.n_nodes):
                ids = neigh[i]
                qi = nn.take_rows(q, [i])
                ki = nn.take_rows(k, ids)
                scores = nn.scale(nn.matmul(qi, nn.transpose(ki)), inv_sqrt)
                w = nn.softmax_rows(scores)
                if return_weights:
                    full = np.zeros(g.n_nodes)
                    full[ids] = w.data[0]
                    wrows.append(full)
                rows.append(nn.matmul(w, nn.take_rows(v, ids)))
            heads.append(nn.concat_rows(rows))
            if return_weights:
                weights_out.append(np.array(wrows))
    else:
        raise ValueError(f"unknown attention impl {impl!r}")
    out = nn.matmul(nn.concat_cols(heads), params[f"{base}/proj"])
    if return_weights:
        return out, weights_out
    return out


def layer_update(h: nn.Tensor, h_hat: nn.Tensor, params: nn.ParamStore,
                 layer: int) -> nn.Tensor:
    """h' = Norm(Norm(h + h_hat) + FFN(h_hat)); the FFN reads h_hat."""
    base = f"pretrain/layer{layer}"
    inner = nn.layer_norm(nn.add(h, h_hat),
                          params[f"{base}/norm1/gain"], params[f"{base}/norm1/bias"])
    ffn = nn.affine(nn.relu(nn.affine(h_hat, params[f"{base}/ffn/w1"],
                                      params[f"{base}/ffn/b1"])),
                    params[f"{base}/ffn/w2"], params[f"{base}/ffn/b2"])
    return nn.layer_norm(nn.add(inner, ffn),
                         params[f"{base}/norm2/gain"], params[f"{base}/norm2/bias"])


def encode_nodes(g: ProvGraph, alpha: np.ndarray, beta: np.ndarray,
                 params: nn.ParamStore, cfg: EncoderConfig,
                 impl: str = "dense") -> nn.Tensor:
    """Full encoder: fuse features, then run every attention layer."""
    h = init_node_embedding(nn.constant(alpha), nn.constant(beta), params)
    for layer in range(cfg.layers):
        h_hat = attention_layer(h, g, params, layer, cfg, impl=impl)
        h = layer_update(h, h_hat, params, layer)
    return h


def type_logits(h: nn.Tensor, params: nn.ParamStore) -> nn.Tensor:
    """Per-node probability rows over entity-type classes."""
    hidden = nn.relu(nn.affine(h, params["pretrain/head/w1"], params["pretrain/head/b1"]))
    return nn.softmax_rows(nn.affine(hidden, params["pretrain/head/w2"],
                                     params["pretrain/head/b2"]))


def node_type_targets(g: ProvGraph, n_types: int = len(EntityType)) -> np.ndarray:
    onehot = np.zeros((g.n_nodes, n_types))
    for i, node in enumerate(g.nodes):
        onehot[i, int(node.entity_type)] = 1.0
    return onehot


def class_weights(targets: np.ndarray, clip=(0.1, 10.0)) -> np.ndarray:
    """w_i = total / (present classes * count_i), clipped; absent classes
    land on the upper clip."""
    counts = targets.sum(axis=0)
    total = counts.sum()
    c = int((counts > 0).sum())
    w = np.full(counts.shape, clip[1])
    pos = counts > 0
    w[pos] = total / (c * counts[pos])
    return np.clip(w, clip[0], clip[1])


def pretrain_loss(g: ProvGraph, alpha, beta, params, cfg,
                  targets: np.ndarray, weights: np.ndarray,
                  impl: str = "dense", node_mask=None) -> nn.Tensor:
    """Type-reconstruction loss; ``node_mask`` restricts the supervised rows
    (the full graph still feeds the encoder as input)."""
    h = encode_nodes(g, alpha, beta, params, cfg, impl=impl)
    probs = type_logits(h, params)
    if node_mask is not None:
        idx = np.asarray(node_mask, dtype=np.int64)
        return nn.weighted_cross_entropy(nn.take_rows(probs, idx),
                                         targets[idx], weights)
    return nn.weighted_cross_entropy(probs, targets, weights)


def pretrain_epoch(g: ProvGraph, alpha, beta, params, cfg,
                   targets, weights, lr: float = 1e-3, node_mask=None) -> float:
    """One full-graph forward/backward/Adam step; returns the loss."""
    params.zero_grad()
    with nn.Tape() as tape:
        loss = pretrain_loss(g, alpha, beta, params, cfg, targets, weights,
                             node_mask=node_mask)
        value = loss.item()
        if not np.isfinite(value):
            raise FloatingPointError(f"non-finite pretrain loss: {value}")
        tape.backward(loss)
    nn.adam_step(params, lr=lr)
    return value


def train_encoder(g: ProvGraph, alpha, beta, cfg: EncoderConfig,
                  epochs: int = 50, lr: float = 1e-3, node_mask=None):
    """Pre-train from scratch; returns (params, per-epoch losses)."""
    params = init_encoder_params(cfg)
    targets = node_type_targets(g, cfg.n_types)
    masked = targets if node_mask is None else targets[np.asarray(node_mask)]
    weights = class_weights(masked)
    losses = [pretrain_epoch(g, alpha, beta, params, cfg, targets, weights,
                             lr, node_mask=node_mask)
              for _ in range(epochs)]
    return params, losses


def node_table(g: ProvGraph, alpha, beta, params, cfg) -> np.ndarray:
    """Inference-only final node representations."""
    return encode_nodes(g, alpha, beta, params, cfg).data
