"""Behavior sequences from random walks, encoded by a bidirectional linear
state-space stack into per-step intent embeddings.

Walks move over undirected adjacency but record each traversed edge with
its original direction and action. Step representations concatenate the
pretrained source and destination node embeddings; the observed action is
deliberately withheld so it stays a pure prediction target downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .graph import ProvGraph
from .ingest import Action


@dataclass
class WalkStep:
    src: int
    dst: int
    action: Action
    ts: int
    edge_id: int


@dataclass
class BehaviorSequence:
    start: int
    steps: list[WalkStep] = field(default_factory=list)

    def __len__(self):
        return len(self.steps)


@dataclass
class IntentConfig:
    d_model: int = 64
    state_dim: int = 16
    layers: int = 2
    in_dim: int = 128  # 2 x node embedding dim
    ffn_mult: int = 2
    a_init: tuple = (0.5, 0.95)
    a_max: float = 0.999
    gated: bool = False
    seed: int = 0


# ---------------------------------------------------------------------------
# Random walks
# ---------------------------------------------------------------------------


def _walk_from(g: ProvGraph, start: int, max_len: int, rng) -> BehaviorSequence | None:
    seq = BehaviorSequence(start)
    cur = start
    for _ in range(max_len):
        incident = g.incident_edge_ids(cur)
        if incident.size == 0:
            break
        eid = int(incident[rng.integers(0, incident.size)])
        e = g.edges[eid]
        seq.steps.append(WalkStep(e.src, e.dst, e.action, e.ts, eid))
        cur = e.dst if e.src == cur else e.src
    return seq if seq.steps else None


def sample_walks(g: ProvGraph, walks_per_node: int = 5, max_len: int = 30,
                 seed: int = 0, ensure_edge_cover: bool = False
                 ) -> list[BehaviorSequence]:
    """Uniform random walks over incident edges, ``walks_per_node`` from
    every node. Per-node generators are derived as seed XOR ordinal, so
    sampling is deterministic and shard-friendly.

    ``ensure_edge_cover`` appends one walk starting along each edge that no
    sampled walk visited, so every behavior can be scored.
    """
    out: list[BehaviorSequence] = []
    for v in range(g.n_nodes):
        rng = np.random.default_rng(seed ^ v)
        for _ in range(walks_per_node):
            seq = _walk_from(g, v, max_len, rng)
            if seq is not None:
                out.append(seq)
    if ensure_edge_cover:
        covered = {step.edge_id for seq in out for step in seq.steps}
        for eid in range(g.n_edges):
            if eid in covered:
                continue
            e = g.edges[eid]
            rng = np.random.default_rng(seed ^ (g.n_nodes + eid))
            seq = BehaviorSequence(e.src, [WalkStep(e.src, e.dst, e.action, e.ts, eid)])
            rest = _walk_from(g, e.dst, max_len - 1, rng)
            if rest is not None:
                seq.steps.extend(rest.steps)
            out.append(seq)
    return out


def step_matrix(seqs: list[BehaviorSequence], node_table: np.ndarray) -> np.ndarray:
    """(batch, time, 2d) array of [h_src ; h_dst] step representations.
    All sequences must share one length."""
    if not seqs:
        return np.zeros((0, 0, 2 * node_table.shape[1]))
    T = len(seqs[0])
    if any(len(s) != T for s in seqs):
        raise ValueError("step_matrix needs equal-length sequences")
    srcs = np.array([[st.src for st in s.steps] for s in seqs])
    dsts = np.array([[st.dst for st in s.steps] for s in seqs])
    return np.concatenate([node_table[srcs], node_table[dsts]], axis=2)


def group_by_length(seqs: list[BehaviorSequence]) -> dict[int, list[int]]:
    groups: dict[int, list[int]] = {}
    for i, s in enumerate(seqs):
        groups.setdefault(len(s), []).append(i)
    return groups


# ---------------------------------------------------------------------------
# Linear state-space scan (plain numpy; oracle and inference path)
# ---------------------------------------------------------------------------


def _check_scan_params(a, b, c, d, channels):
    a, b, c = (np.atleast_2d(np.asarray(x, dtype=np.float64)) for x in (a, b, c))
    d = np.asarray(d, dtype=np.float64).reshape(-1)
    m = a.shape[1]
    if a.shape[0] != channels or b.shape != a.shape or c.shape != a.shape \
            or d.shape != (channels,):
        raise ValueError(f"scan params inconsistent: a{a.shape} b{b.shape} "
                         f"c{c.shape} d{d.shape} for {channels} channels")
    if a.size and np.abs(a).max() >= 1.0:
        raise ValueError(f"unstable state matrix: max |a| = {np.abs(a).max()}")
    return a, b, c, d, m


def ssm_scan(x: np.ndarray, a, b, c, d, method: str = "naive") -> np.ndarray:
    """s_t = a*s_{t-1} + b*x_t ; y_t = sum_m(c*s_t) + d*x_t, with s_0 = 0.

    x is (T, channels); a, b, c are (channels, m) and d is (channels,).
    ``method="assoc"`` evaluates the same recurrence with a doubling
    (Hillis-Steele) associative scan and matches the loop to 1e-10.
    """
    x = np.asarray(x, dtype=np.float64)
    T, C = x.shape
    a, b, c, d, m = _check_scan_params(a, b, c, d, C)
    if method == "naive":
        s = np.zeros((C, m))
        y = np.empty((T, C))
        for t in range(T):
            s = a * s + b * x[t][:, None]
            y[t] = (c * s).sum(axis=1) + d * x[t]
        return y
    if method == "assoc":
        A = np.broadcast_to(a, (T, C, m)).copy()
        U = b[None] * x[:, :, None]
        off = 1
        while off < T:
            A_new = A.copy()
            U_new = U.copy()
            U_new[off:] = U[off:] + A[off:] * U[:-off]
            A_new[off:] = A[off:] * A[:-off]
            A, U = A_new, U_new
            off *= 2
        return (c[None] * U).sum(axis=2) + d[None] * x
    raise ValueError(f"unknown scan method {method!r}")


# ---------------------------------------------------------------------------
# Bi-directional stack on the autodiff tape
# ---------------------------------------------------------------------------


def init_intent_params(cfg: IntentConfig) -> nn.ParamStore:
    rng = np.random.default_rng(cfg.seed)
    p = nn.ParamStore()
    C, m = cfg.d_model, cfg.state_dim

    def xavier(fan_in, fan_out):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=(fan_in, fan_out))

    p.add("intent/in_proj/w", xavier(cfg.in_dim, C))
    p.add("intent/in_proj/b", np.zeros((1, C)))
    for layer in range(cfg.layers):
        base = f"intent/layer{layer}"
        for dir_ in ("fwd", "bwd"):
            a0 = rng.uniform(*cfg.a_init, size=(C, m))
            p.add(f"{base}/{dir_}/a_raw", np.arctanh(a0 / cfg.a_max))
            p.add(f"{base}/{dir_}/b", rng.normal(scale=1.0 / np.sqrt(m), size=(C, m)))
            p.add(f"{base}/{dir_}/c", rng.normal(scale=1.0 / np.sqrt(m), size=(C, m)))
            p.add(f"{base}/{dir_}/d", np.ones((C, 1)))
        if cfg.gated:
            p.add(f"{base}/gate_in/w", xavier(C, C))
            p.add(f"{base}/gate_in/b", np.zeros((1, C)))
            p.add(f"{base}/gate_out/w", xavier(C, C))
            p.add(f"{base}/gate_out/b", np.zeros((1, C)))
        p.add(f"{base}/mix/w", xavier(C, C))
        p.add(f"{base}/mix/b", np.zeros((1, C)))
        p.add(f"{base}/norm/gain", np.ones((1, C)))
        p.add(f"{base}/norm/bias", np.zeros((1, C)))
        hidden = cfg.ffn_mult * C
        p.add(f"{base}/ffn/w1", xavier(C, hidden))
        p.add(f"{base}/ffn/b1", np.zeros((1, hidden)))
        p.add(f"{base}/ffn/w2", xavier(hidden, C))
        p.add(f"{base}/ffn/b2", np.zeros((1, C)))
    return p


def _branch_scan(x: nn.Tensor, params: nn.ParamStore, base: str,
                 a_max: float) -> nn.Tensor:
    a = nn.scale(nn.tanh(params[f"{base}/a_raw"]), a_max)
    return nn.diag_ssm_scan(x, a, params[f"{base}/b"], params[f"{base}/c"],
                            params[f"{base}/d"])


def bimamba_layer(x: nn.Tensor, params: nn.ParamStore, layer: int,
                  cfg: IntentConfig) -> nn.Tensor:
    """Forward scan plus reversal-wrapped backward scan, summed, then a
    residual combiner: u = Norm(x + affine(sum)); out = u + FFN(u)."""
    base = f"intent/layer{layer}"
    xin = x
    if cfg.gated:
        gate = nn.sigmoid(nn.affine(x, params[f"{base}/gate_in/w"],
                                    params[f"{base}/gate_in/b"]))
        xin = nn.mul(x, gate)
    fwd = _branch_scan(xin, params, f"{base}/fwd", cfg.a_max)
    bwd = nn.reverse_time(_branch_scan(nn.reverse_time(xin), params,
                                       f"{base}/bwd", cfg.a_max))
    summed = nn.add(fwd, bwd)
    if cfg.gated:
        out_gate = nn.sigmoid(nn.affine(x, params[f"{base}/gate_out/w"],
                                        params[f"{base}/gate_out/b"]))
        summed = nn.mul(summed, out_gate)
    mixed = nn.affine(summed, params[f"{base}/mix/w"], params[f"{base}/mix/b"])
    u = nn.layer_norm(nn.add(x, mixed), params[f"{base}/norm/gain"],
                      params[f"{base}/norm/bias"])
    ffn = nn.affine(nn.relu(nn.affine(u, params[f"{base}/ffn/w1"],
                                      params[f"{base}/ffn/b1"])),
                    params[f"{base}/ffn/w2"], params[f"{base}/ffn/b2"])
    return nn.add(u, ffn)


def intent_forward(x: nn.Tensor, params: nn.ParamStore,
                   cfg: IntentConfig) -> nn.Tensor:
    """(batch, time, in_dim) step representations -> (batch, time, d_model)."""
    h = nn.affine(x, params["intent/in_proj/w"], params["intent/in_proj/b"])
    for layer in range(cfg.layers):
        h = bimamba_layer(h, params, layer, cfg)
    return h


def intent_embeddings(seqs: list[BehaviorSequence], node_table: np.ndarray,
                      params: nn.ParamStore, cfg: IntentConfig
                      ) -> list[np.ndarray]:
    """Per-step intent embeddings for every sequence (inference only).
    Sequences are batched by length; order follows the input list."""
    out: list[np.ndarray | None] = [None] * len(seqs)
    for length, idx in group_by_length(seqs).items():
        x = step_matrix([seqs[i] for i in idx], node_table)
        y = intent_forward(nn.constant(x), params, cfg).data
        for row, i in enumerate(idx):
            out[i] = y[row]
    return out  # type: ignore[return-value]
