"""Action reconstruction, benign-only training, threshold calibration, and
behavior classification.

The anomaly score of a behavior is the cross-entropy between the predicted
action distribution and the observed action. The decision threshold is the
benign mean score plus 1.5 standard deviations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .graph import ProvGraph
from .ingest import ACTION_VOCAB, Action
from .intent import (
    BehaviorSequence,
    IntentConfig,
    group_by_length,
    init_intent_params,
    intent_forward,
    step_matrix,
)

THRESHOLD_MULTIPLIER = 1.5


@dataclass
class DetectConfig:
    d_intent: int = 64
    hidden: int = 64
    n_actions: int = len(ACTION_VOCAB)
    seed: int = 0


@dataclass
class BehaviorVerdict:
    src_id: str
    dst_id: str
    action: Action
    ts: int
    re: float
    malicious: bool
    edge_id: int


def init_action_head(cfg: DetectConfig, store: nn.ParamStore | None = None
                     ) -> nn.ParamStore:
    rng = np.random.default_rng(cfg.seed)
    p = store if store is not None else nn.ParamStore()

    def xavier(fan_in, fan_out):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=(fan_in, fan_out))

    p.add("detect/head/w1", xavier(cfg.d_intent, cfg.hidden))
    p.add("detect/head/b1", np.zeros((1, cfg.hidden)))
    p.add("detect/head/w2", xavier(cfg.hidden, cfg.n_actions))
    p.add("detect/head/b2", np.zeros((1, cfg.n_actions)))
    return p


def action_probs(h: nn.Tensor, params: nn.ParamStore) -> nn.Tensor:
    hidden = nn.relu(nn.affine(h, params["detect/head/w1"], params["detect/head/b1"]))
    return nn.softmax_rows(nn.affine(hidden, params["detect/head/w2"],
                                     params["detect/head/b2"]))


def action_distribution(h_e: np.ndarray, params: nn.ParamStore) -> np.ndarray:
    """Probability vector(s) over the action vocabulary for intent rows."""
    h = np.atleast_2d(np.asarray(h_e, dtype=np.float64))
    out = action_probs(nn.constant(h), params).data
    return out[0] if np.asarray(h_e).ndim == 1 else out


def reconstruction_error(p: np.ndarray, action) -> float:
    """RE = -log p[action]; unknown actions score as Other."""
    if isinstance(action, Action):
        idx = int(action)
    else:
        try:
            idx = int(Action(action))
        except ValueError:
            idx = int(Action.OTHER)
    return float(-np.log(np.clip(p[idx], nn.LOG_CLAMP, 1.0)))


def calibrate_threshold(benign_res) -> tuple[float, float, float]:
    """theta = mean + 1.5 * population std. Returns (theta, mean, std)."""
    res = np.asarray(list(benign_res), dtype=np.float64)
    if res.size == 0:
        raise ValueError("calibration needs at least one benign RE")
    mu = float(res.mean())
    sigma = float(res.std())  # population, not sample
    return mu + THRESHOLD_MULTIPLIER * sigma, mu, sigma


# ---------------------------------------------------------------------------
# Training (benign data only; the pipeline guards labels upstream)
# ---------------------------------------------------------------------------


def detection_loss(x: np.ndarray, actions: np.ndarray, params: nn.ParamStore,
                   icfg: IntentConfig) -> nn.Tensor:
    """Mean RE over every step of a (batch, time, in_dim) block."""
    B, T, _ = x.shape
    h = intent_forward(nn.constant(x), params, icfg)
    flat = nn.reshape(h, (B * T, icfg.d_model))
    probs = action_probs(flat, params)
    return nn.nll_onehot(probs, actions.reshape(-1))


def train_detector(seqs: list[BehaviorSequence], node_table: np.ndarray,
                   icfg: IntentConfig, dcfg: DetectConfig,
                   epochs: int = 10, batch_size: int = 256,
                   lr: float = 1e-3, seed: int = 0, walk_sampler=None):
    """Jointly train the intent stack and the action head on benign walks.

    ``walk_sampler(epoch)`` optionally resamples fresh walks every epoch,
    which stops the stack from memorizing coincidental walk contexts for
    steps whose action is genuinely ambiguous. Returns (params, per-epoch
    mean losses)."""
    params = init_intent_params(icfg)
    init_action_head(dcfg, params)
    if not seqs and walk_sampler is None:
        return params, []
    rng = np.random.default_rng(seed)
    losses = []
    for epoch in range(epochs):
        if walk_sampler is not None:
            seqs = walk_sampler(epoch)
        groups = group_by_length(seqs)
        epoch_loss = 0.0
        n_steps = 0
        for length in sorted(groups):
            idx = np.array(groups[length])
            idx = idx[rng.permutation(idx.size)]
            for lo in range(0, idx.size, batch_size):
                batch = [seqs[i] for i in idx[lo:lo + batch_size]]
                x = step_matrix(batch, node_table)
                actions = np.array([[int(st.action) for st in s.steps]
                                    for s in batch])
                params.zero_grad()
                with nn.Tape() as tape:
                    loss = detection_loss(x, actions, params, icfg)
                    value = loss.item()
                    if not np.isfinite(value):
                        raise FloatingPointError("non-finite detection loss")
                    tape.backward(loss)
                nn.adam_step(params, lr=lr)
                epoch_loss += value * len(batch) * length
                n_steps += len(batch) * length
        losses.append(epoch_loss / max(1, n_steps))
    return params, losses


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------


def score_from_embeddings(seqs: list[BehaviorSequence],
                          embeddings: list[np.ndarray],
                          params: nn.ParamStore) -> list[np.ndarray]:
    """Per-step reconstruction errors from precomputed intent embeddings."""
    out = []
    for s, emb in zip(seqs, embeddings):
        probs = action_probs(nn.constant(emb), params).data
        actions = np.array([int(st.action) for st in s.steps])
        picked = np.clip(probs[np.arange(actions.size), actions],
                         nn.LOG_CLAMP, 1.0)
        out.append(-np.log(picked))
    return out


def score_sequences(seqs: list[BehaviorSequence], node_table: np.ndarray,
                    params: nn.ParamStore, icfg: IntentConfig
                    ) -> list[np.ndarray]:
    """Per-step reconstruction errors for each sequence (inference only)."""
    from .intent import intent_embeddings
    return score_from_embeddings(seqs, intent_embeddings(seqs, node_table,
                                                         params, icfg), params)


def aggregate_edge_occurrences(seqs: list[BehaviorSequence],
                               res: list[np.ndarray]
                               ) -> dict[int, tuple[float, int, int]]:
    """Max RE per behavior (edge) with the (sequence, step) occurrence that
    attains it. A strictly-greater update rule keeps the result independent
    of walk order."""
    scores: dict[int, tuple[float, int, int]] = {}
    for si, (s, r) in enumerate(zip(seqs, res)):
        for ti, (st, value) in enumerate(zip(s.steps, r)):
            prev = scores.get(st.edge_id)
            if prev is None or value > prev[0]:
                scores[st.edge_id] = (float(value), si, ti)
    return scores


def aggregate_edge_scores(seqs: list[BehaviorSequence],
                          res: list[np.ndarray]) -> dict[int, float]:
    """Max RE per behavior (edge) across all walk occurrences."""
    return {eid: v[0] for eid, v in
            aggregate_edge_occurrences(seqs, res).items()}


def classify_events(g: ProvGraph, seqs: list[BehaviorSequence],
                    res: list[np.ndarray], theta: float):
    """Per-behavior verdicts (malicious iff RE strictly above theta) plus
    node-level labels (malicious iff any incident behavior is)."""
    scores = aggregate_edge_scores(seqs, res)
    verdicts = []
    node_malicious = np.zeros(g.n_nodes, dtype=bool)
    for eid in sorted(scores):
        e = g.edges[eid]
        re = scores[eid]
        bad = re > theta
        verdicts.append(BehaviorVerdict(
            src_id=g.nodes[e.src].entity_id, dst_id=g.nodes[e.dst].entity_id,
            action=e.action, ts=e.ts, re=re, malicious=bad, edge_id=eid))
        if bad:
            node_malicious[e.src] = True
            node_malicious[e.dst] = True
    return verdicts, node_malicious


def verdicts_to_jsonl(verdicts: list[BehaviorVerdict]) -> str:
    import json
    lines = []
    for v in verdicts:
        lines.append(json.dumps({
            "src": v.src_id, "dst": v.dst_id,
            "action": v.action.name.capitalize(), "ts": v.ts,
            "re": v.re, "label": "malicious" if v.malicious else "benign",
        }, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")


def verdicts_from_jsonl(text: str) -> list[BehaviorVerdict]:
    import json
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        out.append(BehaviorVerdict(
            src_id=obj["src"], dst_id=obj["dst"],
            action=Action[obj["action"].upper()], ts=int(obj["ts"]),
            re=float(obj["re"]), malicious=obj["label"] == "malicious",
            edge_id=-1))
    return out
