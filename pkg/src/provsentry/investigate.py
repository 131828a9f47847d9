"""Cluster flagged behaviors by intent and reduce them to a compact alert
graph for triage.

K-means operates on unique embedding rows with multiplicity weights, so
duplicated behaviors cannot move the fixed point. After clustering,
interchangeable endpoints (same type, same incident super-edge signature)
merge into group nodes, which is what collapses a 50-socket port scan into
a handful of super-edges.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .detect import BehaviorVerdict
from .ingest import Action, EntityType


def behavior_embedding(h_e: np.ndarray, h_src: np.ndarray,
                       h_dst: np.ndarray) -> np.ndarray:
    """Concatenation (intent, source, destination), in that order."""
    return np.concatenate([h_e, h_src, h_dst])


@dataclass
class ClusterModel:
    centroids: np.ndarray        # (k, d)
    labels: np.ndarray           # assignment of the training points
    inertia: float
    inertia_history: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


def _assign(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)  # argmin takes the lowest id on ties


def _inertia(X, w, centroids, labels) -> float:
    diff = X - centroids[labels]
    return float((w * (diff * diff).sum(axis=1)).sum())


def kmeans_fit(X: np.ndarray, k: int, seed: int = 0, max_iter: int = 100
               ) -> ClusterModel:
    """K-means++ then Lloyd iterations to an assignment fixed point.

    Inertia is asserted non-increasing every iteration; empty clusters are
    repaired by splitting the heaviest cluster.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds {n} samples")
    uniq, inverse, counts = np.unique(X, axis=0, return_inverse=True,
                                      return_counts=True)
    w = counts.astype(np.float64)
    nu = uniq.shape[0]
    k_eff = min(k, nu)
    rng = np.random.default_rng(seed)

    # k-means++ over unique points, weighted by multiplicity
    centroids = np.empty((k_eff, X.shape[1]))
    probs = w / w.sum()
    centroids[0] = uniq[rng.choice(nu, p=probs)]
    for j in range(1, k_eff):
        d2 = ((uniq[:, None, :] - centroids[None, :j, :]) ** 2).sum(axis=2).min(axis=1)
        mass = w * d2
        total = mass.sum()
        if total <= 0.0:
            centroids[j] = uniq[rng.choice(nu, p=probs)]
        else:
            centroids[j] = uniq[rng.choice(nu, p=mass / total)]

    labels = _assign(uniq, centroids)
    history = [_inertia(uniq, w, centroids, labels)]
    for _ in range(max_iter):
        for j in range(k_eff):
            mask = labels == j
            if mask.any():
                centroids[j] = (w[mask, None] * uniq[mask]).sum(axis=0) / w[mask].sum()
            else:
                # split the heaviest cluster: take its farthest point
                sizes = np.bincount(labels, weights=w, minlength=k_eff)
                big = int(sizes.argmax())
                members = np.flatnonzero(labels == big)
                d2 = ((uniq[members] - centroids[big]) ** 2).sum(axis=1)
                far = members[int(d2.argmax())]
                centroids[j] = uniq[far]
                labels[far] = j
        new_labels = _assign(uniq, centroids)
        inertia = _inertia(uniq, w, centroids, new_labels)
        assert inertia <= history[-1] + 1e-9, "Lloyd inertia increased"
        history.append(inertia)
        if (new_labels == labels).all():
            labels = new_labels
            break
        labels = new_labels
    return ClusterModel(centroids=centroids, labels=labels[inverse],
                        inertia=history[-1], inertia_history=history)


def assign_cluster(x: np.ndarray, model: ClusterModel) -> int:
    """Nearest centroid by squared distance; ties go to the lowest id."""
    return int(_assign(np.atleast_2d(x), model.centroids)[0])


def silhouette_score(X: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette; singleton clusters and zero spreads score 0."""
    n = X.shape[0]
    uniq_labels = np.unique(labels)
    if len(uniq_labels) < 2:
        return 0.0
    d = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=2))
    scores = np.zeros(n)
    for i in range(n):
        own = labels == labels[i]
        n_own = own.sum() - 1
        if n_own == 0:
            continue
        a = d[i, own].sum() / n_own
        b = min(d[i, labels == lab].mean()
                for lab in uniq_labels if lab != labels[i])
        m = max(a, b)
        scores[i] = 0.0 if m == 0.0 else (b - a) / m
    return float(scores.mean())


def choose_k(X: np.ndarray, k_min: int = 2, k_max: int = 16, seed: int = 0,
             n_init: int = 4, tol: float = 0.05,
             structure_floor: float = 0.5) -> ClusterModel:
    """Scan k, fit best-of-n_init k-means per k, pick max silhouette.

    Near-ties (within ``tol``) resolve to the smallest k, and when no k
    reaches ``structure_floor`` the scan falls back to the smallest k:
    noise partitions earn moderate silhouettes, and a structureless alert
    set should stay compact rather than shatter.
    """
    X = np.asarray(X, dtype=np.float64)
    nu = np.unique(X, axis=0).shape[0]
    k_hi = min(k_max, nu, X.shape[0])
    k_lo = min(k_min, k_hi)
    candidates = []
    for k in range(k_lo, k_hi + 1):
        best = None
        for i in range(n_init):
            m = kmeans_fit(X, k, seed=seed + 1000 * i + k)
            if best is None or m.inertia < best.inertia:
                best = m
        candidates.append((k, best, silhouette_score(X, best.labels)))
    best_sil = max(s for _, _, s in candidates)
    if best_sil < structure_floor:
        return candidates[0][1]
    for k, model, s in candidates:
        if s >= best_sil - tol:
            return model
    return candidates[0][1]


# ---------------------------------------------------------------------------
# Alert graph reduction
# ---------------------------------------------------------------------------


@dataclass
class AlertNode:
    node_id: str
    entity_type: EntityType
    members: list[str]


@dataclass
class SuperEdge:
    src: str
    dst: str
    cluster: int
    count: int
    rep_action: Action
    rep_re: float
    rep_ts: int


@dataclass
class AlertGraph:
    nodes: list[AlertNode]
    edges: list[SuperEdge]


def reduce_alert_graph(flagged: list[BehaviorVerdict], clusters,
                       entity_types: dict[str, EntityType] | None = None
                       ) -> AlertGraph:
    """Group flagged behaviors by (src, dst, cluster), then merge
    interchangeable endpoints into group nodes.

    Entities of the same type whose incident (role, counterpart, cluster,
    action) signatures coincide collapse into one node, so repeated fanout
    like a port scan reduces to one super-edge per cluster. Flagged counts
    are conserved: the member counts sum to the input size.
    """
    clusters = list(clusters)
    if len(clusters) != len(flagged):
        raise ValueError("one cluster id per flagged behavior required")
    entity_types = entity_types or {}

    base: dict[tuple, dict] = {}
    for v, c in zip(flagged, clusters):
        key = (v.src_id, v.dst_id, int(c))
        slot = base.setdefault(key, {"count": 0, "rep": v})
        slot["count"] += 1
        if v.re > slot["rep"].re:
            slot["rep"] = v

    signatures: dict[str, set] = {}
    for (src, dst, c), slot in base.items():
        act = slot["rep"].action
        signatures.setdefault(src, set()).add(("out", dst, c, act))
        signatures.setdefault(dst, set()).add(("in", src, c, act))

    by_sig: dict[tuple, list[str]] = {}
    for ent in sorted(signatures):
        t = entity_types.get(ent, EntityType.OTHER)
        sig = (t, tuple(sorted(signatures[ent])))
        by_sig.setdefault(sig, []).append(ent)

    group_of: dict[str, str] = {}
    nodes: list[AlertNode] = []
    for sig, members in sorted(by_sig.items(), key=lambda kv: kv[1][0]):
        if len(members) == 1:
            gid = members[0]
        else:
            gid = f"{members[0]} (+{len(members) - 1} more)"
        nodes.append(AlertNode(gid, sig[0], members))
        for m in members:
            group_of[m] = gid

    merged: dict[tuple, dict] = {}
    for (src, dst, c), slot in sorted(base.items()):
        key = (group_of[src], group_of[dst], c)
        m = merged.setdefault(key, {"count": 0, "rep": slot["rep"]})
        m["count"] += slot["count"]
        if slot["rep"].re > m["rep"].re:
            m["rep"] = slot["rep"]

    edges = [SuperEdge(src=k[0], dst=k[1], cluster=k[2], count=m["count"],
                       rep_action=m["rep"].action, rep_re=m["rep"].re,
                       rep_ts=m["rep"].ts)
             for k, m in sorted(merged.items())]
    return AlertGraph(nodes=nodes, edges=edges)


_DOT_SHAPES = {
    EntityType.PROCESS: "box",
    EntityType.FILE: "ellipse",
    EntityType.SOCKET: "diamond",
    EntityType.PIPE: "parallelogram",
    EntityType.MEMORY: "hexagon",
    EntityType.OTHER: "oval",
}


def alert_graph_to_dot(ag: AlertGraph) -> str:
    lines = ["digraph alerts {"]
    ids = {}
    for i, node in enumerate(ag.nodes):
        ids[node.node_id] = f"n{i}"
        label = node.node_id.replace('"', "'")
        shape = _DOT_SHAPES[node.entity_type]
        lines.append(f'  n{i} [label="{label}", shape={shape}];')
    for e in ag.edges:
        label = f"{e.cluster}:{e.count}:{e.rep_action.name.capitalize()}"
        lines.append(f'  {ids[e.src]} -> {ids[e.dst]} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def alert_graph_to_json(ag: AlertGraph) -> str:
    obj = {
        "nodes": [{"id": n.node_id, "type": n.entity_type.name.capitalize(),
                   "members": n.members} for n in ag.nodes],
        "super_edges": [{"src": e.src, "dst": e.dst, "cluster": e.cluster,
                         "count": e.count,
                         "action": e.rep_action.name.capitalize(),
                         "re": e.rep_re, "ts": e.rep_ts} for e in ag.edges],
    }
    return json.dumps(obj, indent=2, sort_keys=True)
