import numpy as np

from provsentry.graph import EdgeRecord, ProvGraph
from provsentry.ingest import Action, EntityType


def graph_from_edges(edge_list, n_nodes=None, n_isolated=0, types=None):
    """Small-graph helper: edge_list holds (src, dst[, action[, ts]]) tuples
    with integer node labels. ``n_nodes`` pre-registers labels 0..n-1 so the
    ordinal space is dense even when some labels never appear in an edge."""
    g = ProvGraph()
    labels = []
    if n_nodes is not None:
        labels += list(range(n_nodes))
    for item in edge_list:
        labels += [item[0], item[1]]
    for lab in dict.fromkeys(labels):
        t = (types or {}).get(lab, EntityType.PROCESS)
        g._get_node(f"n{lab}", t, 0)
    for item in edge_list:
        s, d = g.node_index[f"n{item[0]}"], g.node_index[f"n{item[1]}"]
        a = item[2] if len(item) > 2 else Action.READ
        ts = item[3] if len(item) > 3 else 0
        g.edges.append(EdgeRecord(s, d, a, ts))
    for i in range(n_isolated):
        g._get_node(f"iso{i}", EntityType.OTHER, 0)
    g.seal()
    return g


def random_graph(rng: np.random.Generator, n_nodes: int, n_edges: int):
    edges = []
    for _ in range(n_edges):
        s = int(rng.integers(0, n_nodes))
        d = int(rng.integers(0, n_nodes))
        if s == d:
            d = (d + 1) % n_nodes
        edges.append((s, d, Action.READ, len(edges)))
    return graph_from_edges(edges, n_nodes=n_nodes)
