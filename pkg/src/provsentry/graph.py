"""Deduplicated provenance graph with compact CSR adjacency.

Nodes are entities keyed by id; edges are (src, dst, action) interactions.
Events carrying the same triple within the dedup window collapse into one
edge with an incremented multiplicity. After ``seal`` the graph is
immutable and safe to share across threads.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .ingest import Action, CanonicalEvent, EntityType, tokenize_attributes

GRAPH_MAGIC = b"SNPG"
GRAPH_VERSION = 1


class GraphFormatError(ValueError):
    pass


@dataclass
class NodeRecord:
    entity_id: str
    entity_type: EntityType
    tokens: list[str] = field(default_factory=list)
    first_seen: int = 0


@dataclass
class EdgeRecord:
    src: int
    dst: int
    action: Action
    ts: int
    multiplicity: int = 1


class ProvGraph:
    def __init__(self):
        self.nodes: list[NodeRecord] = []
        self.edges: list[EdgeRecord] = []
        self.node_index: dict[str, int] = {}
        self.type_conflicts = 0
        self._sealed = False
        self._out_offsets = None
        self._out_edges = None
        self._in_offsets = None
        self._in_edges = None
        self._triple_index: dict[tuple, list[int]] | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def _get_node(self, entity_id: str, entity_type: EntityType, ts: int) -> int:
        ord_ = self.node_index.get(entity_id)
        if ord_ is None:
            ord_ = len(self.nodes)
            self.node_index[entity_id] = ord_
            self.nodes.append(NodeRecord(entity_id, entity_type, [], ts))
            return ord_
        node = self.nodes[ord_]
        if node.entity_type != entity_type:
            # first sighting wins; later disagreements only counted
            self.type_conflicts += 1
        return ord_

    def _add_tokens(self, ord_: int, tokens: list[str]):
        node = self.nodes[ord_]
        seen = set(node.tokens)
        for tok in tokens:
            if tok not in seen:
                node.tokens.append(tok)
                seen.add(tok)

    def seal(self):
        """Sort edges by source and freeze CSR adjacency."""
        if self._sealed:
            return
        self.edges.sort(key=lambda e: (e.src, e.dst, e.action, e.ts))
        n = len(self.nodes)
        srcs = np.array([e.src for e in self.edges], dtype=np.int64)
        dsts = np.array([e.dst for e in self.edges], dtype=np.int64)
        self._out_offsets = np.zeros(n + 1, dtype=np.int64)
        np.add.at(self._out_offsets, srcs + 1, 1)
        np.cumsum(self._out_offsets, out=self._out_offsets)
        self._out_edges = np.arange(len(self.edges), dtype=np.int64)
        in_order = np.lexsort((srcs, dsts))
        self._in_offsets = np.zeros(n + 1, dtype=np.int64)
        np.add.at(self._in_offsets, dsts + 1, 1)
        np.cumsum(self._in_offsets, out=self._in_offsets)
        self._in_edges = in_order
        self._sealed = True

    def _require_sealed(self):
        if not self._sealed:
            raise RuntimeError("graph must be sealed first")

    def out_edge_ids(self, v: int) -> np.ndarray:
        self._require_sealed()
        return self._out_edges[self._out_offsets[v]:self._out_offsets[v + 1]]

    def in_edge_ids(self, v: int) -> np.ndarray:
        self._require_sealed()
        return self._in_edges[self._in_offsets[v]:self._in_offsets[v + 1]]

    def incident_edge_ids(self, v: int) -> np.ndarray:
        """Out then in edge ids; self-loops appear once per direction list."""
        return np.concatenate([self.out_edge_ids(v), self.in_edge_ids(v)])

    def find_edge(self, src_id: str, dst_id: str, action: Action, ts: int,
                  dedup_window: int = 0) -> int | None:
        """Locate the edge an event collapsed into, or None."""
        self._require_sealed()
        s = self.node_index.get(src_id)
        d = self.node_index.get(dst_id)
        if s is None or d is None:
            return None
        if self._triple_index is None:
            idx: dict[tuple, list[int]] = {}
            for i, e in enumerate(self.edges):
                idx.setdefault((e.src, e.dst, e.action), []).append(i)
            self._triple_index = idx
        for i in self._triple_index.get((s, d, action), ()):
            if abs(ts - self.edges[i].ts) <= dedup_window:
                return i
        return None


def build_graph(events: Iterable[CanonicalEvent], dedup_window: int = 0,
                attr_keys: Iterable[str] | None = None) -> ProvGraph:
    """Stream events into a sealed ProvGraph.

    ``dedup_window`` is in the same unit as event timestamps; the default 0
    collapses exact duplicates only. ``attr_keys`` optionally restricts
    which (unprefixed) attribute keys feed the tokenizer.
    """
    g = ProvGraph()
    # (src, dst, action) -> list of (anchor ts, edge position)
    open_edges: dict[tuple, list[tuple[int, int]]] = {}
    keys = list(attr_keys) if attr_keys is not None else None
    for ev in events:
        s = g._get_node(ev.src_id, ev.src_type, ev.ts)
        d = g._get_node(ev.dst_id, ev.dst_type, ev.ts)
        if ev.attrs:
            src_attrs = {k[4:]: v for k, v in ev.attrs.items() if k.startswith("src_")}
            dst_attrs = {k[4:]: v for k, v in ev.attrs.items() if k.startswith("dst_")}
            if src_attrs:
                g._add_tokens(s, tokenize_attributes(src_attrs, g.nodes[s].entity_type, keys))
            if dst_attrs:
                g._add_tokens(d, tokenize_attributes(dst_attrs, g.nodes[d].entity_type, keys))
        key = (s, d, ev.action)
        slot = None
        for anchor, pos in open_edges.get(key, ()):
            if abs(ev.ts - anchor) <= dedup_window:
                slot = pos
                break
        if slot is None:
            open_edges.setdefault(key, []).append((ev.ts, len(g.edges)))
            g.edges.append(EdgeRecord(s, d, ev.action, ev.ts))
        else:
            g.edges[slot].multiplicity += 1
    g.seal()
    return g


def neighbors(g: ProvGraph, v: int, direction: str = "both") -> list[int]:
    """Sorted, duplicate-free neighbor ordinals of v."""
    if not 0 <= v < g.n_nodes:
        raise IndexError(f"node ordinal {v} out of range for {g.n_nodes} nodes")
    if direction not in ("out", "in", "both"):
        raise ValueError(f"direction must be out, in or both, not {direction!r}")
    seen = set()
    if direction in ("out", "both"):
        for i in g.out_edge_ids(v):
            seen.add(g.edges[i].dst)
    if direction in ("in", "both"):
        for i in g.in_edge_ids(v):
            seen.add(g.edges[i].src)
    return sorted(seen)


def degree_vector(g: ProvGraph, weighted: bool = False) -> np.ndarray:
    """Undirected degrees; self-loops are excluded.

    Unweighted (default): number of distinct neighbors. Weighted: sum of
    edge multiplicities over incident edges.
    """
    deg = np.zeros(g.n_nodes)
    if weighted:
        for e in g.edges:
            if e.src != e.dst:
                deg[e.src] += e.multiplicity
                deg[e.dst] += e.multiplicity
    else:
        for v in range(g.n_nodes):
            deg[v] = sum(1 for u in neighbors(g, v) if u != v)
    return deg


def undirected_pairs(g: ProvGraph, weighted: bool = False) -> dict[tuple[int, int], float]:
    """Distinct undirected node pairs (u < v) with adjacency weights."""
    pairs: dict[tuple[int, int], float] = {}
    for e in g.edges:
        if e.src == e.dst:
            continue
        key = (min(e.src, e.dst), max(e.src, e.dst))
        if weighted:
            pairs[key] = pairs.get(key, 0.0) + e.multiplicity
        else:
            pairs[key] = 1.0
    return pairs


def edge_subgraph(g: ProvGraph, edge_ids) -> ProvGraph:
    """A sealed view with the same node ordinals but only the given edges.

    Node records are shared, so embeddings indexed by ordinal stay valid."""
    sub = ProvGraph()
    sub.nodes = g.nodes
    sub.node_index = g.node_index
    for eid in sorted(set(int(e) for e in edge_ids)):
        e = g.edges[eid]
        sub.edges.append(EdgeRecord(e.src, e.dst, e.action, e.ts, e.multiplicity))
    sub.seal()
    return sub


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def save_graph(g: ProvGraph, path):
    g.seal()
    buf = bytearray()
    buf += GRAPH_MAGIC
    buf += struct.pack("<III", GRAPH_VERSION, g.n_nodes, g.n_edges)
    for node in g.nodes:
        nid = node.entity_id.encode("utf-8")
        buf += struct.pack("<I", len(nid)) + nid
        buf += struct.pack("<Bq", int(node.entity_type), node.first_seen)
        buf += struct.pack("<I", len(node.tokens))
        for tok in node.tokens:
            tb = tok.encode("utf-8")
            buf += struct.pack("<I", len(tb)) + tb
    buf += g._out_offsets.astype("<i8").tobytes()
    for e in g.edges:
        buf += struct.pack("<IBqI", e.dst, int(e.action), e.ts, e.multiplicity)
    Path(path).write_bytes(bytes(buf))


def load_graph(path) -> ProvGraph:
    raw = Path(path).read_bytes()
    if raw[:4] != GRAPH_MAGIC:
        raise GraphFormatError(f"{path}: bad magic {raw[:4]!r}")
    version, n_nodes, n_edges = struct.unpack_from("<III", raw, 4)
    if version != GRAPH_VERSION:
        raise GraphFormatError(f"{path}: unsupported version {version}")
    off = 16
    g = ProvGraph()
    for _ in range(n_nodes):
        (nlen,) = struct.unpack_from("<I", raw, off)
        off += 4
        nid = raw[off:off + nlen].decode("utf-8")
        off += nlen
        t, first_seen = struct.unpack_from("<Bq", raw, off)
        off += 9
        (ntok,) = struct.unpack_from("<I", raw, off)
        off += 4
        tokens = []
        for _ in range(ntok):
            (tlen,) = struct.unpack_from("<I", raw, off)
            off += 4
            tokens.append(raw[off:off + tlen].decode("utf-8"))
            off += tlen
        g.node_index[nid] = len(g.nodes)
        g.nodes.append(NodeRecord(nid, EntityType(t), tokens, first_seen))
    offsets = np.frombuffer(raw, dtype="<i8", count=n_nodes + 1, offset=off)
    off += 8 * (n_nodes + 1)
    srcs = np.repeat(np.arange(n_nodes), np.diff(offsets))
    for i in range(n_edges):
        dst, act, ts, mult = struct.unpack_from("<IBqI", raw, off)
        off += 17
        g.edges.append(EdgeRecord(int(srcs[i]), dst, Action(act), ts, mult))
    if off != len(raw):
        raise GraphFormatError(f"{path}: {len(raw) - off} trailing bytes")
    g.seal()
    return g


def graph_to_json(g: ProvGraph) -> str:
    """Human-readable export for debugging."""
    obj = {
        "nodes": [
            {"id": n.entity_id, "type": n.entity_type.name.capitalize(),
             "tokens": n.tokens, "first_seen": n.first_seen}
            for n in g.nodes
        ],
        "edges": [
            {"src": e.src, "dst": e.dst, "action": e.action.name.capitalize(),
             "ts": e.ts, "multiplicity": e.multiplicity}
            for e in g.edges
        ],
    }
    return json.dumps(obj, indent=2, sort_keys=True)
