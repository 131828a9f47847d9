"""Stage orchestration: each stage reads and writes the documented file
formats, so the chain synth -> ingest -> feature -> pretrain -> train ->
detect -> investigate -> eval can run as separate invocations or in one
process via ``run_all``.

The train stage guards the benign-only contract: given the labeled event
file it rejects any malicious-labeled input.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import nn
from .detect import (
    DetectConfig,
    aggregate_edge_occurrences,
    calibrate_threshold,
    classify_events,
    init_action_head,
    score_from_embeddings,
    train_detector,
    verdicts_from_jsonl,
    verdicts_to_jsonl,
)
from .feature import (
    SkipGramConfig,
    encode_semantic,
    node_corpus,
    positional_encoding,
    train_skipgram,
    vocab_from_entries,
    vocab_to_entries,
)
from .graph import ProvGraph, build_graph, edge_subgraph, load_graph, save_graph
from .ingest import ACTION_VOCAB, Action, EntityType, ParseStats, parse_jsonl, parse_streamspot_tsv
from .intent import IntentConfig, init_intent_params, intent_embeddings, sample_walks
from .investigate import behavior_embedding, choose_k, reduce_alert_graph, alert_graph_to_dot, alert_graph_to_json
from .metrics import compute_metrics, format_table
from .pretrain import EncoderConfig, init_encoder_params, node_table, train_encoder
from .runconfig import RunConfig
from .synth import (
    LABEL_KEY,
    MALICIOUS,
    PHASE_KEY,
    TRAIN,
    ScenarioConfig,
    events_to_jsonl,
    generate_scenarios,
    inject_mimicry,
)


class PipelineError(RuntimeError):
    pass


def _require(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise PipelineError(f"missing input file: {p}")
    return p


def _read_events(path):
    stats = ParseStats()
    events = list(parse_jsonl(_require(path).read_text().splitlines(), stats))
    return events, stats


# ---------------------------------------------------------------------------
# Config <-> checkpoint entry codecs
# ---------------------------------------------------------------------------

_SCOPES = ("neighborhood", "global")


def _encoder_cfg_entries(cfg: EncoderConfig) -> dict:
    return {"pretrain/cfg": np.array([[cfg.d, cfg.heads, cfg.layers, cfg.d_sem,
                                       cfg.k_pos, cfg.ffn_mult,
                                       _SCOPES.index(cfg.scope),
                                       int(cfg.mask_type_tokens),
                                       cfg.n_types, cfg.seed]], dtype=np.float64)}


def _encoder_cfg_from(entries) -> EncoderConfig:
    v = entries["pretrain/cfg"][0]
    return EncoderConfig(d=int(v[0]), heads=int(v[1]), layers=int(v[2]),
                         d_sem=int(v[3]), k_pos=int(v[4]), ffn_mult=int(v[5]),
                         scope=_SCOPES[int(v[6])], mask_type_tokens=bool(v[7]),
                         n_types=int(v[8]), seed=int(v[9]))


def _intent_cfg_entries(cfg: IntentConfig) -> dict:
    return {"intent/cfg": np.array([[cfg.d_model, cfg.state_dim, cfg.layers,
                                     cfg.in_dim, cfg.ffn_mult, cfg.a_max,
                                     int(cfg.gated), cfg.seed]], dtype=np.float64)}


def _intent_cfg_from(entries) -> IntentConfig:
    v = entries["intent/cfg"][0]
    return IntentConfig(d_model=int(v[0]), state_dim=int(v[1]), layers=int(v[2]),
                        in_dim=int(v[3]), ffn_mult=int(v[4]), a_max=float(v[5]),
                        gated=bool(v[6]), seed=int(v[7]))


def _detect_cfg_entries(cfg: DetectConfig) -> dict:
    return {"detect/cfg": np.array([[cfg.d_intent, cfg.hidden, cfg.n_actions,
                                     cfg.seed]], dtype=np.float64)}


def _detect_cfg_from(entries) -> DetectConfig:
    v = entries["detect/cfg"][0]
    return DetectConfig(d_intent=int(v[0]), hidden=int(v[1]),
                        n_actions=int(v[2]), seed=int(v[3]))


def _walk_cfg_entries(rcfg: RunConfig) -> dict:
    return {"run/walks": np.array([[rcfg.walks_per_node, rcfg.walk_len,
                                    rcfg.seed, rcfg.laplacian_weighted]],
                                  dtype=np.float64)}


def _action_vocab_entries() -> dict:
    return {f"detect/action/{int(a)}/{a.name.capitalize()}":
            np.array([[float(int(a))]]) for a in ACTION_VOCAB}


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def run_synth(rcfg: RunConfig, outdir) -> dict:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    scfg = ScenarioConfig(benign_events=rcfg.benign_events,
                          attack_chains=rcfg.attack_chains,
                          chain_len=rcfg.chain_len,
                          train_frac=rcfg.train_frac, seed=rcfg.seed)
    events = generate_scenarios(scfg)
    if rcfg.mimicry_events:
        events = inject_mimicry(events, rcfg.mimicry_events,
                                seed=rcfg.seed + 101)
    events_path = outdir / "events.jsonl"
    events_path.write_text(events_to_jsonl(events))
    rcfg.save(outdir / "runconfig.txt")
    n_train = sum(1 for ev in events if ev.attrs.get(PHASE_KEY) == TRAIN)
    return {"events": events_path, "n_events": len(events),
            "n_train": n_train, "n_test": len(events) - n_train}


def run_ingest(input_path, out_path, fmt: str = "jsonl",
               dedup_window: int = 0) -> ParseStats:
    input_path = _require(input_path)
    stats = ParseStats()
    lines = input_path.read_text().splitlines()
    if fmt == "jsonl":
        g = build_graph(parse_jsonl(lines, stats), dedup_window=dedup_window)
        save_graph(g, out_path)
    elif fmt == "streamspot":
        by_graph: dict[int, list] = {}
        for gid, ev in parse_streamspot_tsv(lines, stats):
            by_graph.setdefault(gid, []).append(ev)
        if len(by_graph) == 1:
            only = next(iter(by_graph.values()))
            save_graph(build_graph(only, dedup_window=dedup_window), out_path)
        else:
            base = Path(out_path)
            for gid in sorted(by_graph):
                g = build_graph(by_graph[gid], dedup_window=dedup_window)
                save_graph(g, base.with_suffix(f".g{gid}{base.suffix}"))
    else:
        raise PipelineError(f"unknown ingest format {fmt!r}")
    return stats


def run_feature(graph_path, out_path, rcfg: RunConfig) -> dict:
    g = load_graph(_require(graph_path))
    sg_cfg = SkipGramConfig(dim=rcfg.d_sem, window=rcfg.skipgram_window,
                            negatives=rcfg.skipgram_negatives,
                            epochs=rcfg.skipgram_epochs, lr=rcfg.skipgram_lr,
                            seed=rcfg.seed + 11)
    vm = train_skipgram(node_corpus(g), sg_cfg)
    entries = vocab_to_entries(vm)
    entries["feature/cfg"] = np.array([[rcfg.k_pos, rcfg.d_sem,
                                        int(rcfg.laplacian_weighted),
                                        int(rcfg.mask_type_tokens)]],
                                      dtype=np.float64)
    nn.save_checkpoint(out_path, entries)
    return {"vocab_size": len(vm.tokens)}


def _load_features(entries):
    vm = vocab_from_entries(entries)
    v = entries["feature/cfg"][0]
    return vm, {"k_pos": int(v[0]), "d_sem": int(v[1]),
                "weighted": bool(v[2]), "mask_type_tokens": bool(v[3])}


def _compute_features(g: ProvGraph, vm, fcfg):
    alpha = encode_semantic(g, vm, drop_type_tokens=fcfg["mask_type_tokens"])
    beta, eigvals = positional_encoding(g, fcfg["k_pos"],
                                        weighted=fcfg["weighted"])
    # unit-norm eigenvector entries scale like 1/sqrt(n); rescale so the
    # positional features keep one magnitude across graphs of different size
    beta = beta * np.sqrt(g.n_nodes)
    return alpha, beta, eigvals


def _train_phase_mask(g: ProvGraph, events) -> np.ndarray:
    """Ordinals of nodes first seen in train-phase events."""
    keep = []
    seen = set()
    for ev in events:
        if ev.attrs.get(PHASE_KEY, TRAIN) != TRAIN:
            continue
        for ent in (ev.src_id, ev.dst_id):
            ordinal = g.node_index.get(ent)
            if ordinal is not None and ordinal not in seen:
                seen.add(ordinal)
                keep.append(ordinal)
    return np.array(sorted(keep), dtype=np.int64)


def run_pretrain(graph_path, features_path, out_path, rcfg: RunConfig,
                 epochs: int | None = None, seed: int | None = None,
                 events_path=None) -> dict:
    g = load_graph(_require(graph_path))
    feat_entries = nn.load_checkpoint(_require(features_path))
    vm, fcfg = _load_features(feat_entries)
    alpha, beta, _ = _compute_features(g, vm, fcfg)
    node_mask = None
    if events_path is not None:
        events, _ = _read_events(events_path)
        node_mask = _train_phase_mask(g, events)
    ecfg = EncoderConfig(d=rcfg.d_model, heads=rcfg.heads,
                         layers=rcfg.encoder_layers, d_sem=fcfg["d_sem"],
                         k_pos=fcfg["k_pos"], scope=rcfg.attention_scope,
                         mask_type_tokens=fcfg["mask_type_tokens"],
                         seed=rcfg.seed if seed is None else seed)
    params, losses = train_encoder(g, alpha, beta, ecfg,
                                   epochs=epochs or rcfg.pretrain_epochs,
                                   lr=rcfg.pretrain_lr, node_mask=node_mask)
    entries = dict(feat_entries)
    entries.update(params.arrays())
    entries.update(_encoder_cfg_entries(ecfg))
    nn.save_checkpoint(out_path, entries)
    return {"losses": losses}


def assert_benign_only(events):
    bad = sum(1 for ev in events if ev.attrs.get(LABEL_KEY) == MALICIOUS)
    if bad:
        raise PipelineError(f"training input carries {bad} attack-labeled "
                            f"events; training uses benign data only")


def _restore_encoder(entries):
    ecfg = _encoder_cfg_from(entries)
    params = init_encoder_params(ecfg)
    params.load_arrays(entries)
    return ecfg, params


def _training_subgraph(g: ProvGraph, events, dedup_window: int) -> ProvGraph:
    """The benign train-phase edge subset (same node ordinals); rejects
    attack-labeled input."""
    train_events = [ev for ev in events
                    if ev.attrs.get(PHASE_KEY, TRAIN) == TRAIN]
    assert_benign_only(train_events)
    ids = set()
    for ev in train_events:
        eid = g.find_edge(ev.src_id, ev.dst_id, ev.action, ev.ts, dedup_window)
        if eid is not None:
            ids.add(eid)
    return edge_subgraph(g, ids)


def run_train(graph_path, pretrain_path, out_path, rcfg: RunConfig,
              epochs: int | None = None, seed: int | None = None,
              events_path=None) -> dict:
    g = load_graph(_require(graph_path))
    entries = nn.load_checkpoint(_require(pretrain_path))
    vm, fcfg = _load_features(entries)
    alpha, beta, _ = _compute_features(g, vm, fcfg)
    ecfg, enc_params = _restore_encoder(entries)
    table = node_table(g, alpha, beta, enc_params, ecfg)

    if events_path is not None:
        events, _ = _read_events(events_path)
        g_train = _training_subgraph(g, events, rcfg.dedup_window)
    else:
        g_train = g  # caller vouches the whole graph is benign

    icfg = IntentConfig(d_model=rcfg.d_intent, state_dim=rcfg.state_dim,
                        layers=rcfg.intent_layers, in_dim=2 * ecfg.d,
                        gated=rcfg.gated_scan,
                        seed=rcfg.seed if seed is None else seed)
    dcfg = DetectConfig(d_intent=icfg.d_model, hidden=icfg.d_model,
                        n_actions=len(ACTION_VOCAB), seed=icfg.seed + 1)

    def walk_sampler(epoch: int):
        return sample_walks(g_train, rcfg.walks_per_node, rcfg.walk_len,
                            seed=rcfg.seed + 7919 * (epoch + 1))

    params, losses = train_detector([], table, icfg, dcfg,
                                    epochs=epochs or rcfg.detector_epochs,
                                    batch_size=rcfg.batch_size,
                                    lr=rcfg.detector_lr, seed=icfg.seed + 2,
                                    walk_sampler=walk_sampler)

    # calibrate on fresh benign walks with the same statistic that
    # classification thresholds: the per-behavior max across occurrences
    seqs = sample_walks(g_train, rcfg.walks_per_node, rcfg.walk_len,
                        seed=rcfg.seed, ensure_edge_cover=True)
    embs = intent_embeddings(seqs, table, params, icfg)
    res = score_from_embeddings(seqs, embs, params)
    from .detect import aggregate_edge_scores
    behavior_res = aggregate_edge_scores(seqs, res)
    theta, mu, sigma = calibrate_threshold(list(behavior_res.values()))

    model = dict(entries)
    model.update(params.arrays())
    model.update(_intent_cfg_entries(icfg))
    model.update(_detect_cfg_entries(dcfg))
    model.update(_walk_cfg_entries(rcfg))
    model.update(_action_vocab_entries())
    model["detect/theta"] = np.array([[theta]])
    model["detect/calibration"] = np.array([[mu, sigma]])
    nn.save_checkpoint(out_path, model)
    return {"losses": losses, "theta": theta, "mu": mu, "sigma": sigma,
            "n_sequences": len(seqs)}


def _restore_detector(entries):
    icfg = _intent_cfg_from(entries)
    dcfg = _detect_cfg_from(entries)
    params = init_intent_params(icfg)
    init_action_head(dcfg, params)
    params.load_arrays(entries)
    return icfg, dcfg, params


def run_detect(model_path, graph_path, out_path) -> dict:
    entries = nn.load_checkpoint(_require(model_path))
    g = load_graph(_require(graph_path))
    vm, fcfg = _load_features(entries)
    alpha, beta, _ = _compute_features(g, vm, fcfg)
    ecfg, enc_params = _restore_encoder(entries)
    table = node_table(g, alpha, beta, enc_params, ecfg)
    icfg, dcfg, params = _restore_detector(entries)
    walks = entries["run/walks"][0]
    theta = float(entries["detect/theta"][0, 0])

    seqs = sample_walks(g, int(walks[0]), int(walks[1]), seed=int(walks[2]),
                        ensure_edge_cover=True)
    embs = intent_embeddings(seqs, table, params, icfg)
    res = score_from_embeddings(seqs, embs, params)
    verdicts, node_malicious = classify_events(g, seqs, res, theta)
    Path(out_path).write_text(verdicts_to_jsonl(verdicts))

    # companion file: representative behavior embeddings of flagged edges
    occ = aggregate_edge_occurrences(seqs, res)
    flagged = [v for v in verdicts if v.malicious]
    vecs, src_types, dst_types, edge_ids = [], [], [], []
    for v in flagged:
        _, si, ti = occ[v.edge_id]
        st = seqs[si].steps[ti]
        vecs.append(behavior_embedding(embs[si][ti], table[st.src], table[st.dst]))
        src_types.append(int(g.nodes[st.src].entity_type))
        dst_types.append(int(g.nodes[st.dst].entity_type))
        edge_ids.append(v.edge_id)
    emb_entries = {
        "emb/vectors": (np.array(vecs) if vecs
                        else np.zeros((0, icfg.d_model + 2 * ecfg.d))),
        "emb/src_types": np.array([src_types], dtype=np.float64).reshape(1, -1),
        "emb/dst_types": np.array([dst_types], dtype=np.float64).reshape(1, -1),
        "emb/edge_ids": np.array([edge_ids], dtype=np.float64).reshape(1, -1),
    }
    nn.save_checkpoint(str(out_path) + ".emb.sntn", emb_entries)
    return {"n_behaviors": len(verdicts), "n_flagged": len(flagged),
            "theta": theta, "n_nodes_flagged": int(node_malicious.sum())}


def run_investigate(verdicts_path, model_path, out_base, rcfg: RunConfig | None = None) -> dict:
    rcfg = rcfg or RunConfig()
    _require(model_path)
    verdicts = verdicts_from_jsonl(_require(verdicts_path).read_text())
    flagged = [v for v in verdicts if v.malicious]
    emb_path = _require(str(verdicts_path) + ".emb.sntn")
    emb = nn.load_checkpoint(emb_path)
    X = emb["emb/vectors"]
    if X.shape[0] != len(flagged):
        raise PipelineError(f"embedding file has {X.shape[0]} rows for "
                            f"{len(flagged)} flagged behaviors")
    base = Path(out_base)
    if base.suffix in (".dot", ".json"):
        base = base.with_suffix("")
    if flagged:
        types: dict[str, EntityType] = {}
        for i, v in enumerate(flagged):
            types[v.src_id] = EntityType(int(emb["emb/src_types"][0, i]))
            types[v.dst_id] = EntityType(int(emb["emb/dst_types"][0, i]))
        model = choose_k(X, k_min=rcfg.cluster_k_min,
                         k_max=rcfg.cluster_k_max, seed=rcfg.seed)
        ag = reduce_alert_graph(flagged, model.labels, types)
        k = model.k
    else:
        from .investigate import AlertGraph
        ag = AlertGraph(nodes=[], edges=[])
        k = 0
    dot_path = base.with_suffix(".dot")
    json_path = base.with_suffix(".json")
    dot_path.write_text(alert_graph_to_dot(ag))
    json_path.write_text(alert_graph_to_json(ag))
    return {"k": k, "n_super_edges": len(ag.edges), "n_flagged": len(flagged),
            "dot": dot_path, "json": json_path}


def run_eval(verdicts_path, truth_path, graph_path, out_path,
             dedup_window: int = 0) -> dict:
    """Score verdicts against ground truth over the evaluation population:
    edges carrying at least one test-phase event (train-phase behaviors are
    the calibration material, not the exam)."""
    truth_events, _ = _read_events(truth_path)
    g = load_graph(_require(graph_path))
    verdicts = verdicts_from_jsonl(_require(verdicts_path).read_text())

    edge_truth: dict[int, bool] = {}
    in_population: dict[int, bool] = {}
    for ev in truth_events:
        eid = g.find_edge(ev.src_id, ev.dst_id, ev.action, ev.ts, dedup_window)
        if eid is None:
            raise PipelineError(f"truth event has no graph edge: "
                                f"{ev.src_id} -> {ev.dst_id} {ev.action.name} @{ev.ts}")
        edge_truth[eid] = edge_truth.get(eid, False) or \
            ev.attrs.get(LABEL_KEY) == MALICIOUS
        test_phase = ev.attrs.get(PHASE_KEY, "test") != TRAIN
        in_population[eid] = in_population.get(eid, False) or test_phase

    edge_pred: dict[int, bool] = {}
    for v in verdicts:
        eid = g.find_edge(v.src_id, v.dst_id, v.action, v.ts, dedup_window)
        if eid is None or eid not in edge_truth:
            raise PipelineError(f"verdict matches no ground-truth behavior: "
                                f"{v.src_id} -> {v.dst_id} {v.action.name} @{v.ts}")
        edge_pred[eid] = edge_pred.get(eid, False) or v.malicious
    population = {e for e, test in in_population.items() if test}
    missing = population - set(edge_pred)
    if missing:
        raise PipelineError(f"{len(missing)} behaviors were never scored")
    edge_truth = {e: edge_truth[e] for e in population}

    eids = sorted(edge_truth)
    behavior = compute_metrics([edge_pred[e] for e in eids],
                               [edge_truth[e] for e in eids])

    node_truth: dict[int, bool] = {}
    node_pred: dict[int, bool] = {}
    for e in eids:
        edge = g.edges[e]
        for v in (edge.src, edge.dst):
            node_truth[v] = node_truth.get(v, False) or edge_truth[e]
            node_pred[v] = node_pred.get(v, False) or edge_pred[e]
    nodes = sorted(node_truth)
    node = compute_metrics([node_pred[v] for v in nodes],
                           [node_truth[v] for v in nodes])

    reports = {"behavior": behavior, "node": node}
    print(format_table(reports))
    out = {name: r.as_dict() for name, r in reports.items()}
    Path(out_path).write_text(json.dumps(out, indent=2, sort_keys=True))
    return out


def run_all(rcfg: RunConfig, outdir) -> dict:
    """Full chain on one config; returns stage summaries and metric dict."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = run_synth(rcfg, outdir)
    events = paths["events"]
    run_ingest(events, outdir / "graph.snpg", dedup_window=rcfg.dedup_window)
    run_feature(outdir / "graph.snpg", outdir / "features.sntn", rcfg)
    pre = run_pretrain(outdir / "graph.snpg", outdir / "features.sntn",
                       outdir / "pretrain.sntn", rcfg, events_path=events)
    tr = run_train(outdir / "graph.snpg", outdir / "pretrain.sntn",
                   outdir / "model.sntn", rcfg, events_path=events)
    det = run_detect(outdir / "model.sntn", outdir / "graph.snpg",
                     outdir / "verdicts.jsonl")
    inv = run_investigate(outdir / "verdicts.jsonl", outdir / "model.sntn",
                          outdir / "alert", rcfg)
    metrics = run_eval(outdir / "verdicts.jsonl", events,
                       outdir / "graph.snpg", outdir / "metrics.json",
                       dedup_window=rcfg.dedup_window)
    return {"synth": paths, "pretrain": pre, "train": tr, "detect": det,
            "investigate": inv, "metrics": metrics}
