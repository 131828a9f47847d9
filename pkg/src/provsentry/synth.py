"""Synthetic desk-scale scenario generator with ground truth, plus mimicry
decoration of malicious nodes.

Benign activity comes from three templates (shell sessions over sshd, web
requests against nginx, log rotation) with per-instance entity variation.
Attack chains follow a remote-login pattern: an external socket reaches
sshd, a dropped interpreter tampers with the auth log, reads credentials
and documents, and talks back to the external socket. Every generated
event carries a ground-truth label in its attrs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ingest import Action, CanonicalEvent, EntityType

LABEL_KEY = "label"
PHASE_KEY = "phase"
BENIGN = "benign"
MALICIOUS = "malicious"
TRAIN = "train"
TEST = "test"

_CONFS = ["/etc/hosts", "/etc/profile", "/etc/services", "/etc/motd"]
_DOCS = [f"/home/user/doc-{i:02d}.txt" for i in range(24)]
_PAGES = [f"/var/www/page-{i}.html" for i in range(8)]
_TOOLS = ["ls", "cat", "grep", "vim"]
_SVC_LOGS = ["/var/log/nginx/access.log", "/var/log/cron.log"]


def _proc(name: str) -> dict:
    return {"id": f"proc:{name}", "type": EntityType.PROCESS,
            "attrs": {"name": name}}


def _file(path: str) -> dict:
    return {"id": f"file:{path}", "type": EntityType.FILE,
            "attrs": {"path": path}}


def _sock(addr: str) -> dict:
    return {"id": f"sock:{addr}", "type": EntityType.SOCKET,
            "attrs": {"addr": addr}}


SSHD = _proc("/usr/sbin/sshd")
NGINX = _proc("/usr/sbin/nginx")
LOGROTATE = _proc("/usr/sbin/logrotate")
AUDITCHECK = _proc("/usr/sbin/auditcheck")
SYNCD = _proc("/usr/sbin/syncd")
UPDATED = _proc("/usr/sbin/updated")
AUTH_LOG = _file("/var/log/auth.log")
HISTORY = _file("/home/user/.bash_history")
ACCESS_LOG = _file("/var/log/nginx/access.log")
ROTATE_CONF = _file("/etc/logrotate.conf")
AUDIT_REPORT = _file("/var/log/audit.report")
SYNC_DB = _file("/var/lib/sync.db")
UPDATE_LOG = _file("/var/log/update.log")


@dataclass
class ScenarioConfig:
    benign_events: int = 5000
    attack_chains: int = 3
    chain_len: int = 12
    train_frac: float = 0.7
    seed: int = 7


def _event(src: dict, dst: dict, action: Action, ts: int, label: str,
           phase: str) -> CanonicalEvent:
    attrs = {LABEL_KEY: label, PHASE_KEY: phase}
    for key, value in src["attrs"].items():
        attrs[f"src_{key}"] = value
    for key, value in dst["attrs"].items():
        attrs[f"dst_{key}"] = value
    return CanonicalEvent(src["id"], src["type"], dst["id"], dst["type"],
                          action, ts, attrs)


VIMINFO = _file("/home/user/.viminfo")


def _shell_session(i: int, rng) -> list:
    """Login via sshd, a spawned tool opens and reads a config and a
    document. Open/Read pairs are deliberate 50/50 ambiguity: both sides
    occur for every instance, so the benign reconstruction floor is ln 2
    on those steps and the calibration spread stays honest."""
    user_sock = _sock(f"10.0.0.{rng.integers(2, 250)}:s{i}")
    bash = _proc(f"/usr/bin/bash#{i}")
    tool_name = _TOOLS[int(rng.integers(0, len(_TOOLS)))]
    tool = _proc(f"/usr/bin/{tool_name}#{i}")
    conf = _file(_CONFS[int(rng.integers(0, len(_CONFS)))])
    doc = _file(_DOCS[int(rng.integers(0, len(_DOCS)))])
    steps = [
        (user_sock, SSHD, Action.RECEIVE),
        (SSHD, AUTH_LOG, Action.WRITE),
        (SSHD, bash, Action.CLONE),
        (bash, tool, Action.CLONE),
        (tool, conf, Action.OPEN),
        (tool, conf, Action.READ),
        (tool, doc, Action.OPEN),
        (tool, doc, Action.READ),
    ]
    if tool_name == "vim":
        steps.append((tool, VIMINFO, Action.WRITE))
    steps.append((bash, HISTORY, Action.WRITE))
    return steps


def _web_request(i: int, rng) -> list:
    web_sock = _sock(f"10.0.1.{rng.integers(2, 250)}:w{i}")
    page = _file(_PAGES[int(rng.integers(0, len(_PAGES)))])
    return [
        (web_sock, NGINX, Action.RECEIVE),
        (NGINX, page, Action.OPEN),
        (NGINX, page, Action.READ),
        (NGINX, web_sock, Action.SEND),
        (NGINX, ACCESS_LOG, Action.WRITE),
    ]


def _log_rotation(i: int, rng) -> list:
    svc = _SVC_LOGS[int(rng.integers(0, len(_SVC_LOGS)))]
    return [
        (LOGROTATE, ROTATE_CONF, Action.OPEN),
        (LOGROTATE, ROTATE_CONF, Action.READ),
        (LOGROTATE, _file(svc), Action.READ),
        (LOGROTATE, _file(svc + ".1"), Action.WRITE),
    ]


def _audit_sweep(i: int, rng) -> list:
    """Log review: the same files daemons write get read here, so the
    action on a log genuinely depends on who touches it."""
    return [
        (AUDITCHECK, AUTH_LOG, Action.READ),
        (AUDITCHECK, ACCESS_LOG, Action.READ),
        (AUDITCHECK, AUDIT_REPORT, Action.WRITE),
    ]


def _doc_sync(i: int, rng) -> list:
    doc = _file(_DOCS[int(rng.integers(0, len(_DOCS)))])
    return [
        (SYNCD, doc, Action.WRITE),
        (SYNCD, SYNC_DB, Action.WRITE),
    ]


def _config_update(i: int, rng) -> list:
    conf = _file(_CONFS[int(rng.integers(0, len(_CONFS)))])
    return [
        (UPDATED, conf, Action.WRITE),
        (UPDATED, UPDATE_LOG, Action.WRITE),
    ]


_TEMPLATES = [(_shell_session, 0.42), (_web_request, 0.27),
              (_log_rotation, 0.13), (_audit_sweep, 0.07),
              (_doc_sync, 0.07), (_config_update, 0.04)]


def _attack_chain(j: int, rng) -> list:
    """A web-shell drop: the web daemon spawns an interpreter under /tmp,
    which persists via root dotfiles, harvests SSH credentials, stages an
    archive, and exfiltrates over an external socket."""
    evil = _sock(f"203.0.113.{rng.integers(2, 250)}:e{j}")
    python = _proc(f"/tmp/.cache/python3#{j}")
    stage = _file(f"/tmp/.cache/stage{j}.tar")
    return [
        (NGINX, python, Action.CLONE),
        (python, _file("/root/.bashrc"), Action.WRITE),
        (python, _file("/root/.ssh/id_rsa"), Action.OPEN),
        (python, _file("/root/.ssh/id_rsa"), Action.READ),
        (python, stage, Action.WRITE),
        (python, stage, Action.READ),
        (python, evil, Action.SEND),
        (evil, python, Action.RECEIVE),
        (python, evil, Action.SEND),
        (evil, python, Action.RECEIVE),
        (python, evil, Action.SEND),
        (evil, python, Action.RECEIVE),
    ]


def generate_scenarios(cfg: ScenarioConfig) -> list[CanonicalEvent]:
    """One deterministic labeled event log.

    The leading train_frac of benign instances carries phase=train (the
    training and calibration population); the rest plus the attack chains
    carries phase=test (the evaluation population)."""
    rng = np.random.default_rng(cfg.seed)
    weights = np.array([w for _, w in _TEMPLATES])
    weights = weights / weights.sum()
    instances = []
    total = 0
    i = 0
    while total < cfg.benign_events:
        make = _TEMPLATES[int(rng.choice(len(_TEMPLATES), p=weights))][0]
        steps = make(i, rng)
        instances.append(steps)
        total += len(steps)
        i += 1

    n_train = int(np.ceil(cfg.train_frac * len(instances)))
    ts = 0
    events: list[CanonicalEvent] = []
    for steps in instances[:n_train]:
        for src, dst, action in steps:
            events.append(_event(src, dst, action, ts, BENIGN, TRAIN))
            ts += 1

    test_instances: list[tuple[list, str]] = \
        [(steps, BENIGN) for steps in instances[n_train:]]
    for j in range(cfg.attack_chains):
        chain = _attack_chain(j, rng)[:cfg.chain_len]
        pos = int(rng.integers(0, len(test_instances) + 1))
        test_instances.insert(pos, (chain, MALICIOUS))

    for steps, label in test_instances:
        for src, dst, action in steps:
            events.append(_event(src, dst, action, ts, label, TEST))
            ts += 1
    return events


def malicious_entities(events) -> list[str]:
    """Entity ids touched by malicious-labeled events, in first-seen order."""
    seen: dict[str, None] = {}
    for ev in events:
        if ev.attrs.get(LABEL_KEY) == MALICIOUS:
            seen.setdefault(ev.src_id, None)
            seen.setdefault(ev.dst_id, None)
    return list(seen)


def inject_mimicry(events: list[CanonicalEvent], n_events: int,
                   seed: int = 0) -> list[CanonicalEvent]:
    """Attach ``n_events`` benign-pattern decoration edges to malicious
    entities. Original events are untouched; decorations are labeled
    benign, so ground-truth malicious counts never change."""
    if n_events < 0:
        raise ValueError("n_events must be non-negative")
    if n_events == 0:
        return list(events)
    targets = malicious_entities(events)
    if not targets:
        raise ValueError("no malicious nodes to decorate")
    by_id = {}
    for ev in events:
        by_id.setdefault(ev.src_id, (ev.src_id, ev.src_type,
                                     {k[4:]: v for k, v in ev.attrs.items()
                                      if k.startswith("src_")}))
        by_id.setdefault(ev.dst_id, (ev.dst_id, ev.dst_type,
                                     {k[4:]: v for k, v in ev.attrs.items()
                                      if k.startswith("dst_")}))
    rng = np.random.default_rng(seed)
    ts = max(ev.ts for ev in events) + 1
    out = list(events)
    made = 0
    while made < n_events:
        ent_id, ent_type, ent_attrs = by_id[targets[int(rng.integers(0, len(targets)))]]
        node = {"id": ent_id, "type": ent_type, "attrs": ent_attrs}
        if ent_type is EntityType.PROCESS:
            # benign process grammar: open/read configs and documents
            kind = int(rng.integers(0, 3))
            if kind == 0:
                dst, act = _file(_CONFS[int(rng.integers(0, len(_CONFS)))]), Action.OPEN
            elif kind == 1:
                dst, act = _file(_CONFS[int(rng.integers(0, len(_CONFS)))]), Action.READ
            else:
                dst, act = _file(_DOCS[int(rng.integers(0, len(_DOCS)))]), Action.READ
            out.append(_event(node, dst, act, ts, BENIGN, TEST))
        elif ent_type is EntityType.SOCKET:
            # benign socket grammar: connections terminate at service daemons
            dst = SSHD if rng.integers(0, 2) == 0 else NGINX
            out.append(_event(node, dst, Action.RECEIVE, ts, BENIGN, TEST))
        else:
            # benign file grammar: read by a fresh shell tool
            tool = _proc(f"/usr/bin/{_TOOLS[int(rng.integers(0, len(_TOOLS)))]}#m{made}")
            out.append(_event(tool, node, Action.READ, ts, BENIGN, TEST))
        ts += 1
        made += 1
    return out


def events_to_jsonl(events) -> str:
    return "".join(ev.to_json() + "\n" for ev in events)
