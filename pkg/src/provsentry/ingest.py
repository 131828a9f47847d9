"""Audit log parsing into canonical events, plus attribute tokenization.

Two source formats are supported:

* canonical JSONL: one object per line with keys src, src_type, dst,
  dst_type, action, ts and an optional attrs map. Attribute keys prefixed
  ``src_`` / ``dst_`` describe the respective endpoint.
* a 6-field TSV with single-character type and action codes, one graph id
  per line (column tables below).

Parsing is total: malformed lines are counted and skipped, never fatal.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping


class EntityType(enum.IntEnum):
    PROCESS = 0
    FILE = 1
    SOCKET = 2
    PIPE = 3
    MEMORY = 4
    OTHER = 5


class Action(enum.IntEnum):
    READ = 0
    WRITE = 1
    OPEN = 2
    CLONE = 3
    EXECUTE = 4
    SEND = 5
    RECEIVE = 6
    OTHER = 7


#: stable action ordering persisted with detection models
ACTION_VOCAB = tuple(Action)

_TYPE_BY_NAME = {t.name.lower(): t for t in EntityType}

# full names plus the single-letter aliases used in rendered attack graphs
_ACTION_ALIASES = {
    "read": Action.READ, "r": Action.READ,
    "write": Action.WRITE, "w": Action.WRITE,
    "open": Action.OPEN, "o": Action.OPEN,
    "clone": Action.CLONE, "c": Action.CLONE,
    "execute": Action.EXECUTE, "e": Action.EXECUTE, "exec": Action.EXECUTE,
    "send": Action.SEND, "s": Action.SEND,
    "receive": Action.RECEIVE, "rc": Action.RECEIVE, "recv": Action.RECEIVE,
    "other": Action.OTHER,
}

# TSV single-character entity type codes
_TSV_TYPE_CODES = {
    "a": EntityType.PROCESS,
    "b": EntityType.FILE,
    "c": EntityType.SOCKET,
    "d": EntityType.PIPE,
    "e": EntityType.MEMORY,
}

# TSV single-character action codes ('v' stands in for receive)
_TSV_ACTION_CODES = {
    "R": Action.READ, "W": Action.WRITE, "O": Action.OPEN, "C": Action.CLONE,
    "E": Action.EXECUTE, "S": Action.SEND, "v": Action.RECEIVE,
}


@dataclass
class CanonicalEvent:
    """One audit record: source entity, destination entity, action, time."""

    src_id: str
    src_type: EntityType
    dst_id: str
    dst_type: EntityType
    action: Action
    ts: int
    attrs: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> str:
        obj = {
            "src": self.src_id, "src_type": self.src_type.name.capitalize(),
            "dst": self.dst_id, "dst_type": self.dst_type.name.capitalize(),
            "action": self.action.name.capitalize(), "ts": self.ts,
        }
        if self.attrs:
            obj["attrs"] = self.attrs
        return json.dumps(obj, sort_keys=True)


@dataclass
class ParseStats:
    lines: int = 0
    parsed: int = 0
    skipped: int = 0
    unknown_actions: int = 0
    unknown_types: int = 0

    def merge(self, other: "ParseStats"):
        self.lines += other.lines
        self.parsed += other.parsed
        self.skipped += other.skipped
        self.unknown_actions += other.unknown_actions
        self.unknown_types += other.unknown_types


def _coerce_type(name, stats: ParseStats) -> EntityType:
    t = _TYPE_BY_NAME.get(str(name).strip().lower())
    if t is None:
        stats.unknown_types += 1
        return EntityType.OTHER
    return t


def _coerce_action(name, stats: ParseStats) -> Action:
    a = _ACTION_ALIASES.get(str(name).strip().lower())
    if a is None:
        stats.unknown_actions += 1
        return Action.OTHER
    return a


def parse_jsonl(lines: Iterable[str], stats: ParseStats | None = None
                ) -> Iterator[CanonicalEvent]:
    """Parse canonical JSONL lines; yields events in input order."""
    stats = stats if stats is not None else ParseStats()
    for line in lines:
        stats.lines += 1
        line = line.strip()
        if not line:
            stats.skipped += 1
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            stats.skipped += 1
            continue
        if not isinstance(obj, dict):
            stats.skipped += 1
            continue
        try:
            src = str(obj["src"])
            dst = str(obj["dst"])
            ts = int(obj["ts"])
        except (KeyError, TypeError, ValueError):
            stats.skipped += 1
            continue
        if not src or not dst:
            stats.skipped += 1
            continue
        attrs_raw = obj.get("attrs") or {}
        if not isinstance(attrs_raw, dict):
            stats.skipped += 1
            continue
        stats.parsed += 1
        yield CanonicalEvent(
            src_id=src,
            src_type=_coerce_type(obj.get("src_type", "other"), stats),
            dst_id=dst,
            dst_type=_coerce_type(obj.get("dst_type", "other"), stats),
            action=_coerce_action(obj.get("action", "other"), stats),
            ts=ts,
            attrs={str(k): str(v) for k, v in attrs_raw.items()},
        )


def parse_streamspot_tsv(lines: Iterable[str], stats: ParseStats | None = None
                         ) -> Iterator[tuple[int, CanonicalEvent]]:
    """Parse 6-field TSV lines into (graph_id, event) pairs.

    Fields: src_id, src_type_char, dst_id, dst_type_char, action_char,
    graph_id. The format carries no timestamps, so the line index is used.
    """
    stats = stats if stats is not None else ParseStats()
    for i, line in enumerate(lines):
        stats.lines += 1
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 6:
            stats.skipped += 1
            continue
        src, src_c, dst, dst_c, act_c, gid = parts
        if not src or not dst:
            stats.skipped += 1
            continue
        try:
            graph_id = int(gid)
        except ValueError:
            stats.skipped += 1
            continue
        src_t = _TSV_TYPE_CODES.get(src_c)
        dst_t = _TSV_TYPE_CODES.get(dst_c)
        if src_t is None or dst_t is None:
            stats.unknown_types += 1
            src_t = src_t or EntityType.OTHER
            dst_t = dst_t or EntityType.OTHER
        action = _TSV_ACTION_CODES.get(act_c)
        if action is None:
            stats.unknown_actions += 1
            action = Action.OTHER
        stats.parsed += 1
        yield graph_id, CanonicalEvent(src, src_t, dst, dst_t, action, ts=i)


_SPLIT_CHARS = str.maketrans({c: " " for c in "/.-_"})

#: lowercase entity-type names, usable to strip type tokens from a token list
TYPE_TOKENS = frozenset(t.name.lower() for t in EntityType)


def tokenize_attributes(attrs: Mapping[str, str], entity_type: EntityType,
                        keys: Iterable[str] | None = None) -> list[str]:
    """Split attribute values into lowercase tokens, type token first.

    Path-like values split on '/', '.', '-' and '_', so /bin/vim becomes
    [file, bin, vim] and shares two of three tokens with /bin/nano. ``keys``
    restricts which attributes contribute (default: all, in sorted order).
    """
    tokens = [entity_type.name.lower()]
    names = sorted(attrs) if keys is None else [k for k in keys if k in attrs]
    for k in names:
        for tok in str(attrs[k]).translate(_SPLIT_CHARS).split():
            tok = tok.lower()
            if tok:
                tokens.append(tok)
    return tokens
