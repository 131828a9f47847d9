"""Every pipeline tunable in one replayable record.

Serialized as flat ``key=value`` text ('#' comments allowed). The
SENTIENT_SEED environment variable, when set, overrides the seed at load
time so a whole run can be re-keyed without editing files.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from pathlib import Path

SEED_ENV_VAR = "SENTIENT_SEED"


@dataclass
class RunConfig:
    seed: int = 7
    # scenario generation
    benign_events: int = 5000
    attack_chains: int = 3
    chain_len: int = 12
    train_frac: float = 0.7
    mimicry_events: int = 0
    # graph construction
    dedup_window: int = 0
    # features
    d_sem: int = 32
    k_pos: int = 8
    skipgram_window: int = 4
    skipgram_negatives: int = 5
    skipgram_epochs: int = 20
    skipgram_lr: float = 0.05
    laplacian_weighted: bool = False
    mask_type_tokens: bool = True
    # encoder
    d_model: int = 64
    heads: int = 4
    encoder_layers: int = 2
    attention_scope: str = "neighborhood"
    pretrain_epochs: int = 15
    pretrain_lr: float = 3e-3
    # intent sequences
    walks_per_node: int = 5
    walk_len: int = 30
    d_intent: int = 64
    state_dim: int = 16
    intent_layers: int = 2
    gated_scan: bool = False
    # detector
    detector_epochs: int = 20
    detector_lr: float = 2e-3
    batch_size: int = 256
    threshold_multiplier: float = 1.5
    # investigation
    cluster_k_min: int = 2
    cluster_k_max: int = 16
    cluster_all_behaviors: bool = False

    def to_text(self) -> str:
        lines = ["# pipeline run configuration"]
        for f in dataclasses.fields(self):
            lines.append(f"{f.name}={getattr(self, f.name)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, apply_env: bool = True) -> "RunConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
            key, value = line.split("=", 1)
            key, value = key.strip(), value.strip()
            if key not in fields:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
            kwargs[key] = _parse(fields[key].type, value, key)
        cfg = cls(**kwargs)
        if apply_env and os.environ.get(SEED_ENV_VAR):
            cfg.seed = int(os.environ[SEED_ENV_VAR])
        return cfg

    def save(self, path):
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path, apply_env: bool = True) -> "RunConfig":
        return cls.from_text(Path(path).read_text(), apply_env=apply_env)


def _parse(type_name: str, value: str, key: str):
    t = type_name if isinstance(type_name, str) else type_name.__name__
    if t == "int":
        return int(value)
    if t == "float":
        return float(value)
    if t == "bool":
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"{key}: not a boolean: {value!r}")
    return value
