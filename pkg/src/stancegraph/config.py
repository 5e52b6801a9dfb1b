"""Run-wide configuration and the config fingerprint stamped into artifacts."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields


@dataclass
class RunConfig:
    # embeddings
    dimension: int = 384
    embedding_provider: str = "hash"
    # LLM gateway
    model_id: str = "default-model"
    mode: str = "replay"              # live | record | replay
    cache_dir: str = "cache"
    temperature: float = 0.0
    max_tokens: int = 1024
    p2_max_lines: int = 50
    # schema induction
    k_grid: list[int] = field(default_factory=lambda: [4, 8, 16, 32, 64])
    k_fixed: int | None = None
    n_filters: int = 8
    filter_hop: int = 1
    size_cap: int = 6
    # kernel model
    n_sub: int = 8
    n_filt: int = 6
    walk_length: int = 2              # p
    top_g: int = 4                    # g
    layers: int = 2                   # L
    hidden: int = 64                  # h
    subgraph_hop: int = 1
    diagonal_w: bool = False
    relation_weights: dict = field(default_factory=lambda: {
        "Implies": 1.0, "Conjunction": 0.5, "Disjunction": 0.5, "InstanceOf": 1.0})
    # training
    batch_size: int = 32
    learning_rate: float = 5e-4
    max_epochs: int = 20
    patience: int = 10
    validation_interval: float = 0.2
    weight_decay: float = 0.01
    grad_clip: float | None = None
    trials: int = 3
    seed: int = 0
    # ablations
    random_filters: bool = False
    skip_augmentation: bool = False
    # labels
    label_set: list[str] = field(default_factory=lambda: ["Favor", "Against", "None"])

    def fingerprint(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)
