"""Agent configuration: retriever choice, question policy, statistics source."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

RETRIEVERS = ("bm25", "dense", "fusion")
STATS_SOURCES = ("none", "random", "bm25", "dense", "structured")


@dataclass(frozen=True)
class AgentConfig:
    retriever: str = "bm25"
    rerank: bool = False
    stats_source: str = "structured"
    questions_per_turn: int = 3
    top_k: int = 10
    max_number: int = 100
    stats_top_m: int = 10
    candidate_count: int = 5
    rrf_k_const: float = 60.0
    embed_dimension: int = 256
    seed: int = 0

    def __post_init__(self) -> None:
        if self.retriever not in RETRIEVERS:
            raise ValueError(f"retriever must be one of {RETRIEVERS}, got {self.retriever!r}")
        if self.stats_source not in STATS_SOURCES:
            raise ValueError(f"stats_source must be one of {STATS_SOURCES}, got {self.stats_source!r}")
        for name in ("questions_per_turn", "top_k", "max_number", "stats_top_m", "candidate_count"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.rrf_k_const <= 0:
            raise ValueError("rrf_k_const must be positive")
        if self.embed_dimension < 2:
            raise ValueError("embed_dimension must be >= 2")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "AgentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | Path) -> "AgentConfig":
        with Path(path).open("r", encoding="utf-8") as fp:
            return cls.from_dict(json.load(fp))
