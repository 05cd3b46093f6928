"""Run configuration: every tunable in one validated, serializable place.

The effective configuration is echoed verbatim into each run manifest so
that any run can be reproduced from its artifacts alone.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace

from .anchoring import AnchorConfig
from .retrieval import RetrievalConfig


@dataclass
class RunConfig:
    tau: float = 0.85  # synonym-candidate similarity threshold
    theta_v: float = 0.75  # topic-entity link threshold
    theta_e: float = 0.70  # target-hyperedge threshold
    theta_emb: float = 0.5  # entity-weight embedding gate
    k_v: int = 3
    k_e: int = 5
    subgraph_hops: int = 4  # question-subgraph neighborhood radius
    plan_depth: int = 3  # d_p
    explore_depth: int = 3  # d_max
    n_initial_plans: int = 2
    max_solutions: int = 2  # K
    beam_width: int = 4
    branch_cap: int = 6
    strategy: str = "dfs"
    lite_mode: bool = False
    plan_select_width: int = 5
    context_budget: int = 4000
    fusion_budget: int = 4000
    aggregate_budget: int = 8000
    backend: str = "mock"
    backend_url: str = ""
    seed: int = 0
    deterministic: bool = True

    def __post_init__(self) -> None:
        for name in ("tau", "theta_v", "theta_e", "theta_emb"):
            value = getattr(self, name)
            if not -1.0 <= value <= 1.0:
                raise ValueError(f"{name} out of [-1,1]: {value}")
        for name in (
            "k_v",
            "k_e",
            "plan_depth",
            "explore_depth",
            "n_initial_plans",
            "max_solutions",
            "beam_width",
            "branch_cap",
            "plan_select_width",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.subgraph_hops < 0:
            raise ValueError("subgraph_hops must be >= 0")
        if self.strategy not in ("dfs", "bfs"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.backend not in ("mock", "http"):
            raise ValueError(f"unknown backend {self.backend!r}")

    def anchor_config(self) -> AnchorConfig:
        return AnchorConfig(
            theta_v=self.theta_v,
            theta_e=self.theta_e,
            k_v=self.k_v,
            k_e=self.k_e,
            d_max_hops=self.subgraph_hops,
        )

    def retrieval_config(self) -> RetrievalConfig:
        return RetrievalConfig(
            d_max=self.explore_depth,
            beam_width=self.beam_width,
            theta_emb=self.theta_emb,
            lite_mode=self.lite_mode,
            fusion_budget=self.fusion_budget,
            anchor=self.anchor_config(),
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    def with_overrides(self, **overrides) -> "RunConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        ).hexdigest()[:16]


PRESETS: dict[str, dict] = {
    # Full pipeline defaults.
    "full": {
        "plan_depth": 3,
        "explore_depth": 3,
        "n_initial_plans": 2,
        "max_solutions": 2,
        "lite_mode": False,
    },
    # Embedding-only entity weights, hyperedge-only fused context.
    "lite": {
        "plan_depth": 2,
        "explore_depth": 3,
        "n_initial_plans": 1,
        "max_solutions": 1,
        "lite_mode": True,
    },
}


def preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return RunConfig(**PRESETS[name])
