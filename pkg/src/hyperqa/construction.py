"""Graph construction from pre-extracted fact records, plus synonym
hyperedge augmentation.

Ingest consumes the output format of an upstream fact extractor (JSONL,
one record per line) and deduplicates entities by exact name. Augmentation
then restores connectivity lost to exact-name matching: name-similar entity
pairs above a threshold are clustered into connected components, each
component is confirmed (possibly partially) by the judge oracle, and a
synonym hyperedge is added over every confirmed group of two or more.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .embeddings import VectorIndex
from .graph import SYNONYM, Entity, GraphBuilder, KnowledgeHypergraph
from .oracle import Kind, OracleError, OracleGateway, OracleRequest

log = logging.getLogger(__name__)

CALL_SITE = "construction"


class FactRecordError(Exception):
    pass


@dataclass(frozen=True)
class FactRecord:
    edge_name: str
    entity_names: tuple[str, ...]
    entity_descriptions: dict[str, str] = field(default_factory=dict)
    chunk_id: str | None = None


@dataclass(frozen=True)
class SimilarityEdge:
    pair: frozenset[str]
    score: float

    def __post_init__(self) -> None:
        if len(self.pair) != 2:
            raise ValueError("similarity edge must join two distinct entities")


def parse_fact_records(lines: Iterable[str]) -> Iterator[FactRecord]:
    """Parse JSONL fact records; errors carry the 1-based line number."""
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FactRecordError(f"line {lineno}: invalid JSON ({exc})") from exc
        try:
            names = [str(n).strip() for n in data["entity_names"]]
        except (KeyError, TypeError) as exc:
            raise FactRecordError(f"line {lineno}: missing entity_names") from exc
        names = [n for n in names if n]
        if not names:
            raise FactRecordError(f"line {lineno}: no non-blank entity names")
        edge_name = str(data.get("edge_name", "")).strip()
        if not edge_name:
            raise FactRecordError(f"line {lineno}: missing edge_name")
        yield FactRecord(
            edge_name=edge_name,
            entity_names=tuple(dict.fromkeys(names)),
            entity_descriptions=dict(data.get("entity_descriptions", {})),
            chunk_id=data.get("chunk_id"),
        )


def load_fact_records(path: str | Path) -> Iterator[FactRecord]:
    with Path(path).open(encoding="utf-8") as fh:
        yield from parse_fact_records(fh)


def ingest_facts(records: Iterable[FactRecord]) -> KnowledgeHypergraph:
    """One fact hyperedge per record; entities deduplicated by exact name."""
    builder = GraphBuilder()
    for record in records:
        for name in record.entity_names:
            builder.add_entity(
                Entity(
                    id=name,
                    name=name,
                    description=record.entity_descriptions.get(name, ""),
                )
            )
        builder.add_edge(
            record.edge_name, record.entity_names, source_ref=record.chunk_id
        )
    return builder.build()


def similarity_candidates(
    graph: KnowledgeHypergraph, name_index: VectorIndex, tau: float
) -> set[SimilarityEdge]:
    """All unordered entity pairs with name-embedding similarity >= tau."""
    ids = name_index.ids
    if len(ids) < 2:
        return set()
    sims = name_index.matrix @ name_index.matrix.T
    result: set[SimilarityEdge] = set()
    for i, j in zip(*np.triu_indices(len(ids), k=1)):
        score = float(sims[i, j])
        if score >= tau:
            result.add(SimilarityEdge(pair=frozenset((ids[i], ids[j])), score=score))
    return result


class _UnionFind:
    def __init__(self) -> None:
        self.parent: dict[str, str] = {}

    def find(self, x: str) -> str:
        self.parent.setdefault(x, x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # Deterministic root choice keeps component output stable.
            lo, hi = sorted((ra, rb))
            self.parent[hi] = lo


def similarity_components(edges: Iterable[SimilarityEdge]) -> list[set[str]]:
    """Connected components of the similarity subgraph, singletons excluded,
    ordered by their smallest member."""
    uf = _UnionFind()
    for edge in edges:
        a, b = sorted(edge.pair)
        uf.union(a, b)
    groups: dict[str, set[str]] = {}
    for member in uf.parent:
        groups.setdefault(uf.find(member), set()).add(member)
    return sorted(
        (grp for grp in groups.values() if len(grp) >= 2), key=lambda g: min(g)
    )


def augment_synonyms(
    graph: KnowledgeHypergraph,
    components: Iterable[set[str]],
    gateway: OracleGateway,
    batch_cap: int = 20,
) -> KnowledgeHypergraph:
    """Add a synonym hyperedge for every judge-confirmed group of >= 2.

    Fact edges and entities are copied untouched. Oversized components are
    judged in bounded batches; a failing judge call skips its component.
    """
    builder = GraphBuilder()
    for entity in graph.entities.values():
        builder.add_entity(entity)
    for edge in graph.hyperedges.values():
        builder.add_edge(edge.name, edge.entities, edge.source_ref, edge.kind)
    for component in components:
        members = sorted(component)
        for start in range(0, len(members), batch_cap):
            batch = members[start : start + batch_cap]
            if len(batch) < 2:
                continue
            payload = {
                "entities": [
                    {"name": vid, "description": graph.entity(vid).description}
                    for vid in batch
                ]
            }
            try:
                result = gateway.dispatch(
                    OracleRequest(Kind.SYNONYM_JUDGE, payload, CALL_SITE)
                )
            except OracleError as exc:
                log.warning("synonym judge failed for %s: %s", batch, exc)
                continue
            confirmed = sorted(set(result["synonyms"]) & set(batch))
            if len(confirmed) >= 2:
                builder.add_edge(
                    "Synonyms: " + " | ".join(confirmed), confirmed, kind=SYNONYM
                )
    return builder.build()
