"""Knowledge hypergraph data model and structural queries.

Entities are identified by their (exact) name; hyperedges get surrogate ids
assigned at build time. Graphs are frozen after construction: all query
methods are pure reads, and derived graphs (induced subgraphs, synonym
merges) are new objects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional

FORMAT_VERSION = 1

FACT = "fact"
SYNONYM = "synonym"


class GraphError(Exception):
    pass


class UnknownEntityError(GraphError):
    pass


class UnknownEdgeError(GraphError):
    pass


@dataclass(frozen=True)
class Entity:
    id: str
    name: str
    description: str = ""
    canonical_of: Optional[str] = None
    # Descriptions of entities folded into this one during synonym merge,
    # kept for knowledge fusion.
    merged_descriptions: tuple[str, ...] = ()


@dataclass(frozen=True)
class Hyperedge:
    id: str
    name: str
    entities: tuple[str, ...]
    source_ref: Optional[str] = None
    kind: str = FACT

    def __post_init__(self) -> None:
        if not self.entities:
            raise GraphError(f"hyperedge {self.id!r} has no entities")
        if len(set(self.entities)) != len(self.entities):
            raise GraphError(f"hyperedge {self.id!r} repeats an entity")
        if self.kind == SYNONYM:
            if len(self.entities) < 2:
                raise GraphError(f"synonym edge {self.id!r} needs arity >= 2")
            if self.source_ref is not None:
                raise GraphError(f"synonym edge {self.id!r} carries a source_ref")
        elif self.kind != FACT:
            raise GraphError(f"unknown edge kind {self.kind!r}")


@dataclass(frozen=True)
class ReasoningPath:
    """Ordered hyperedge sequence; connectivity is checked against a graph."""

    edges: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.edges:
            raise GraphError("reasoning path must contain at least one edge")
        for a, b in zip(self.edges, self.edges[1:]):
            if a == b:
                raise GraphError("reasoning path repeats an edge immediately")

    def __len__(self) -> int:
        return len(self.edges)


class KnowledgeHypergraph:
    """Immutable entity/hyperedge store with an incidence index E(v)."""

    def __init__(
        self,
        entities: dict[str, Entity],
        hyperedges: dict[str, Hyperedge],
    ) -> None:
        self._entities = dict(entities)
        self._hyperedges = dict(hyperedges)
        incidence: dict[str, set[str]] = {vid: set() for vid in self._entities}
        for edge in self._hyperedges.values():
            for vid in edge.entities:
                if vid not in self._entities:
                    raise GraphError(
                        f"edge {edge.id!r} references unknown entity {vid!r}"
                    )
                incidence[vid].add(edge.id)
        self._incidence = {vid: frozenset(eids) for vid, eids in incidence.items()}

    @property
    def entities(self) -> dict[str, Entity]:
        return dict(self._entities)

    @property
    def hyperedges(self) -> dict[str, Hyperedge]:
        return dict(self._hyperedges)

    def __contains__(self, entity_id: str) -> bool:
        return entity_id in self._entities

    def entity(self, entity_id: str) -> Entity:
        try:
            return self._entities[entity_id]
        except KeyError:
            raise UnknownEntityError(f"unknown entity {entity_id!r}") from None

    def edge(self, edge_id: str) -> Hyperedge:
        try:
            return self._hyperedges[edge_id]
        except KeyError:
            raise UnknownEdgeError(f"unknown hyperedge {edge_id!r}") from None

    def entity_ids(self) -> list[str]:
        return sorted(self._entities)

    def edge_ids(self) -> list[str]:
        return sorted(self._hyperedges)

    def num_entities(self) -> int:
        return len(self._entities)

    def num_edges(self) -> int:
        return len(self._hyperedges)

    def incident_edges(self, entity_id: str) -> set[str]:
        """E(v): the hyperedges containing the entity."""
        if entity_id not in self._entities:
            raise UnknownEntityError(f"unknown entity {entity_id!r}")
        return set(self._incidence[entity_id])

    def neighbors(self, edge_id: str) -> set[str]:
        """Nbr(e): edges sharing at least one entity with e."""
        edge = self.edge(edge_id)
        result: set[str] = set()
        for vid in edge.entities:
            result |= self._incidence[vid]
        result.discard(edge_id)
        return result

    def induced_subgraph(self, edge_ids: Iterable[str]) -> "KnowledgeHypergraph":
        edge_ids = set(edge_ids)
        edges = {eid: self.edge(eid) for eid in edge_ids}
        entity_ids = {vid for edge in edges.values() for vid in edge.entities}
        entities = {vid: self._entities[vid] for vid in entity_ids}
        return KnowledgeHypergraph(entities, edges)

    def k_hop_neighborhood(
        self,
        seed_entities: Iterable[str],
        seed_edges: Iterable[str],
        depth: int,
    ) -> set[str]:
        """Edges reachable within `depth` neighbor expansions of the seeds.

        Hop 0 is the seed edges plus edges incident to the seed entities.
        """
        if depth < 0:
            raise ValueError("depth must be >= 0")
        frontier: set[str] = set()
        for vid in seed_entities:
            frontier |= self.incident_edges(vid)
        for eid in seed_edges:
            self.edge(eid)
            frontier.add(eid)
        seen = set(frontier)
        for _ in range(depth):
            nxt: set[str] = set()
            for eid in frontier:
                nxt |= self.neighbors(eid)
            frontier = nxt - seen
            if not frontier:
                break
            seen |= frontier
        return seen

    def is_connected_path(self, path: ReasoningPath) -> bool:
        """True iff consecutive edges overlap in at least one entity."""
        edges = [self.edge(eid) for eid in path.edges]
        for a, b in zip(edges, edges[1:]):
            if not set(a.entities) & set(b.entities):
                return False
        return True

    def validate(self) -> None:
        """Check incidence symmetry; raises GraphError on violation."""
        for vid, eids in self._incidence.items():
            for eid in eids:
                if vid not in self._hyperedges[eid].entities:
                    raise GraphError(f"incidence lists {eid!r} for absent member {vid!r}")
        for edge in self._hyperedges.values():
            for vid in edge.entities:
                if edge.id not in self._incidence[vid]:
                    raise GraphError(f"incidence misses {edge.id!r} for {vid!r}")

    # -- persistence ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "entities": [
                {
                    "id": ent.id,
                    "name": ent.name,
                    "description": ent.description,
                    "canonical_of": ent.canonical_of,
                    "merged_descriptions": list(ent.merged_descriptions),
                }
                for ent in (self._entities[vid] for vid in sorted(self._entities))
            ],
            "hyperedges": [
                {
                    "id": edge.id,
                    "name": edge.name,
                    "entities": list(edge.entities),
                    "source_ref": edge.source_ref,
                    "kind": edge.kind,
                }
                for edge in (self._hyperedges[eid] for eid in sorted(self._hyperedges))
            ],
            "incidence": {
                vid: sorted(eids) for vid, eids in sorted(self._incidence.items())
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KnowledgeHypergraph":
        if data.get("version") != FORMAT_VERSION:
            raise GraphError(f"unsupported graph format version {data.get('version')!r}")
        entities = {
            rec["id"]: Entity(
                id=rec["id"],
                name=rec["name"],
                description=rec.get("description", ""),
                canonical_of=rec.get("canonical_of"),
                merged_descriptions=tuple(rec.get("merged_descriptions", ())),
            )
            for rec in data["entities"]
        }
        edges = {
            rec["id"]: Hyperedge(
                id=rec["id"],
                name=rec["name"],
                entities=tuple(rec["entities"]),
                source_ref=rec.get("source_ref"),
                kind=rec.get("kind", FACT),
            )
            for rec in data["hyperedges"]
        }
        graph = cls(entities, edges)
        stored = {vid: set(eids) for vid, eids in data.get("incidence", {}).items()}
        if stored and stored != {v: set(e) for v, e in graph._incidence.items()}:
            raise GraphError("stored incidence index disagrees with edge membership")
        graph.validate()
        return graph

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True), "utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "KnowledgeHypergraph":
        return cls.from_dict(json.loads(Path(path).read_text("utf-8")))


class GraphBuilder:
    """Single-writer accumulator; `build()` freezes into a KnowledgeHypergraph.

    Duplicate edges (same name and same entity set) are dropped. Entities
    are deduplicated by id.
    """

    def __init__(self) -> None:
        self._entities: dict[str, Entity] = {}
        self._edges: dict[str, Hyperedge] = {}
        self._edge_keys: set[tuple[str, frozenset[str]]] = set()
        self._next_edge = 0

    def add_entity(self, entity: Entity) -> None:
        existing = self._entities.get(entity.id)
        if existing is None:
            self._entities[entity.id] = entity
        elif not existing.description and entity.description:
            self._entities[entity.id] = replace(existing, description=entity.description)

    def add_edge(
        self,
        name: str,
        entity_ids: Iterable[str],
        source_ref: Optional[str] = None,
        kind: str = FACT,
    ) -> Optional[str]:
        """Add a hyperedge; returns its id, or None if it was a duplicate."""
        ids = tuple(dict.fromkeys(entity_ids))
        key = (name, frozenset(ids))
        if key in self._edge_keys:
            return None
        self._edge_keys.add(key)
        eid = f"e{self._next_edge}"
        self._next_edge += 1
        self._edges[eid] = Hyperedge(
            id=eid, name=name, entities=ids, source_ref=source_ref, kind=kind
        )
        return eid

    def build(self) -> KnowledgeHypergraph:
        graph = KnowledgeHypergraph(self._entities, self._edges)
        graph.validate()
        return graph
