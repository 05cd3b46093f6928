"""Question-to-graph anchoring.

Maps a question to topic entities (via keyword extraction + name-embedding
linking), target hyperedges (via question-to-edge-name similarity), and a
bounded-hop question subgraph with synonymous entities collapsed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from .embeddings import IndexSet, VectorIndex
from .graph import SYNONYM, Entity, KnowledgeHypergraph
from .oracle import Kind, OracleError, OracleGateway, OracleRequest

log = logging.getLogger(__name__)

CALL_SITE = "anchoring"


@dataclass
class AnchorConfig:
    theta_v: float = 0.75
    theta_e: float = 0.70
    k_v: int = 3
    k_e: int = 5
    d_max_hops: int = 4

    def __post_init__(self) -> None:
        for theta in (self.theta_v, self.theta_e):
            if not -1.0 <= theta <= 1.0:
                raise ValueError(f"threshold out of range: {theta}")
        if self.d_max_hops < 0:
            raise ValueError("d_max_hops must be >= 0")


@dataclass
class AnchorSet:
    topics: set[str] = field(default_factory=set)
    targets: set[str] = field(default_factory=set)
    keyword_list: list[str] = field(default_factory=list)
    relaxed: bool = False

    def is_empty(self) -> bool:
        return not self.topics and not self.targets


@dataclass
class QuestionSubgraph:
    graph: KnowledgeHypergraph
    merge_map: dict[str, str]

    def canonical(self, entity_id: str) -> str:
        return self.merge_map.get(entity_id, entity_id)


def extract_keywords(question: str, gateway: OracleGateway) -> list[str]:
    if not question.strip():
        raise ValueError("question must be non-empty")
    try:
        result = gateway.dispatch(
            OracleRequest(Kind.KEYWORD_EXTRACT, {"question": question}, CALL_SITE)
        )
    except OracleError as exc:
        log.warning("keyword extraction failed: %s", exc)
        return []
    return list(dict.fromkeys(str(k) for k in result["keywords"]))


def link_topic_entities(
    keywords: list[str],
    name_index: VectorIndex,
    theta_v: float,
    k_v: int,
    gateway: OracleGateway,
) -> set[str]:
    topics: set[str] = set()
    for keyword in keywords:
        query = gateway.embed(keyword, CALL_SITE)
        topics.update(
            vid for vid, _ in name_index.top_k_above(query, k_v, theta_v)
        )
    return topics


def match_target_hyperedges(
    question: str,
    edge_index: VectorIndex,
    theta_e: float,
    k_e: int,
    gateway: OracleGateway,
) -> set[str]:
    if not len(edge_index):
        return set()
    query = gateway.embed(question, CALL_SITE)
    return {eid for eid, _ in edge_index.top_k_above(query, k_e, theta_e)}


def anchor_question(
    question: str,
    indexes: IndexSet,
    config: AnchorConfig,
    gateway: OracleGateway,
) -> AnchorSet:
    """Full anchoring; relaxes both thresholds by 0.1 once if nothing hits."""
    keywords = extract_keywords(question, gateway)
    topics = link_topic_entities(
        keywords, indexes.names, config.theta_v, config.k_v, gateway
    )
    targets = match_target_hyperedges(
        question, indexes.edge_names, config.theta_e, config.k_e, gateway
    )
    anchors = AnchorSet(topics=topics, targets=targets, keyword_list=keywords)
    if anchors.is_empty():
        topics = link_topic_entities(
            keywords, indexes.names, config.theta_v - 0.1, config.k_v, gateway
        )
        targets = match_target_hyperedges(
            question, indexes.edge_names, config.theta_e - 0.1, config.k_e, gateway
        )
        anchors = AnchorSet(
            topics=topics, targets=targets, keyword_list=keywords, relaxed=True
        )
    return anchors


def merge_synonyms(
    graph: KnowledgeHypergraph,
) -> tuple[KnowledgeHypergraph, dict[str, str]]:
    """Collapse entities joined by synonym edges onto one canonical entity.

    The canonical representative is the member with the longest description
    (ties: ascending id). Fact edges are rewritten onto canonical ids;
    synonym edges are dropped; non-canonical descriptions are preserved on
    the canonical entity for knowledge fusion. Returns the new graph and a
    map covering every merged entity (canonicals map to themselves).
    """
    parent: dict[str, str] = {}

    def find(x: str) -> str:
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    synonym_edges = [
        edge for edge in graph.hyperedges.values() if edge.kind == SYNONYM
    ]
    for edge in synonym_edges:
        head = edge.entities[0]
        for other in edge.entities[1:]:
            ra, rb = find(head), find(other)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

    groups: dict[str, list[str]] = {}
    for member in list(parent):
        groups.setdefault(find(member), []).append(member)

    merge_map: dict[str, str] = {}
    canonical_entities: dict[str, Entity] = {}
    for members in groups.values():
        members = sorted(members)
        canonical_id = min(
            members,
            key=lambda vid: (-len(graph.entity(vid).description), vid),
        )
        canon = graph.entity(canonical_id)
        extra = tuple(
            graph.entity(vid).description
            for vid in members
            if vid != canonical_id and graph.entity(vid).description
        )
        canonical_entities[canonical_id] = replace(
            canon,
            merged_descriptions=canon.merged_descriptions + extra,
        )
        for vid in members:
            merge_map[vid] = canonical_id

    entities: dict[str, Entity] = {}
    for vid, entity in graph.entities.items():
        canonical_id = merge_map.get(vid, vid)
        if canonical_id != vid:
            continue
        entities[vid] = canonical_entities.get(vid, entity)

    edges = {}
    seen_keys: set[tuple[str, frozenset[str]]] = set()
    for eid in graph.edge_ids():
        edge = graph.edge(eid)
        if edge.kind == SYNONYM:
            continue
        rewritten = tuple(
            dict.fromkeys(merge_map.get(vid, vid) for vid in edge.entities)
        )
        key = (edge.name, frozenset(rewritten))
        if key in seen_keys:
            continue
        seen_keys.add(key)
        edges[eid] = replace(edge, entities=rewritten)

    merged = KnowledgeHypergraph(entities, edges)
    merged.validate()
    return merged, merge_map


def build_question_subgraph(
    graph: KnowledgeHypergraph, anchors: AnchorSet, d_max_hops: int
) -> QuestionSubgraph:
    """Induce the union of bounded-hop neighborhoods of the anchors, then
    collapse synonym groups."""
    if anchors.is_empty():
        return QuestionSubgraph(graph=KnowledgeHypergraph({}, {}), merge_map={})
    reachable = graph.k_hop_neighborhood(
        anchors.topics, anchors.targets, d_max_hops
    )
    induced = graph.induced_subgraph(reachable)
    merged, merge_map = merge_synonyms(induced)
    return QuestionSubgraph(graph=merged, merge_map=merge_map)
