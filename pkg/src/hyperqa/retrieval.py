"""Entity-weighted-overlap guided answer/path retrieval.

Resolves one subquestion against the question subgraph: re-anchors the
subquestion, then runs an iterative-deepening beam search whose expansion
directions are ranked by the EWO score (mean question-specific weight of
the overlapping entities) and whose candidate paths are ranked by the mean
entity weight along the path. The search answers at the first depth where
the path oracle deems some candidate sufficient; no deeper exploration
happens after that.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .anchoring import AnchorConfig, anchor_question
from .embeddings import IndexSet
from .graph import KnowledgeHypergraph, ReasoningPath
from .oracle import Kind, OracleError, OracleGateway, OracleRequest
from .planning import EmbeddingEntityScorer

log = logging.getLogger(__name__)

CALL_SITE = "retrieval"


@dataclass(frozen=True)
class AnswerPathPair:
    answer: str
    path: ReasoningPath
    context_digest: str
    score: float = 0.0

    def __post_init__(self) -> None:
        if not self.answer:
            raise ValueError("answer must be non-empty")


@dataclass(frozen=True)
class ScoredDirection:
    path: ReasoningPath
    terminal: str
    ewo: float

    def __post_init__(self) -> None:
        if self.path.edges[-1] != self.terminal:
            raise ValueError("partial path must end at its terminal edge")


@dataclass
class RetrievalConfig:
    d_max: int = 3
    beam_width: Optional[int] = 4  # None = unbounded
    theta_emb: float = 0.5
    lite_mode: bool = False
    shortlist: int = 5
    fusion_budget: int = 4000
    anchor: AnchorConfig = field(default_factory=AnchorConfig)

    def __post_init__(self) -> None:
        if self.d_max < 1:
            raise ValueError("d_max must be >= 1")
        if self.beam_width is not None and self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")


@dataclass
class RetrievalResult:
    pairs: list[AnswerPathPair]
    depth: Optional[int]  # depth at which the search stopped, None if exhausted


class ChunkStore:
    """Read-only source-chunk lookup, backed by a directory of
    ``<chunk_id>.txt`` files or a plain mapping."""

    def __init__(self, directory: Optional[str | Path] = None, chunks: Optional[dict] = None):
        self._dir = Path(directory) if directory else None
        self._chunks = dict(chunks) if chunks else {}

    def get(self, chunk_id: str) -> Optional[str]:
        if chunk_id in self._chunks:
            return self._chunks[chunk_id]
        if self._dir is not None:
            path = self._dir / f"{chunk_id}.txt"
            if path.is_file():
                return path.read_text("utf-8")
        return None


class EntityWeigher:
    """Memoized EW(v | q): embedding-gated, optionally LLM-refined weight.

    Below the embedding gate the weight is 0. In lite mode the weight is
    the (clamped) embedding similarity itself; otherwise the score oracle
    is consulted once per (entity, subquestion), falling back to the
    embedding similarity on failure.
    """

    def __init__(
        self,
        graph: KnowledgeHypergraph,
        se: EmbeddingEntityScorer,
        gateway: OracleGateway,
        question: str,
        theta_emb: float,
        lite_mode: bool,
    ) -> None:
        self.graph = graph
        self.se = se
        self.gateway = gateway
        self.question = question
        self.theta_emb = theta_emb
        self.lite_mode = lite_mode
        self._cache: dict[str, float] = {}
        self.oracle_calls = 0

    def __call__(self, entity_id: str) -> float:
        if entity_id in self._cache:
            return self._cache[entity_id]
        se_score = self.se(entity_id)
        if se_score < self.theta_emb:
            weight = 0.0
        elif self.lite_mode:
            weight = _clamp01(se_score)
        else:
            weight = self._llm_score(entity_id, _clamp01(se_score))
        self._cache[entity_id] = weight
        return weight

    def _llm_score(self, entity_id: str, fallback: float) -> float:
        entity = self.graph.entity(entity_id)
        payload = {
            "entity": entity.name,
            "description": entity.description,
            "question": self.question,
        }
        try:
            result = self.gateway.dispatch(
                OracleRequest(Kind.ENTITY_SCORE, payload, CALL_SITE)
            )
        except OracleError as exc:
            log.warning("entity scoring failed for %r: %s", entity_id, exc)
            return fallback
        self.oracle_calls += 1
        return float(result["score"])


def _clamp01(x: float) -> float:
    return max(0.0, min(1.0, x))


def ewo_score(
    graph: KnowledgeHypergraph,
    neighbor_id: str,
    edge_id: str,
    ew: Callable[[str], float],
) -> float:
    """Mean entity weight over the overlap of the two edges."""
    overlap = sorted(
        set(graph.edge(edge_id).entities) & set(graph.edge(neighbor_id).entities)
    )
    if not overlap:
        raise ValueError(f"hyperedges {edge_id!r} and {neighbor_id!r} do not overlap")
    return float(np.mean([ew(vid) for vid in overlap]))


def path_score(
    graph: KnowledgeHypergraph, path: ReasoningPath, ew: Callable[[str], float]
) -> float:
    """Mean entity weight over the distinct entities covered by the path."""
    entities = sorted({vid for eid in path.edges for vid in graph.edge(eid).entities})
    return float(np.mean([ew(vid) for vid in entities]))


def rank_directions(candidates: list[ScoredDirection]) -> list[ScoredDirection]:
    return sorted(candidates, key=lambda c: (-c.ewo, c.terminal, c.path.edges))


def select_directions(
    candidates: list[ScoredDirection],
    question: str,
    beam_width: Optional[int],
    gateway: OracleGateway,
    graph: KnowledgeHypergraph,
    lite_mode: bool,
) -> list[ScoredDirection]:
    """Beam pruning: EWO-ranked shortlist, then an oracle pick of <= b.

    Lite mode (and any oracle failure) takes the top b by EWO directly.
    """
    ranked = rank_directions(candidates)
    if beam_width is None:
        return ranked
    if lite_mode or not ranked:
        return ranked[:beam_width]
    shortlist = ranked[: 2 * beam_width]
    payload = {
        "question": question,
        "candidates": [
            {"path_names": [graph.edge(eid).name for eid in c.path.edges]}
            for c in shortlist
        ],
        "limit": beam_width,
    }
    try:
        result = gateway.dispatch(
            OracleRequest(Kind.DIRECTION_SELECT, payload, CALL_SITE)
        )
    except OracleError as exc:
        log.warning("direction selection failed: %s", exc)
        return ranked[:beam_width]
    picks = []
    for idx in result["indices"]:
        if 0 <= idx < len(shortlist) and shortlist[idx] not in picks:
            picks.append(shortlist[idx])
        if len(picks) >= beam_width:
            break
    return picks


def select_paths(
    candidates: list[ReasoningPath],
    question: str,
    gateway: OracleGateway,
    graph: KnowledgeHypergraph,
    sp: Callable[[ReasoningPath], float],
    lite_mode: bool,
    shortlist_size: int,
) -> list[ReasoningPath]:
    """Pick the candidate paths deemed sufficient to answer the question.

    Candidates are ranked by path score and truncated to the shortlist. In
    lite mode, paths scoring at or above the shortlist median are taken;
    otherwise the path oracle marks the sufficient subset (empty on
    failure, which lets the search deepen).
    """
    if not candidates:
        return []
    ranked = sorted(candidates, key=lambda p: (-sp(p), p.edges))[:shortlist_size]
    if lite_mode:
        median = float(np.median([sp(p) for p in ranked]))
        return [p for p in ranked if sp(p) >= median]
    payload = {
        "question": question,
        "candidates": [
            {"names": [graph.edge(eid).name for eid in p.edges]} for p in ranked
        ],
    }
    try:
        result = gateway.dispatch(OracleRequest(Kind.PATH_SELECT, payload, CALL_SITE))
    except OracleError as exc:
        log.warning("path selection failed: %s", exc)
        return []
    picks = []
    for idx in result["indices"]:
        if 0 <= idx < len(ranked) and ranked[idx] not in picks:
            picks.append(ranked[idx])
    return picks


def fuse_knowledge(
    path: ReasoningPath,
    graph: KnowledgeHypergraph,
    chunk_store: Optional[ChunkStore] = None,
    lite_mode: bool = False,
    ew: Optional[Callable[[str], float]] = None,
    budget: int = 4000,
) -> str:
    """Render the context for a path.

    Lite mode emits only the hyperedge names along the path. Full mode adds
    the descriptions of covered entities and the deduplicated source chunks.
    When over budget, entity lines are dropped lowest-weight first, then
    chunks from the end.
    """
    edge_lines = [graph.edge(eid).name for eid in path.edges]
    if lite_mode:
        return "\n".join(edge_lines)

    entity_ids = list(
        dict.fromkeys(vid for eid in path.edges for vid in graph.edge(eid).entities)
    )
    entity_lines: list[tuple[float, str]] = []
    for vid in entity_ids:
        entity = graph.entity(vid)
        descs = [d for d in (entity.description, *entity.merged_descriptions) if d]
        if descs:
            weight = ew(vid) if ew is not None else 0.0
            entity_lines.append((weight, f"{entity.name}: {' '.join(descs)}"))

    chunk_blocks: list[str] = []
    seen_chunks: set[str] = set()
    for eid in path.edges:
        ref = graph.edge(eid).source_ref
        if ref is None or ref in seen_chunks:
            continue
        seen_chunks.add(ref)
        text = chunk_store.get(ref) if chunk_store is not None else None
        if text is None:
            log.warning("missing source chunk %r", ref)
            continue
        chunk_blocks.append(text)

    def assemble(ents: list[tuple[float, str]], chunks: list[str]) -> str:
        parts = edge_lines + [line for _, line in ents] + chunks
        return "\n".join(parts)

    ents = list(entity_lines)
    chunks = list(chunk_blocks)
    while len(assemble(ents, chunks)) > budget and ents:
        drop = min(range(len(ents)), key=lambda i: (ents[i][0], i))
        ents.pop(drop)
    while len(assemble(ents, chunks)) > budget and chunks:
        chunks.pop()
    return assemble(ents, chunks)


def _context_digest(context: str) -> str:
    return hashlib.sha256(context.encode("utf-8")).hexdigest()[:16]


def retrieve_answers_with_paths(
    graph: KnowledgeHypergraph,
    question: str,
    cfg: RetrievalConfig,
    gateway: OracleGateway,
    indexes: IndexSet,
    chunk_store: Optional[ChunkStore] = None,
    accept_path: Optional[Callable[[ReasoningPath], bool]] = None,
) -> RetrievalResult:
    """Iterative-deepening beam search for answer-path pairs.

    `indexes` must be built over `graph` (the question subgraph). The
    `accept_path` hook replaces oracle path selection when given; it exists
    for search-completeness testing.
    """
    anchors = anchor_question(question, indexes, cfg.anchor, gateway)
    if anchors.is_empty():
        return RetrievalResult(pairs=[], depth=None)

    seed_edges: set[str] = set(anchors.targets)
    for vid in anchors.topics:
        seed_edges |= graph.incident_edges(vid)
    if not seed_edges:
        return RetrievalResult(pairs=[], depth=None)

    se = EmbeddingEntityScorer(
        graph, indexes.descriptions, question, gateway, call_site=CALL_SITE
    )
    ew = EntityWeigher(graph, se, gateway, question, cfg.theta_emb, cfg.lite_mode)

    def sp(path: ReasoningPath) -> float:
        return path_score(graph, path, ew)

    frontier = [ReasoningPath((eid,)) for eid in sorted(seed_edges)]
    discovered: dict[tuple[str, ...], ReasoningPath] = {
        p.edges: p for p in frontier
    }

    for depth in range(1, cfg.d_max + 1):
        if depth > 1:
            candidates: list[ScoredDirection] = []
            for path in frontier:
                terminal = path.edges[-1]
                for nid in sorted(graph.neighbors(terminal)):
                    if nid in path.edges:  # no edge revisits within a path
                        continue
                    candidates.append(
                        ScoredDirection(
                            path=ReasoningPath(path.edges + (nid,)),
                            terminal=nid,
                            ewo=ewo_score(graph, nid, terminal, ew),
                        )
                    )
            selected = select_directions(
                candidates, question, cfg.beam_width, gateway, graph, cfg.lite_mode
            )
            frontier = []
            for direction in selected:
                if direction.path.edges not in discovered:
                    discovered[direction.path.edges] = direction.path
                    frontier.append(direction.path)
            if not frontier:
                break

        path_candidates = list(discovered.values())
        if accept_path is not None:
            chosen = [p for p in path_candidates if accept_path(p)]
        else:
            chosen = select_paths(
                path_candidates,
                question,
                gateway,
                graph,
                sp,
                cfg.lite_mode,
                cfg.shortlist,
            )
        if chosen:
            pairs = []
            for path in chosen:
                context = fuse_knowledge(
                    path, graph, chunk_store, cfg.lite_mode, ew, cfg.fusion_budget
                )
                try:
                    result = gateway.dispatch(
                        OracleRequest(
                            Kind.STEP_ANSWER,
                            {"question": question, "context": context},
                            CALL_SITE,
                        )
                    )
                except OracleError as exc:
                    log.warning("step answering failed: %s", exc)
                    continue
                if result.get("refusal"):
                    continue
                pairs.append(
                    AnswerPathPair(
                        answer=result["answer"],
                        path=path,
                        context_digest=_context_digest(context),
                        score=sp(path),
                    )
                )
            return RetrievalResult(pairs=pairs, depth=depth)

    return RetrievalResult(pairs=[], depth=None)
