"""Plan-context sketching and reasoning-DAG construction.

A question is decomposed into a plan (subquestions + dependency pairs) by
the plan oracle, grounded on a rendered sketch of the question subgraph.
Dependencies are reduced to their immediate (Hasse) form and stratified
into topological levels by longest-path depth; the resulting DAG is the
unit the state-space search operates on.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from graphlib import CycleError as _GraphlibCycleError
from graphlib import TopologicalSorter
from typing import Callable, Optional

import numpy as np

from .embeddings import VectorIndex, cosine_similarity
from .graph import KnowledgeHypergraph
from .oracle import Kind, OracleGateway, OracleRequest

log = logging.getLogger(__name__)

CALL_SITE = "planning"

MAX_SUBQUESTION_CHARS = 300
DEFAULT_CONTEXT_BUDGET = 4000
DEFAULT_SELECT_WIDTH = 5


class PlanError(Exception):
    pass


class PlanCycleError(PlanError):
    pass


class NoFeasiblePlanError(PlanError):
    pass


@dataclass(frozen=True)
class Subquestion:
    id: int
    text: str
    topics: tuple[str, ...] = ()


@dataclass(frozen=True)
class ReasoningPlan:
    subquestions: tuple[Subquestion, ...]
    deps: frozenset[tuple[int, int]]

    def ids(self) -> list[int]:
        return [sub.id for sub in self.subquestions]

    def subquestion(self, sub_id: int) -> Subquestion:
        for sub in self.subquestions:
            if sub.id == sub_id:
                return sub
        raise PlanError(f"no subquestion with id {sub_id}")

    def to_dict(self) -> dict:
        return {
            "subquestions": [
                {"id": s.id, "text": s.text, "topics": list(s.topics)}
                for s in self.subquestions
            ],
            "deps": sorted([list(d) for d in self.deps]),
        }


def parse_plan(data: dict) -> ReasoningPlan:
    """Validate the JSON plan shape shared with the oracle fixtures."""
    try:
        subs = tuple(
            Subquestion(
                id=int(s["id"]),
                text=str(s["text"]),
                topics=tuple(str(t) for t in s.get("topics", [])),
            )
            for s in data["subquestions"]
        )
        deps = frozenset((int(a), int(b)) for a, b in data["deps"])
    except (KeyError, TypeError, ValueError) as exc:
        raise PlanError(f"malformed plan: {exc}") from exc
    ids = [s.id for s in subs]
    if sorted(ids) != list(range(len(ids))):
        raise PlanError(f"subquestion ids must be dense from 0, got {sorted(ids)}")
    for sub in subs:
        if not sub.text.strip():
            raise PlanError(f"subquestion {sub.id} has empty text")
        if len(sub.text) > MAX_SUBQUESTION_CHARS:
            raise PlanError(f"subquestion {sub.id} exceeds {MAX_SUBQUESTION_CHARS} chars")
    id_set = set(ids)
    for a, b in deps:
        if a == b:
            raise PlanError(f"self-dependency on subquestion {a}")
        if a not in id_set or b not in id_set:
            raise PlanError(f"dependency ({a},{b}) references unknown subquestion")
    _check_acyclic(id_set, deps)
    return ReasoningPlan(subquestions=subs, deps=deps)


def _check_acyclic(ids: set[int], deps) -> None:
    sorter = TopologicalSorter({i: set() for i in ids})
    for a, b in deps:
        sorter.add(b, a)
    try:
        sorter.prepare()
    except _GraphlibCycleError as exc:
        cycle = exc.args[1] if len(exc.args) > 1 else "?"
        raise PlanCycleError(f"dependency cycle: {cycle}") from exc


def hasse_reduce(deps) -> frozenset[tuple[int, int]]:
    """Transitive reduction of an acyclic dependency relation.

    An edge (i, j) is dropped iff j is still reachable from i through a
    path of length >= 2. Raises PlanCycleError on cyclic input.
    """
    deps = {(int(a), int(b)) for a, b in deps}
    nodes = {n for pair in deps for n in pair}
    _check_acyclic(nodes, deps)
    succ: dict[int, set[int]] = {n: set() for n in nodes}
    for a, b in deps:
        succ[a].add(b)
    order = list(TopologicalSorter({n: {a for a, b in deps if b == n} for n in nodes}).static_order())
    reach: dict[int, set[int]] = {}
    for node in reversed(order):
        reach[node] = set(succ[node])
        for child in succ[node]:
            reach[node] |= reach[child]
    reduced = {
        (a, b)
        for a, b in deps
        if not any(b in reach[k] for k in succ[a] if k != b)
    }
    return frozenset(reduced)


@dataclass
class ReasoningDAG:
    """A plan with Hasse-reduced deps, its topological levels, and the
    answer-path pairs accumulated as levels complete."""

    plan: ReasoningPlan
    levels: list[list[int]]
    ap: dict[int, list] = field(default_factory=dict)
    completed_level: int = -1

    def is_complete(self) -> bool:
        return self.completed_level + 1 >= len(self.levels)

    def level_ids(self, level: int) -> list[int]:
        return list(self.levels[level])

    def level_of(self, sub_id: int) -> int:
        for level, ids in enumerate(self.levels):
            if sub_id in ids:
                return level
        raise PlanError(f"subquestion {sub_id} not in any level")

    def clone(self) -> "ReasoningDAG":
        return ReasoningDAG(
            plan=self.plan,
            levels=[list(ids) for ids in self.levels],
            ap={k: list(v) for k, v in self.ap.items()},
            completed_level=self.completed_level,
        )

    def digest(self) -> str:
        payload = {
            "plan": self.plan.to_dict(),
            "completed_level": self.completed_level,
            "answers": {
                str(k): sorted(p.answer for p in pairs)
                for k, pairs in self.ap.items()
            },
        }
        return hashlib.sha256(
            json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")
        ).hexdigest()[:16]


def compute_levels(plan: ReasoningPlan) -> list[list[int]]:
    """Longest-path stratification: level(v) = longest chain of deps into v."""
    preds: dict[int, set[int]] = {i: set() for i in plan.ids()}
    for a, b in plan.deps:
        preds[b].add(a)
    depth: dict[int, int] = {}
    for node in TopologicalSorter(preds).static_order():
        depth[node] = 1 + max((depth[p] for p in preds[node]), default=-1)
    n_levels = max(depth.values()) + 1 if depth else 0
    levels: list[list[int]] = [[] for _ in range(n_levels)]
    for node, lvl in depth.items():
        levels[lvl].append(node)
    return [sorted(ids) for ids in levels]


def build_reasoning_dag(plan: ReasoningPlan) -> ReasoningDAG:
    reduced = ReasoningPlan(
        subquestions=plan.subquestions, deps=hasse_reduce(plan.deps)
    )
    return ReasoningDAG(plan=reduced, levels=compute_levels(reduced))


# -- plan context graph ------------------------------------------------


class EmbeddingEntityScorer:
    """Memoized SE(v | q): cosine of the entity-description embedding and
    the question embedding. Entities with no description score 0."""

    def __init__(
        self,
        graph: KnowledgeHypergraph,
        desc_index: VectorIndex,
        question: str,
        gateway: OracleGateway,
        call_site: str = CALL_SITE,
    ) -> None:
        self.graph = graph
        self.desc_index = desc_index
        self.gateway = gateway
        self.question = question
        self._qvec: Optional[np.ndarray] = None
        self._cache: dict[str, float] = {}
        self.call_site = call_site

    def _question_vector(self) -> np.ndarray:
        if self._qvec is None:
            self._qvec = self.gateway.embed(self.question, self.call_site)
        return self._qvec

    def __call__(self, entity_id: str) -> float:
        if entity_id in self._cache:
            return self._cache[entity_id]
        entity = self.graph.entity(entity_id)
        if not entity.description:
            score = 0.0
        elif not self.desc_index.has(entity_id):
            log.warning("no description embedding for %r; scoring 0", entity_id)
            score = 0.0
        else:
            score = cosine_similarity(
                self.desc_index.vector(entity_id), self._question_vector()
            )
        self._cache[entity_id] = score
        return score


def score_hyperedge(
    graph: KnowledgeHypergraph,
    neighbor_id: str,
    edge_id: str,
    se: Callable[[str], float],
) -> float:
    """SH: mean entity relevance over the overlap of the two edges."""
    overlap = sorted(
        set(graph.edge(edge_id).entities) & set(graph.edge(neighbor_id).entities)
    )
    if not overlap:
        raise PlanError(
            f"hyperedges {edge_id!r} and {neighbor_id!r} do not overlap"
        )
    return float(np.mean([se(vid) for vid in overlap]))


@dataclass
class PlanContextGraph:
    graph: KnowledgeHypergraph
    layer_of: dict[str, int]
    score_of: dict[str, float]


def build_plan_context_graph(
    question_graph: KnowledgeHypergraph,
    topics: set[str],
    targets: set[str],
    se: Callable[[str], float],
    plan_depth: int,
    width: int = DEFAULT_SELECT_WIDTH,
) -> PlanContextGraph:
    """Relevance-pruned sketch: seeds are the target edges plus the edges
    incident to the topic entities; each exploration round keeps the top
    `width` neighbors per frontier edge by SH score."""
    seeds: set[str] = set(targets)
    for vid in topics:
        if vid in question_graph:
            seeds |= question_graph.incident_edges(vid)
    layer_of = {eid: 0 for eid in seeds}
    score_of = {eid: 1.0 for eid in seeds}
    frontier = set(seeds)
    for depth in range(1, plan_depth + 1):
        added: set[str] = set()
        for eid in sorted(frontier):
            scored = []
            for nid in sorted(question_graph.neighbors(eid)):
                sh = score_hyperedge(question_graph, nid, eid, se)
                scored.append((nid, sh))
            scored.sort(key=lambda item: (-item[1], item[0]))
            for nid, sh in scored[:width]:
                if nid not in layer_of:
                    layer_of[nid] = depth
                    score_of[nid] = sh
                    added.add(nid)
        frontier = added
        if not frontier:
            break
    return PlanContextGraph(
        graph=question_graph.induced_subgraph(layer_of) if layer_of
        else KnowledgeHypergraph({}, {}),
        layer_of=layer_of,
        score_of=score_of,
    )


def form_plan_context(
    context_graph: PlanContextGraph, budget: int = DEFAULT_CONTEXT_BUDGET
) -> str:
    """Deterministic layered rendering, nearest layers first, bounded by a
    character budget with lowest-layer, highest-score priority."""
    ordered = sorted(
        context_graph.layer_of,
        key=lambda eid: (
            context_graph.layer_of[eid],
            -context_graph.score_of.get(eid, 0.0),
            eid,
        ),
    )
    lines: list[str] = []
    total = 0
    for eid in ordered:
        edge = context_graph.graph.edge(eid)
        members = ", ".join(
            context_graph.graph.entity(vid).name for vid in edge.entities
        )
        line = f"{edge.name} [entities: {members}]"
        if total + len(line) + 1 > budget:
            break
        lines.append(line)
        total += len(line) + 1
    return "\n".join(lines)


def propose_initial_plans(
    question: str,
    topics: list[str],
    context: str,
    n_initial: int,
    gateway: OracleGateway,
) -> list[ReasoningPlan]:
    """Ask the plan oracle for up to n_initial validated plans.

    An invalid batch is re-asked once; persistently invalid plans are
    dropped. Raises NoFeasiblePlanError when nothing validates.
    """
    if n_initial < 1:
        raise ValueError("n_initial must be >= 1")
    payload = {
        "question": question,
        "topics": sorted(topics),
        "context": context,
        "count": n_initial,
    }
    plans = _validated_plans(payload, gateway)
    if not plans:
        plans = _validated_plans(payload, gateway)
    if not plans:
        raise NoFeasiblePlanError(f"no feasible plan for {question!r}")
    return plans[:n_initial]


def _validated_plans(payload: dict, gateway: OracleGateway) -> list[ReasoningPlan]:
    result = gateway.dispatch(
        OracleRequest(Kind.PLAN_PROPOSE, payload, CALL_SITE)
    )
    if result.get("refusal"):
        return []
    plans = []
    for raw in result["plans"]:
        try:
            plans.append(parse_plan(raw))
        except PlanError as exc:
            log.warning("dropping invalid proposed plan: %s", exc)
    return plans


def single_node_plan(question: str) -> ReasoningPlan:
    return parse_plan(
        {"subquestions": [{"id": 0, "text": question, "topics": []}], "deps": []}
    )
