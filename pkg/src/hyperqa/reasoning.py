"""State-space search over partially completed reasoning DAGs.

Each state is a DAG plus the index of the next level to resolve. Expanding
a state retrieves answer-path pairs for every subquestion in that level,
enumerates joint assignments (one pair per subquestion), and produces one
successor per assignment via oracle-driven DAG refinement. DFS pops newest
states first, BFS oldest; both stop after K completed DAGs.
"""

from __future__ import annotations

import itertools
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .oracle import Kind, OracleError, OracleGateway, OracleRequest
from .planning import (
    PlanError,
    ReasoningDAG,
    ReasoningPlan,
    compute_levels,
    hasse_reduce,
    parse_plan,
)
from .retrieval import AnswerPathPair

log = logging.getLogger(__name__)

CALL_SITE = "reasoning"

DEFAULT_BRANCH_CAP = 6

# retrieve_fn(subquestion_text) -> (pairs, stop_depth)
RetrieveFn = Callable[[str], tuple[list[AnswerPathPair], Optional[int]]]


@dataclass
class SearchStats:
    states_visited: int = 0
    peak_frontier_width: int = 0
    peak_depth: int = 0
    retrieval_depths: list[int] = field(default_factory=list)

    @property
    def mean_retrieval_depth(self) -> Optional[float]:
        if not self.retrieval_depths:
            return None
        return sum(self.retrieval_depths) / len(self.retrieval_depths)


def joint_assignments(
    level_pairs: dict[int, list[AnswerPathPair]],
    branch_cap: int = DEFAULT_BRANCH_CAP,
) -> list[dict[int, AnswerPathPair]]:
    """Cartesian product of per-subquestion answer-path choices.

    Deterministic order: subquestions ascending by id, pairs by (answer,
    path). Any empty choice set kills the state (returns []). Products
    beyond the branch cap are dropped lowest-total-path-score first.
    """
    if not level_pairs or any(not pairs for pairs in level_pairs.values()):
        return []
    sub_ids = sorted(level_pairs)
    ordered = [
        sorted(level_pairs[sid], key=lambda p: (p.answer, p.path.edges))
        for sid in sub_ids
    ]
    assignments = [
        dict(zip(sub_ids, combo)) for combo in itertools.product(*ordered)
    ]
    if len(assignments) > branch_cap:
        indexed = sorted(
            enumerate(assignments),
            key=lambda item: (-sum(p.score for p in item[1].values()), item[0]),
        )[:branch_cap]
        assignments = [a for _, a in sorted(indexed, key=lambda item: item[0])]
    return assignments


def refine_dag(
    dag: ReasoningDAG,
    assignment: dict[int, AnswerPathPair],
    gateway: OracleGateway,
) -> ReasoningDAG:
    """Produce the successor DAG after a joint assignment.

    The refinement oracle may rewrite, add, or remove not-yet-completed
    subquestions; completed ones (and the deps among them) are immutable.
    A refusal or an invalid proposal (after one re-ask) degrades to a plain
    advance with the future levels unchanged.
    """
    current_level = dag.completed_level + 1
    if sorted(assignment) != dag.level_ids(current_level):
        raise PlanError("assignment must cover exactly the current level")

    successor = dag.clone()
    for sub_id, pair in assignment.items():
        successor.ap[sub_id] = [pair]
    successor.completed_level = current_level

    payload = {
        "question": None,
        "subquestions": [
            {"id": s.id, "text": s.text, "topics": list(s.topics)}
            for s in dag.plan.subquestions
        ],
        "deps": sorted(list(d) for d in dag.plan.deps),
        "answers": {
            str(sid): pairs[0].answer for sid, pairs in successor.ap.items()
        },
    }
    proposal = _ask_refinement(payload, gateway)
    if proposal is None:
        return successor

    merged = _merge_refinement(successor, proposal)
    if merged is None:
        proposal = _ask_refinement(payload, gateway)
        merged = _merge_refinement(successor, proposal) if proposal else None
    if merged is None:
        log.warning("refinement rejected; advancing with unchanged future levels")
        return successor
    return merged


def _ask_refinement(payload: dict, gateway: OracleGateway) -> Optional[ReasoningPlan]:
    try:
        result = gateway.dispatch(OracleRequest(Kind.PLAN_REFINE, payload, CALL_SITE))
    except OracleError as exc:
        log.warning("refinement call failed: %s", exc)
        return None
    if result.get("refusal"):
        return None
    try:
        return parse_plan(result["plan"])
    except PlanError as exc:
        log.warning("invalid refinement proposal: %s", exc)
        return None


def _merge_refinement(
    advanced: ReasoningDAG, proposal: ReasoningPlan
) -> Optional[ReasoningDAG]:
    """Validate and apply a refinement on the already-advanced successor."""
    completed_ids = {
        sid
        for level in advanced.levels[: advanced.completed_level + 1]
        for sid in level
    }
    old_subs = {s.id: s for s in advanced.plan.subquestions}
    new_subs = {s.id: s for s in proposal.subquestions}
    for sid in completed_ids:
        if new_subs.get(sid) != old_subs[sid]:
            return None
    old_completed_deps = {
        (a, b) for a, b in advanced.plan.deps if a in completed_ids and b in completed_ids
    }
    new_completed_deps = {
        (a, b) for a, b in proposal.deps if a in completed_ids and b in completed_ids
    }
    if old_completed_deps != new_completed_deps:
        return None
    try:
        plan = ReasoningPlan(
            subquestions=proposal.subquestions, deps=hasse_reduce(proposal.deps)
        )
        levels = compute_levels(plan)
    except PlanError:
        return None
    # Completed subquestions must keep their stratification.
    for level_index, ids in enumerate(advanced.levels[: advanced.completed_level + 1]):
        if levels[level_index] != ids:
            return None
    merged = ReasoningDAG(
        plan=plan,
        levels=levels,
        ap={k: list(v) for k, v in advanced.ap.items()},
        completed_level=advanced.completed_level,
    )
    return merged


@dataclass
class TraceRecord:
    dag_digest: str
    level: int
    action: str
    frontier_width: int

    def to_dict(self) -> dict:
        return {
            "dag_digest": self.dag_digest,
            "level": self.level,
            "action": self.action,
            "frontier_width": self.frontier_width,
        }


def reason(
    initial_dags: list[ReasoningDAG],
    retrieve: RetrieveFn,
    gateway: OracleGateway,
    max_solutions: int,
    strategy: str = "dfs",
    branch_cap: int = DEFAULT_BRANCH_CAP,
) -> tuple[list[ReasoningDAG], SearchStats, list[TraceRecord]]:
    """Search for up to `max_solutions` completed DAGs."""
    if max_solutions < 1:
        raise ValueError("max_solutions must be >= 1")
    if strategy not in ("dfs", "bfs"):
        raise ValueError(f"unknown strategy {strategy!r}")

    frontier: deque[tuple[ReasoningDAG, int]] = deque(
        (dag, 0) for dag in initial_dags
    )
    completed: list[ReasoningDAG] = []
    stats = SearchStats(peak_frontier_width=len(frontier))
    trace: list[TraceRecord] = []

    while frontier and len(completed) < max_solutions:
        dag, tree_depth = frontier.pop() if strategy == "dfs" else frontier.popleft()
        stats.states_visited += 1
        stats.peak_depth = max(stats.peak_depth, tree_depth)
        level = dag.completed_level + 1

        if dag.is_complete():
            completed.append(dag)
            trace.append(TraceRecord(dag.digest(), level, "complete", len(frontier)))
            continue

        level_pairs: dict[int, list[AnswerPathPair]] = {}
        dead = False
        for sub_id in dag.level_ids(level):
            pairs, depth = retrieve(dag.plan.subquestion(sub_id).text)
            if depth is not None:
                stats.retrieval_depths.append(depth)
            if not pairs:
                dead = True
                break
            level_pairs[sub_id] = pairs
        if dead:
            trace.append(TraceRecord(dag.digest(), level, "pruned", len(frontier)))
            continue

        for assignment in joint_assignments(level_pairs, branch_cap):
            successor = refine_dag(dag, assignment, gateway)
            frontier.append((successor, tree_depth + 1))
        stats.peak_frontier_width = max(stats.peak_frontier_width, len(frontier))
        trace.append(TraceRecord(dag.digest(), level, "expanded", len(frontier)))

    return completed, stats, trace
