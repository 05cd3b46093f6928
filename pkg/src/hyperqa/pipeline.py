"""End-to-end query orchestration: anchor, sketch, plan, search, answer.

Keeps module boundaries thin: this is the only place that wires the
anchoring, planning, reasoning, retrieval, and generation stages together
and assembles the run manifest.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from typing import Optional

from . import __version__
from .anchoring import AnchorSet, anchor_question, build_question_subgraph
from .config import RunConfig
from .embeddings import IndexSet
from .generation import FinalAnswer, generate_final_answer
from .graph import KnowledgeHypergraph
from .oracle import OracleGateway
from .planning import (
    EmbeddingEntityScorer,
    NoFeasiblePlanError,
    ReasoningDAG,
    build_plan_context_graph,
    build_reasoning_dag,
    form_plan_context,
    propose_initial_plans,
    single_node_plan,
)
from .reasoning import SearchStats, TraceRecord, reason
from .retrieval import ChunkStore, retrieve_answers_with_paths


def graph_digest(graph: KnowledgeHypergraph) -> str:
    return hashlib.sha256(
        json.dumps(graph.to_dict(), sort_keys=True, ensure_ascii=False).encode("utf-8")
    ).hexdigest()[:16]


@dataclass
class QueryOutcome:
    answer: str
    no_evidence: bool
    anchors: AnchorSet
    initial_dags: list[ReasoningDAG]
    completed_dags: list[ReasoningDAG]
    stats: SearchStats
    trace: list[TraceRecord]
    retrieved_context: str
    manifest: dict = field(default_factory=dict)


def run_query(
    graph: KnowledgeHypergraph,
    indexes: IndexSet,
    question: str,
    config: RunConfig,
    gateway: OracleGateway,
    chunk_store: Optional[ChunkStore] = None,
) -> QueryOutcome:
    started = time.monotonic()
    anchors = anchor_question(
        question, indexes, config.anchor_config(), gateway
    )
    subgraph = build_question_subgraph(graph, anchors, config.subgraph_hops)
    question_graph = subgraph.graph

    if anchors.is_empty() or not question_graph.num_edges():
        final = generate_final_answer(
            question, [], question_graph, gateway, chunk_store, config.lite_mode
        )
        return _finish(
            question, config, graph, anchors, [], [], SearchStats(), [], final,
            started, gateway,
        )

    hq_indexes = IndexSet.build(
        question_graph, lambda text: gateway.embed(text, "embed-index")
    )
    topics = {
        subgraph.canonical(vid)
        for vid in anchors.topics
        if subgraph.canonical(vid) in question_graph
    }
    targets = {eid for eid in anchors.targets if eid in question_graph.hyperedges}

    se = EmbeddingEntityScorer(
        question_graph, hq_indexes.descriptions, question, gateway
    )
    context_graph = build_plan_context_graph(
        question_graph,
        topics,
        targets,
        se,
        config.plan_depth,
        config.plan_select_width,
    )
    context = form_plan_context(context_graph, config.context_budget)

    try:
        plans = propose_initial_plans(
            question, sorted(topics), context, config.n_initial_plans, gateway
        )
    except NoFeasiblePlanError:
        plans = [single_node_plan(question)]
    initial_dags = [build_reasoning_dag(plan) for plan in plans]

    retrieval_cfg = config.retrieval_config()
    cache: dict[str, tuple[list, Optional[int]]] = {}

    def retrieve(subquestion: str):
        if subquestion not in cache:
            result = retrieve_answers_with_paths(
                question_graph,
                subquestion,
                retrieval_cfg,
                gateway,
                hq_indexes,
                chunk_store,
            )
            cache[subquestion] = (result.pairs, result.depth)
        return cache[subquestion]

    completed, stats, trace = reason(
        initial_dags,
        retrieve,
        gateway,
        config.max_solutions,
        config.strategy,
        config.branch_cap,
    )
    final = generate_final_answer(
        question, completed, question_graph, gateway, chunk_store, config.lite_mode
    )
    return _finish(
        question, config, graph, anchors, initial_dags, completed, stats, trace,
        final, started, gateway,
    )


def _finish(
    question: str,
    config: RunConfig,
    graph: KnowledgeHypergraph,
    anchors: AnchorSet,
    initial_dags: list[ReasoningDAG],
    completed: list[ReasoningDAG],
    stats: SearchStats,
    trace: list[TraceRecord],
    final: FinalAnswer,
    started: float,
    gateway: OracleGateway,
) -> QueryOutcome:
    retrieved_context = final.candidates[0].aggregated_context if final.candidates else ""
    manifest = {
        "version": __version__,
        "question": question,
        "config": config.to_dict(),
        "config_hash": config.digest(),
        "graph_hash": graph_digest(graph),
        "anchors": {
            "topics": sorted(anchors.topics),
            "targets": sorted(anchors.targets),
            "keywords": list(anchors.keyword_list),
            "relaxed": anchors.relaxed,
        },
        "initial_plans": [dag.plan.to_dict() for dag in initial_dags],
        "completed_dags": [dag.plan.to_dict() for dag in completed],
        "answer": final.answer,
        "no_evidence": final.no_evidence,
        "search_stats": {
            "states_visited": stats.states_visited,
            "peak_frontier_width": stats.peak_frontier_width,
            "peak_depth": stats.peak_depth,
            "mean_retrieval_depth": stats.mean_retrieval_depth,
        },
        "usage": gateway.usage_report(),
        # Wall-clock timing is nondeterministic; omitted in deterministic
        # runs so manifests are byte-comparable.
        "timing_seconds": None
        if config.deterministic
        else round(time.monotonic() - started, 3),
    }
    return QueryOutcome(
        answer=final.answer,
        no_evidence=final.no_evidence,
        anchors=anchors,
        initial_dags=initial_dags,
        completed_dags=completed,
        stats=stats,
        trace=trace,
        retrieved_context=retrieved_context,
        manifest=manifest,
    )
