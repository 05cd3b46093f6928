"""Final answer aggregation, judging, and evaluation metrics.

Each completed DAG is rendered level by level into an aggregated knowledge
block and answered by the candidate oracle; a judge then ranks candidates
by consistency with their reasoning and the top one becomes the final
answer. Metrics: token-level F1 (extractive-QA normalization), embedding
retrieval similarity, and an optional 0-100 judge score.
"""

from __future__ import annotations

import logging
import string
from collections import Counter
from dataclasses import dataclass
from typing import Optional

from .embeddings import cosine_similarity
from .graph import KnowledgeHypergraph
from .oracle import Kind, OracleError, OracleGateway, OracleRequest
from .planning import ReasoningDAG
from .retrieval import ChunkStore, fuse_knowledge

log = logging.getLogger(__name__)

CALL_SITE = "generation"

NO_EVIDENCE_DISCLAIMER = (
    "No supporting graph evidence was found; answer generated without retrieval."
)


@dataclass
class CandidateAnswer:
    answer: str
    source_dag_digest: str
    aggregated_context: str
    reasoning: str = ""


@dataclass
class FinalAnswer:
    answer: str
    candidates: list[CandidateAnswer]
    no_evidence: bool = False


def aggregate_dag_knowledge(
    dag: ReasoningDAG,
    graph: KnowledgeHypergraph,
    chunk_store: Optional[ChunkStore] = None,
    lite_mode: bool = False,
    budget: int = 8000,
) -> str:
    """Render a completed DAG as per-level, per-subquestion blocks.

    Order is (level, subquestion id); truncation keeps the lowest levels.
    """
    blocks: list[str] = []
    for level_index, sub_ids in enumerate(dag.levels):
        for sub_id in sub_ids:
            sub = dag.plan.subquestion(sub_id)
            for pair in dag.ap.get(sub_id, []):
                context = fuse_knowledge(
                    pair.path, graph, chunk_store, lite_mode=lite_mode
                )
                blocks.append(
                    f"[level {level_index}] {sub.text}\n"
                    f"answer: {pair.answer}\n"
                    f"{context}"
                )
    out: list[str] = []
    total = 0
    for block in blocks:
        if total + len(block) + 2 > budget:
            break
        out.append(block)
        total += len(block) + 2
    return "\n\n".join(out)


def _step_answers_in_order(dag: ReasoningDAG) -> list[str]:
    answers = []
    for sub_ids in dag.levels:
        for sub_id in sub_ids:
            for pair in dag.ap.get(sub_id, []):
                answers.append(pair.answer)
    return answers


def generate_final_answer(
    question: str,
    completed: list[ReasoningDAG],
    graph: KnowledgeHypergraph,
    gateway: OracleGateway,
    chunk_store: Optional[ChunkStore] = None,
    lite_mode: bool = False,
) -> FinalAnswer:
    """One candidate per completed DAG, judged; empty input falls back to an
    oracle-only answer flagged as lacking graph evidence."""
    candidates: list[CandidateAnswer] = []
    for dag in completed:
        context = aggregate_dag_knowledge(dag, graph, chunk_store, lite_mode)
        payload = {
            "question": question,
            "context": context,
            "answers": _step_answers_in_order(dag),
        }
        try:
            result = gateway.dispatch(
                OracleRequest(Kind.CANDIDATE_ANSWER, payload, CALL_SITE)
            )
        except OracleError as exc:
            log.warning("candidate generation failed: %s", exc)
            continue
        if result.get("refusal"):
            continue
        candidates.append(
            CandidateAnswer(
                answer=result["answer"],
                source_dag_digest=dag.digest(),
                aggregated_context=context,
                reasoning=str(result.get("reasoning", "")),
            )
        )

    if not candidates:
        return _no_evidence_answer(question, gateway)

    if len(candidates) > 1:
        payload = {
            "question": question,
            "candidates": [c.answer for c in candidates],
        }
        order = list(range(len(candidates)))
        try:
            result = gateway.dispatch(
                OracleRequest(Kind.FINAL_JUDGE, payload, CALL_SITE)
            )
            ranking = [
                i for i in result["ranking"] if isinstance(i, int) and 0 <= i < len(candidates)
            ]
            if ranking:
                order = ranking + [i for i in order if i not in ranking]
        except OracleError as exc:
            log.warning("judging failed; keeping candidate order: %s", exc)
        candidates = [candidates[i] for i in order]

    return FinalAnswer(answer=candidates[0].answer, candidates=candidates)


def _no_evidence_answer(question: str, gateway: OracleGateway) -> FinalAnswer:
    payload = {"question": question, "context": "", "answers": []}
    answer = NO_EVIDENCE_DISCLAIMER
    try:
        result = gateway.dispatch(
            OracleRequest(Kind.CANDIDATE_ANSWER, payload, CALL_SITE)
        )
        if not result.get("refusal"):
            answer = result["answer"]
    except OracleError as exc:
        log.warning("no-evidence answering failed: %s", exc)
    return FinalAnswer(answer=answer, candidates=[], no_evidence=True)


# -- metrics -----------------------------------------------------------

_ARTICLES = {"a", "an", "the"}
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def _normalize_answer(text: str) -> list[str]:
    text = text.casefold().translate(_PUNCT_TABLE)
    return [tok for tok in text.split() if tok not in _ARTICLES]


def f1_score(prediction: str, gold: str) -> float:
    """Token-multiset F1 with extractive-QA normalization."""
    pred = Counter(_normalize_answer(prediction))
    ref = Counter(_normalize_answer(gold))
    if not pred and not ref:
        return 1.0
    if not pred or not ref:
        return 0.0
    common = sum((pred & ref).values())
    if common == 0:
        return 0.0
    precision = common / sum(pred.values())
    recall = common / sum(ref.values())
    return 2 * precision * recall / (precision + recall)


def retrieval_similarity(
    retrieved_context: str, gold_context: str, gateway: OracleGateway
) -> float:
    """Embedding cosine of the two context texts, clamped to [0, 1]."""
    if not retrieved_context.strip() or not gold_context.strip():
        return 0.0
    a = gateway.embed(retrieved_context, CALL_SITE)
    b = gateway.embed(gold_context, CALL_SITE)
    return max(0.0, min(1.0, cosine_similarity(a, b)))


def generation_eval(
    question: str,
    answer: str,
    gold: str,
    gateway: Optional[OracleGateway],
) -> Optional[float]:
    """0-100 judge quality score; None (never faked) when no judge."""
    if gateway is None:
        return None
    payload = {"question": question, "answer": answer, "gold": gold}
    try:
        result = gateway.dispatch(
            OracleRequest(Kind.FINAL_JUDGE, payload, CALL_SITE)
        )
    except OracleError as exc:
        log.warning("generation evaluation failed: %s", exc)
        return None
    score = result.get("score")
    if score is None:
        return None
    return float(score)


@dataclass
class EvalResult:
    f1: float
    rs: Optional[float] = None
    ge: Optional[float] = None

    def to_dict(self) -> dict:
        return {"f1": self.f1, "rs": self.rs, "ge": self.ge}
