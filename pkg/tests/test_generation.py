"""Unit tests for answer aggregation, judging, and evaluation metrics."""

import pytest

from hyperqa.graph import ReasoningPath
from hyperqa.oracle import Fixtures
from hyperqa.planning import build_reasoning_dag, parse_plan
from hyperqa.reasoning import refine_dag
from hyperqa.retrieval import AnswerPathPair
from hyperqa.generation import (
    NO_EVIDENCE_DISCLAIMER,
    aggregate_dag_knowledge,
    f1_score,
    generate_final_answer,
    generation_eval,
    retrieval_similarity,
)

from conftest import make_gateway


def _completed_dag(t1, gateway):
    plan = parse_plan(
        {
            "subquestions": [{"id": 0, "text": "first hop"}, {"id": 1, "text": "second hop"}],
            "deps": [[0, 1]],
        }
    )
    dag = build_reasoning_dag(plan)
    dag = refine_dag(
        dag,
        {0: AnswerPathPair(answer="step zero", path=ReasoningPath(("e0",)), context_digest="x")},
        gateway,
    )
    dag = refine_dag(
        dag,
        {1: AnswerPathPair(answer="step one", path=ReasoningPath(("e1",)), context_digest="y")},
        gateway,
    )
    assert dag.is_complete()
    return dag


def test_aggregate_orders_by_level(t1, gateway):
    dag = _completed_dag(t1, gateway)
    text = aggregate_dag_knowledge(dag, t1)
    assert text.index("[level 0]") < text.index("[level 1]")
    assert "answer: step zero" in text
    assert "edge BCD" in text  # fused context of the level-1 path


def test_aggregate_budget_keeps_lowest_levels(t1, gateway):
    dag = _completed_dag(t1, gateway)
    full = aggregate_dag_knowledge(dag, t1)
    first_block = full.split("\n\n")[0]
    truncated = aggregate_dag_knowledge(dag, t1, budget=len(first_block) + 2)
    assert truncated == first_block


def test_generate_final_answer_single_candidate(t1, gateway):
    dag = _completed_dag(t1, gateway)
    final = generate_final_answer("overall question", [dag], t1, gateway)
    # Mock falls back to the last resolved step answer.
    assert final.answer == "step one"
    assert not final.no_evidence
    assert len(final.candidates) == 1
    assert final.candidates[0].source_dag_digest == dag.digest()


def test_generate_final_answer_judged_ranking(t1):
    fixtures = Fixtures(
        answers=[{"pattern": "overall", "answer": "fixture answer"}],
        judge=[{"pattern": "overall", "prefer": "fixture answer"}],
    )
    gw = make_gateway(fixtures)
    dag_a = _completed_dag(t1, gw)
    final = generate_final_answer("overall question", [dag_a, dag_a], t1, gw)
    assert final.answer == "fixture answer"
    assert len(final.candidates) == 2


def test_generate_final_answer_no_evidence(t1, gateway):
    final = generate_final_answer("mystery question", [], t1, gateway)
    assert final.no_evidence
    assert final.candidates == []
    assert final.answer == NO_EVIDENCE_DISCLAIMER


def test_f1_worked_example():
    # P = 2/3, R = 1 -> F1 = 0.8.
    assert f1_score("financial statements required", "financial statements") == pytest.approx(0.8)


def test_f1_boundaries():
    assert f1_score("", "") == 1.0
    assert f1_score("", "gold") == 0.0
    assert f1_score("pred", "") == 0.0
    assert f1_score("apple", "banana") == 0.0
    assert f1_score("The  Answer!", "answer") == pytest.approx(1.0)


def test_f1_is_symmetric_in_multisets():
    assert f1_score("a b b", "b b a") == pytest.approx(1.0)
    assert f1_score("a a b", "a b") == pytest.approx(f1_score("a b", "a a b"))


def test_retrieval_similarity_identity(gateway):
    assert retrieval_similarity("same context", "same context", gateway) == pytest.approx(1.0)


def test_retrieval_similarity_empty(gateway):
    assert retrieval_similarity("", "gold", gateway) == 0.0
    assert retrieval_similarity("got", "", gateway) == 0.0


def test_generation_eval_scores(gateway):
    assert generation_eval("q", "exact match", "Exact Match", gateway) == 100.0
    assert generation_eval("q", "", "gold", gateway) == 0.0
    assert generation_eval("q", "a", "gold", None) is None
