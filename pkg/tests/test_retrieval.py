"""Unit tests for entity weighting, beam selection, fusion, and retrieval."""

import pytest

from hyperqa.anchoring import AnchorConfig
from hyperqa.embeddings import IndexSet
from hyperqa.graph import ReasoningPath
from hyperqa.oracle import Fixtures
from hyperqa.retrieval import (
    AnswerPathPair,
    ChunkStore,
    EntityWeigher,
    RetrievalConfig,
    ScoredDirection,
    ewo_score,
    fuse_knowledge,
    path_score,
    rank_directions,
    retrieve_answers_with_paths,
    select_directions,
    select_paths,
)

from conftest import make_gateway


class _FixedSE:
    """Stand-in embedding scorer returning fixed per-entity values."""

    def __init__(self, scores):
        self.scores = scores

    def __call__(self, entity_id):
        return self.scores.get(entity_id, 0.0)


def _weigher(graph, scores, lite=True, theta=0.5, fixtures=None):
    return EntityWeigher(
        graph,
        _FixedSE(scores),
        make_gateway(fixtures),
        "the question",
        theta_emb=theta,
        lite_mode=lite,
    )


def test_answer_path_pair_requires_answer():
    with pytest.raises(ValueError):
        AnswerPathPair(answer="", path=ReasoningPath(("e0",)), context_digest="x")


def test_scored_direction_terminal_check():
    with pytest.raises(ValueError):
        ScoredDirection(path=ReasoningPath(("e0", "e1")), terminal="e0", ewo=0.5)


def test_retrieval_config_validation():
    with pytest.raises(ValueError):
        RetrievalConfig(d_max=0)
    with pytest.raises(ValueError):
        RetrievalConfig(beam_width=0)
    RetrievalConfig(beam_width=None)  # unbounded is legal


def test_entity_weight_gate_and_lite_identity(t1):
    ew = _weigher(t1, {"A": 0.8, "B": 0.3})
    assert ew("A") == pytest.approx(0.8)  # lite: identity above the gate
    assert ew("B") == 0.0  # below the gate
    assert ew("C") == 0.0


def test_entity_weight_full_mode_consults_oracle(t1):
    fixtures = Fixtures(
        entity_scores=[{"entity": "A", "pattern": "question", "score": 0.6}]
    )
    ew = _weigher(t1, {"A": 0.9}, lite=False, fixtures=fixtures)
    assert ew("A") == pytest.approx(0.6)
    assert ew.oracle_calls == 1
    ew("A")  # memoized: no second oracle call
    assert ew.oracle_calls == 1


def test_ewo_mean_over_overlap(t1):
    # e1={B,C,D} vs e2={D,E}: overlap {D}.
    ew = {"B": 0.8, "C": 0.0, "D": 0.2, "E": 1.0}.get
    assert ewo_score(t1, "e2", "e1", ew) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        ewo_score(t1, "e2", "e0", ew)


def test_path_score_distinct_entities(t1):
    # Path [e0, e1] covers {A, B, C, D}.
    ew = {"A": 1.0, "B": 0.5, "C": 0.5, "D": 0.0}.get
    assert path_score(t1, ReasoningPath(("e0", "e1")), ew) == pytest.approx(0.5)


def test_rank_directions_deterministic_order():
    d1 = ScoredDirection(ReasoningPath(("a", "b")), "b", 0.5)
    d2 = ScoredDirection(ReasoningPath(("a", "c")), "c", 0.5)
    d3 = ScoredDirection(ReasoningPath(("a", "d")), "d", 0.9)
    assert rank_directions([d2, d1, d3]) == [d3, d1, d2]


def test_select_directions_lite_and_unbounded(t1, gateway):
    dirs = [
        ScoredDirection(ReasoningPath(("e0", f"x{i}")), f"x{i}", i / 10)
        for i in range(6)
    ]
    assert len(select_directions(dirs, "q", None, gateway, t1, True)) == 6
    picked = select_directions(dirs, "q", 2, gateway, t1, True)
    assert [d.terminal for d in picked] == ["x5", "x4"]


def test_select_directions_full_uses_oracle(t1):
    fixtures = Fixtures(directions=[{"pattern": "toward", "prefer": ["edge DE"]}])
    gw = make_gateway(fixtures)
    dirs = [
        ScoredDirection(ReasoningPath(("e0", "e1")), "e1", 0.9),
        ScoredDirection(ReasoningPath(("e3", "e2")), "e2", 0.1),
    ]
    picked = select_directions(dirs, "go toward the end", 1, gw, t1, False)
    assert len(picked) == 1
    assert picked[0].path.edges == ("e3", "e2")  # oracle preferred "edge DE"


def test_select_paths_lite_median(t1):
    sp = {("e0",): 0.9, ("e1",): 0.5, ("e2",): 0.1}

    def score(path):
        return sp[path.edges]

    paths = [ReasoningPath((e,)) for e in ("e0", "e1", "e2")]
    chosen = select_paths(paths, "q", make_gateway(), t1, score, True, 5)
    assert {p.edges for p in chosen} == {("e0",), ("e1",)}  # >= median 0.5


def test_select_paths_full_fixture(t1):
    fixtures = Fixtures(
        paths=[{"pattern": "which", "require": ["edge bcd"], "answer": "ignored"}]
    )
    gw = make_gateway(fixtures)
    paths = [ReasoningPath(("e0",)), ReasoningPath(("e1",))]
    chosen = select_paths(paths, "which one", gw, t1, lambda p: 0.5, False, 5)
    assert [p.edges for p in chosen] == [("e1",)]


def test_select_paths_empty_candidates(t1, gateway):
    assert select_paths([], "q", gateway, t1, lambda p: 0.0, True, 5) == []


def test_fuse_knowledge_lite_names_only(t1):
    assert fuse_knowledge(ReasoningPath(("e0",)), t1, lite_mode=True) == "edge AB"


def test_fuse_knowledge_full_includes_descriptions_and_chunks():
    from hyperqa.construction import FactRecord, ingest_facts

    graph = ingest_facts(
        [
            FactRecord(
                edge_name="r1",
                entity_names=("X", "Y"),
                entity_descriptions={"X": "desc of X"},
                chunk_id="shared",
            ),
            FactRecord(
                edge_name="r2",
                entity_names=("Y", "Z"),
                entity_descriptions={},
                chunk_id="shared",
            ),
        ]
    )
    store = ChunkStore(chunks={"shared": "the shared chunk text"})
    text = fuse_knowledge(ReasoningPath(("e0", "e1")), graph, store)
    assert "r1" in text and "r2" in text
    assert "X: desc of X" in text
    assert text.count("the shared chunk text") == 1  # deduplicated


def test_fuse_knowledge_budget_drops_low_weight_entities(t1):
    ew = {"A": 0.9, "B": 0.1}.get
    full = fuse_knowledge(ReasoningPath(("e0",)), t1, ew=lambda v: ew(v) or 0.0)
    assert "entity A" in full and "entity B" in full
    squeezed = fuse_knowledge(
        ReasoningPath(("e0",)),
        t1,
        ew=lambda v: ew(v) or 0.0,
        budget=len("edge AB\nA: entity A") + 1,
    )
    assert "entity A" in squeezed and "entity B" not in squeezed


def test_chunk_store_directory(tmp_path):
    (tmp_path / "c7.txt").write_text("chunk body", "utf-8")
    store = ChunkStore(directory=tmp_path)
    assert store.get("c7") == "chunk body"
    assert store.get("missing") is None


def test_retrieve_deepens_to_two_edge_path(accounting_graph, accounting_fixtures):
    gw = make_gateway(accounting_fixtures)
    indexes = IndexSet.build(
        accounting_graph, lambda t: gw.embed(t, "embed-index")
    )
    cfg = RetrievalConfig()
    result = retrieve_answers_with_paths(
        accounting_graph,
        "For which reporting purposes are GAAP-governed documents required?",
        cfg,
        gw,
        indexes,
    )
    assert result.depth == 2
    assert len(result.pairs) == 1
    pair = result.pairs[0]
    assert pair.answer == "Financial and tax reporting purposes"
    assert len(pair.path) == 2
    assert accounting_graph.is_connected_path(pair.path)


def test_retrieve_single_edge_at_depth_one(accounting_graph, accounting_fixtures):
    gw = make_gateway(accounting_fixtures)
    indexes = IndexSet.build(accounting_graph, lambda t: gw.embed(t, "embed-index"))
    result = retrieve_answers_with_paths(
        accounting_graph,
        "What does GAAP stand for and govern?",
        RetrievalConfig(),
        gw,
        indexes,
    )
    assert result.depth == 1
    assert result.pairs[0].answer == "Generally Accepted Accounting Principles"
    assert len(result.pairs[0].path) == 1


def test_retrieve_unanchorable_question_returns_empty(accounting_graph, accounting_fixtures):
    gw = make_gateway(accounting_fixtures)
    indexes = IndexSet.build(accounting_graph, lambda t: gw.embed(t, "embed-index"))
    result = retrieve_answers_with_paths(
        accounting_graph,
        "zzz qqq completely foreign words",
        RetrievalConfig(anchor=AnchorConfig(theta_v=0.99, theta_e=0.99)),
        gw,
        indexes,
    )
    assert result.pairs == []
    assert result.depth is None
