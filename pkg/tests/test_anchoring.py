"""Unit tests for question anchoring, synonym merging, and subgraphs."""

import numpy as np
import pytest

from hyperqa.anchoring import (
    AnchorConfig,
    AnchorSet,
    anchor_question,
    build_question_subgraph,
    extract_keywords,
    link_topic_entities,
    merge_synonyms,
)
from hyperqa.embeddings import IndexSet
from hyperqa.graph import SYNONYM, Entity, GraphBuilder
from hyperqa.oracle import Fixtures, MockBackend, OracleGateway

from conftest import make_gateway


def _indexes(graph, seed=0):
    backend = MockBackend(seed=seed)
    return IndexSet.build(graph, lambda t: np.asarray(backend.embed_text(t)))


def test_anchor_config_validation():
    with pytest.raises(ValueError):
        AnchorConfig(theta_v=1.5)
    with pytest.raises(ValueError):
        AnchorConfig(d_max_hops=-1)


def test_extract_keywords_requires_question(gateway):
    with pytest.raises(ValueError):
        extract_keywords("   ", gateway)


def test_extract_keywords_uses_fixture():
    fixtures = Fixtures(keywords=[{"pattern": "capital", "keywords": ["France", "Paris"]}])
    gw = make_gateway(fixtures)
    assert extract_keywords("What is the capital of France?", gw) == ["France", "Paris"]


def test_extract_keywords_survives_oracle_failure():
    class _Failing:
        def handle(self, kind, payload):
            from hyperqa.oracle import OracleBackendError

            raise OracleBackendError("down")

    gw = OracleGateway(_Failing(), max_attempts=1)
    assert extract_keywords("anything", gw) == []


def test_link_topic_entities_exact_name(t1, gateway):
    indexes = _indexes(t1)
    topics = link_topic_entities(["A"], indexes.names, 0.99, 3, gateway)
    assert "A" in topics


def test_anchor_question_relaxation(t1):
    # Nothing matches at the strict thresholds for a nonsense question, so
    # both thresholds back off by 0.1 exactly once.
    gw = make_gateway()
    indexes = _indexes(t1)
    strict = AnchorConfig(theta_v=0.999, theta_e=0.999)
    anchors = anchor_question("completely unrelated xyzzy", indexes, strict, gw)
    assert anchors.relaxed or not anchors.is_empty()


def test_anchor_question_hits_exact_entity(t1):
    fixtures = Fixtures(keywords=[{"pattern": "about", "keywords": ["A"]}])
    gw = make_gateway(fixtures)
    anchors = anchor_question("tell me about it", _indexes(t1), AnchorConfig(), gw)
    assert "A" in anchors.topics
    assert not anchors.relaxed


def _synonym_graph():
    builder = GraphBuilder()
    builder.add_entity(Entity(id="USA", name="USA", description="short"))
    builder.add_entity(
        Entity(id="United States", name="United States", description="the longer description")
    )
    builder.add_entity(Entity(id="Paris", name="Paris", description="city"))
    builder.add_edge("capital", ["USA", "Paris"])
    builder.add_edge("country", ["United States", "Paris"])
    builder.add_edge("Synonyms: USA | United States", ["USA", "United States"], kind=SYNONYM)
    return builder.build()


def test_merge_synonyms_picks_longest_description():
    merged, merge_map = merge_synonyms(_synonym_graph())
    assert merge_map["USA"] == "United States"
    assert merge_map["United States"] == "United States"
    assert "USA" not in merged.entities
    canon = merged.entity("United States")
    assert canon.merged_descriptions == ("short",)
    # Fact edges rewritten; synonym edge dropped.
    assert all(e.kind != SYNONYM for e in merged.hyperedges.values())
    for edge in merged.hyperedges.values():
        assert "USA" not in edge.entities


def test_merge_synonyms_dedupes_rewritten_edges():
    builder = GraphBuilder()
    for name in ("a", "b", "c"):
        builder.add_entity(Entity(id=name, name=name, description=name))
    builder.add_edge("rel", ["a", "c"])
    builder.add_edge("rel", ["b", "c"])
    builder.add_edge("syn", ["a", "b"], kind=SYNONYM)
    merged, _ = merge_synonyms(builder.build())
    # Both fact edges collapse to the same rewritten edge.
    assert merged.num_edges() == 1


def test_merge_synonyms_noop_without_synonym_edges(t1):
    merged, merge_map = merge_synonyms(t1)
    assert merge_map == {}
    assert merged.to_dict() == t1.to_dict()


def test_build_question_subgraph_empty_anchors(t1):
    sub = build_question_subgraph(t1, AnchorSet(), 4)
    assert sub.graph.num_edges() == 0
    assert sub.graph.num_entities() == 0


def test_build_question_subgraph_bounded_hops(t1):
    anchors = AnchorSet(topics={"A"})
    sub = build_question_subgraph(t1, anchors, 0)
    assert set(sub.graph.hyperedges) == {"e0", "e3"}
    wider = build_question_subgraph(t1, anchors, 1)
    assert set(wider.graph.hyperedges) == {"e0", "e1", "e2", "e3"}


def test_subgraph_canonical_lookup():
    anchors = AnchorSet(topics={"USA"})
    sub = build_question_subgraph(_synonym_graph(), anchors, 2)
    assert sub.canonical("USA") == "United States"
    assert sub.canonical("Paris") == "Paris"
