"""Shared fixtures: toy graphs, the accounting fixture graph, mock gateways."""

from __future__ import annotations

from pathlib import Path

import pytest

from hyperqa.construction import ingest_facts, load_fact_records
from hyperqa.embeddings import IndexSet
from hyperqa.graph import Entity, GraphBuilder
from hyperqa.oracle import Fixtures, MockBackend, OracleGateway

FIXTURE_DIR = Path(__file__).parent / "fixtures"

# Per-criterion verdict lines recorded by the acceptance suite; echoed in
# the terminal summary so they survive pytest's output capture.
ACCEPTANCE_VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)

ACCOUNTING_QUESTION = (
    "What must be prepared in accordance with GAAP for "
    "financial and tax reporting purposes?"
)


def toy_graph():
    """The four-edge toy graph used throughout the unit tests:
    e0={A,B}, e1={B,C,D}, e2={D,E}, e3={A,E}."""
    builder = GraphBuilder()
    for name in "ABCDE":
        builder.add_entity(Entity(id=name, name=name, description=f"entity {name}"))
    builder.add_edge("edge AB", ["A", "B"])
    builder.add_edge("edge BCD", ["B", "C", "D"])
    builder.add_edge("edge DE", ["D", "E"])
    builder.add_edge("edge AE", ["A", "E"])
    return builder.build()


def make_gateway(fixtures: Fixtures | None = None, seed: int = 0, **kwargs):
    return OracleGateway(MockBackend(seed=seed, fixtures=fixtures), **kwargs)


@pytest.fixture
def t1():
    return toy_graph()


@pytest.fixture
def gateway():
    return make_gateway()


@pytest.fixture(scope="session")
def accounting_fixtures() -> Fixtures:
    return Fixtures.from_file(FIXTURE_DIR / "accounting_oracle.json")


@pytest.fixture(scope="session")
def accounting_graph():
    return ingest_facts(load_fact_records(FIXTURE_DIR / "accounting_facts.jsonl"))


@pytest.fixture(scope="session")
def accounting_indexes(accounting_graph) -> IndexSet:
    gw = make_gateway()
    return IndexSet.build(accounting_graph, lambda t: gw.embed(t, "embed-index"))
