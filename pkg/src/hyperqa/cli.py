"""Operator command line: build, augment, index, anchor, query, eval, stats.

Every query/eval run writes a manifest carrying the effective config, the
graph hash, per-module oracle usage, and search statistics, so runs are
reproducible from their artifacts.

Exit codes: 0 success, 1 usage error, 2 data error, 3 oracle-backend error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .anchoring import build_question_subgraph
from .config import PRESETS, RunConfig, preset
from .construction import (
    FactRecordError,
    augment_synonyms,
    ingest_facts,
    load_fact_records,
    similarity_candidates,
    similarity_components,
)
from .embeddings import ENTITY_NAME, EmbeddingError, IndexSet, build_index
from .generation import f1_score, generation_eval, retrieval_similarity
from .graph import GraphError, KnowledgeHypergraph
from .oracle import (
    Fixtures,
    HttpBackend,
    MockBackend,
    OracleBackendError,
    OracleError,
    OracleGateway,
)
from .pipeline import graph_digest, run_query
from .report import write_report
from .retrieval import ChunkStore


class DataError(Exception):
    pass


def _load_graph(path: str) -> KnowledgeHypergraph:
    if not Path(path).is_file():
        raise DataError(f"graph file {path!r} not found; run `hyperqa build` first")
    return KnowledgeHypergraph.load(path)


def _load_indexes(directory: str) -> IndexSet:
    if not Path(directory).is_dir():
        raise DataError(
            f"index directory {directory!r} not found; run `hyperqa index` first"
        )
    return IndexSet.load(directory)


def _gateway(config: RunConfig, fixtures: str | None, transcript=None) -> OracleGateway:
    if config.backend == "http":
        if not config.backend_url:
            raise click.UsageError("http backend requires --url")
        backend = HttpBackend(config.backend_url)
    else:
        fx = Fixtures.from_file(fixtures) if fixtures else None
        backend = MockBackend(seed=config.seed, fixtures=fx)
    return OracleGateway(backend, transcript_path=transcript)


def _build_config(config_file, preset_name, **overrides) -> RunConfig:
    if config_file:
        cfg = RunConfig.from_dict(json.loads(Path(config_file).read_text("utf-8")))
    elif preset_name:
        cfg = preset(preset_name)
    else:
        cfg = RunConfig()
    return cfg.with_overrides(**overrides)


_common = [
    click.option("--config", "config_file", type=click.Path(), default=None,
                 help="JSON config file; flags override its values."),
    click.option("--preset", "preset_name",
                 type=click.Choice(sorted(PRESETS)), default=None),
    click.option("--lite/--no-lite", "lite_mode", default=None),
    click.option("--strategy", type=click.Choice(["dfs", "bfs"]), default=None),
    click.option("--seed", type=int, default=None),
    click.option("--backend", type=click.Choice(["mock", "http"]), default=None),
    click.option("--url", "backend_url", default=None),
    click.option("--fixtures", type=click.Path(exists=True), default=None,
                 help="Mock-oracle fixture file."),
]


def common_options(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


@click.group()
def cli() -> None:
    """Knowledge-hypergraph multi-hop question answering."""


@cli.command()
@click.option("--facts", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
def build(facts: str, out: str) -> None:
    """Ingest JSONL fact records into a frozen graph."""
    if not Path(facts).is_file():
        raise DataError(f"facts file {facts!r} not found")
    graph = ingest_facts(load_fact_records(facts))
    graph.save(out)
    click.echo(
        f"built graph: {graph.num_entities()} entities, "
        f"{graph.num_edges()} hyperedges -> {out}"
    )


@cli.command()
@click.option("--graph", "graph_path", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--tau", type=float, default=None)
@common_options
def augment(graph_path, out, tau, config_file, preset_name, fixtures, **overrides):
    """Add judge-confirmed synonym hyperedges to a graph."""
    cfg = _build_config(config_file, preset_name, tau=tau, **overrides)
    graph = _load_graph(graph_path)
    gateway = _gateway(cfg, fixtures)
    name_index = build_index(
        graph, ENTITY_NAME, lambda text: gateway.embed(text, "embed-index")
    )
    candidates = similarity_candidates(graph, name_index, cfg.tau)
    components = similarity_components(candidates)
    augmented = augment_synonyms(graph, components, gateway)
    augmented.save(out)
    click.echo(
        f"augmented: {len(components)} components, "
        f"{augmented.num_edges() - graph.num_edges()} synonym edges -> {out}"
    )


@cli.command()
@click.option("--graph", "graph_path", required=True, type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
@common_options
def index(graph_path, out_dir, config_file, preset_name, fixtures, **overrides):
    """Build and persist the three vector indexes for a graph."""
    cfg = _build_config(config_file, preset_name, **overrides)
    graph = _load_graph(graph_path)
    gateway = _gateway(cfg, fixtures)
    indexes = IndexSet.build(graph, lambda text: gateway.embed(text, "embed-index"))
    indexes.save(out_dir)
    click.echo(f"indexed {len(indexes.names)} entities, {len(indexes.edge_names)} edges -> {out_dir}")


@cli.command()
@click.option("--graph", "graph_path", required=True, type=click.Path())
@click.option("--index-dir", required=True, type=click.Path())
@click.option("--question", required=True)
@common_options
def anchor(graph_path, index_dir, question, config_file, preset_name, fixtures, **overrides):
    """Debug aid: emit the anchor set and question-subgraph stats as JSON."""
    from .anchoring import anchor_question

    cfg = _build_config(config_file, preset_name, **overrides)
    graph = _load_graph(graph_path)
    indexes = _load_indexes(index_dir)
    gateway = _gateway(cfg, fixtures)
    anchors = anchor_question(question, indexes, cfg.anchor_config(), gateway)
    subgraph = build_question_subgraph(graph, anchors, cfg.subgraph_hops)
    click.echo(
        json.dumps(
            {
                "keywords": anchors.keyword_list,
                "topics": sorted(anchors.topics),
                "targets": sorted(anchors.targets),
                "relaxed": anchors.relaxed,
                "subgraph": {
                    "entities": subgraph.graph.num_entities(),
                    "hyperedges": subgraph.graph.num_edges(),
                    "merged_entities": len(subgraph.merge_map),
                },
            },
            indent=2,
            sort_keys=True,
        )
    )


@cli.command()
@click.option("--graph", "graph_path", required=True, type=click.Path())
@click.option("--index-dir", required=True, type=click.Path())
@click.option("--question", required=True)
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--chunks", "chunks_dir", type=click.Path(), default=None)
@common_options
def query(graph_path, index_dir, question, out_dir, chunks_dir,
          config_file, preset_name, fixtures, **overrides):
    """Answer one question; write manifest.json and trace.jsonl."""
    cfg = _build_config(config_file, preset_name, **overrides)
    graph = _load_graph(graph_path)
    indexes = _load_indexes(index_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gateway = _gateway(cfg, fixtures)
    chunk_store = ChunkStore(directory=chunks_dir) if chunks_dir else None

    outcome = run_query(graph, indexes, question, cfg, gateway, chunk_store)

    (out / "manifest.json").write_text(
        json.dumps(outcome.manifest, indent=2, ensure_ascii=False, sort_keys=True),
        "utf-8",
    )
    with (out / "trace.jsonl").open("w", encoding="utf-8") as fh:
        for record in outcome.trace:
            fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")

    click.echo(f"answer: {outcome.answer}")
    if outcome.no_evidence:
        click.echo("(no graph evidence)")
    for dag in outcome.completed_dags:
        deps = ", ".join(f"{a}->{b}" for a, b in sorted(dag.plan.deps))
        click.echo(f"dag deps: {deps or '(single node)'}")
        for sub_ids in dag.levels:
            for sub_id in sub_ids:
                sub = dag.plan.subquestion(sub_id)
                for pair in dag.ap.get(sub_id, []):
                    click.echo(
                        f"  [{sub_id}] {sub.text}\n"
                        f"      answer: {pair.answer}\n"
                        f"      path: {' -> '.join(pair.path.edges)}"
                    )


@cli.command("eval")
@click.option("--graph", "graph_path", required=True, type=click.Path())
@click.option("--index-dir", required=True, type=click.Path())
@click.option("--qa", "qa_path", required=True, type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--chunks", "chunks_dir", type=click.Path(), default=None)
@click.option("--resume/--no-resume", default=True,
              help="Skip question ids already present in rows.jsonl.")
@common_options
def eval_cmd(graph_path, index_dir, qa_path, out_dir, chunks_dir, resume,
             config_file, preset_name, fixtures, **overrides):
    """Evaluate a JSONL QA file; write report.{json,csv} and figures."""
    cfg = _build_config(config_file, preset_name, **overrides)
    graph = _load_graph(graph_path)
    indexes = _load_indexes(index_dir)
    if not Path(qa_path).is_file():
        raise DataError(f"QA file {qa_path!r} not found")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    chunk_store = ChunkStore(directory=chunks_dir) if chunks_dir else None

    rows_path = out / "rows.jsonl"
    done: dict[str, dict] = {}
    if resume and rows_path.is_file():
        for line in rows_path.read_text("utf-8").splitlines():
            if line.strip():
                row = json.loads(line)
                done[str(row["question_id"])] = row

    rows: list[dict] = []
    usage_totals: dict[str, dict] = {}
    with rows_path.open("a", encoding="utf-8") as rows_fh:
        with Path(qa_path).open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                qid = str(lineno)
                if qid in done:
                    rows.append(done[qid])
                    continue
                row, usage = _eval_one(
                    qid, line, lineno, graph, indexes, cfg, fixtures, chunk_store
                )
                _merge_usage(usage_totals, usage)
                rows.append(row)
                rows_fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
                rows_fh.flush()

    aggregates = write_report(rows, out, usage=usage_totals or None)
    (out / "manifest.json").write_text(
        json.dumps(
            {
                "config": cfg.to_dict(),
                "config_hash": cfg.digest(),
                "graph_hash": graph_digest(graph),
                "aggregates": aggregates,
            },
            indent=2,
            sort_keys=True,
        ),
        "utf-8",
    )
    click.echo(json.dumps(aggregates, sort_keys=True))


def _merge_usage(totals: dict, usage: dict) -> None:
    for site, info in usage.items():
        bucket = totals.setdefault(
            site, {"calls": 0, "input_tokens": 0, "output_tokens": 0}
        )
        for key in bucket:
            bucket[key] += info[key]


def _eval_one(
    qid, line, lineno, graph, indexes, cfg, fixtures, chunk_store
) -> tuple[dict, dict]:
    try:
        record = json.loads(line)
        question = record["question"]
        gold = record["golden_answer"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        return {
            "question_id": qid,
            "question": "",
            "answer": "",
            "gold": "",
            "f1": None,
            "rs": None,
            "ge": None,
            "error": f"line {lineno}: {exc}",
        }, {}
    # Fresh gateway per question keeps rows independent of evaluation order.
    gateway = _gateway(cfg, fixtures)
    try:
        outcome = run_query(graph, indexes, question, cfg, gateway, chunk_store)
    except OracleBackendError:
        raise
    except (OracleError, GraphError, EmbeddingError) as exc:
        return {
            "question_id": qid,
            "question": question,
            "answer": "",
            "gold": gold,
            "f1": None,
            "rs": None,
            "ge": None,
            "error": str(exc),
        }, gateway.usage_report()
    gold_context = record.get("context") or ""
    rs = (
        retrieval_similarity(outcome.retrieved_context, gold_context, gateway)
        if gold_context and outcome.retrieved_context
        else (0.0 if gold_context else None)
    )
    ge = generation_eval(question, outcome.answer, gold, gateway)
    return {
        "question_id": qid,
        "question": question,
        "answer": outcome.answer,
        "gold": gold,
        "f1": round(f1_score(outcome.answer, gold), 6),
        "rs": round(rs, 6) if rs is not None else None,
        "ge": ge,
        "error": None,
    }, gateway.usage_report()


@cli.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
def stats(manifest_path: str) -> None:
    """Print usage and search statistics from a run manifest."""
    if not Path(manifest_path).is_file():
        raise DataError(f"manifest {manifest_path!r} not found")
    manifest = json.loads(Path(manifest_path).read_text("utf-8"))
    search = manifest.get("search_stats", {})
    for key in sorted(search):
        click.echo(f"{key}: {search[key]}")
    usage = manifest.get("usage", {})
    for site in sorted(usage):
        info = usage[site]
        click.echo(
            f"{site}: {info['calls']} calls, "
            f"{info['input_tokens']} in / {info['output_tokens']} out tokens"
        )


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        return 1
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except (DataError, FactRecordError, GraphError, EmbeddingError,
            json.JSONDecodeError, FileNotFoundError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except OracleError as exc:
        click.echo(f"oracle backend error: {exc}", err=True)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
