"""Evaluation report rendering: delimited output plus summary figures.

Writes report.json / report.csv with per-question rows and aggregate
means, and renders companion matplotlib figures (per-question metric bars
and per-module token usage) into the same run directory.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

CSV_COLUMNS = ["question_id", "question", "answer", "gold", "f1", "rs", "ge", "error"]


def aggregate_rows(rows: list[dict]) -> dict:
    """Mean of each metric over the rows where it is present."""
    out: dict[str, Optional[float]] = {}
    for metric in ("f1", "rs", "ge"):
        values = [row[metric] for row in rows if row.get(metric) is not None]
        out[metric] = round(sum(values) / len(values), 6) if values else None
    out["questions"] = len(rows)
    out["failures"] = sum(1 for row in rows if row.get("error"))
    return out


def write_report(
    rows: list[dict], out_dir: str | Path, usage: Optional[dict] = None
) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    aggregates = aggregate_rows(rows)

    (out_dir / "report.json").write_text(
        json.dumps(
            {"rows": rows, "aggregates": aggregates},
            indent=2,
            ensure_ascii=False,
            sort_keys=True,
        ),
        "utf-8",
    )
    with (out_dir / "report.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({col: row.get(col, "") for col in CSV_COLUMNS})

    render_metric_figure(rows, aggregates, out_dir / "report_metrics.png")
    if usage:
        render_usage_figure(usage, out_dir / "report_tokens.png")
    return aggregates


def render_metric_figure(rows: list[dict], aggregates: dict, path: Path) -> None:
    scored = [row for row in rows if row.get("f1") is not None]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * len(scored) + 2), 3.5))
    if scored:
        xs = range(len(scored))
        ax.bar(
            [x - 0.2 for x in xs],
            [row["f1"] for row in scored],
            width=0.4,
            label="F1",
            color="#4878cf",
        )
        rs_vals = [row.get("rs") for row in scored]
        if any(v is not None for v in rs_vals):
            ax.bar(
                [x + 0.2 for x in xs],
                [v if v is not None else 0.0 for v in rs_vals],
                width=0.4,
                label="retrieval sim",
                color="#6acc65",
            )
        if aggregates.get("f1") is not None:
            ax.axhline(aggregates["f1"], color="#4878cf", ls="--", lw=1, alpha=0.7)
        ax.set_xticks(list(xs))
        ax.set_xticklabels([str(row.get("question_id", i)) for i, row in enumerate(scored)], rotation=45, ha="right", fontsize=7)
        ax.legend(frameon=False, fontsize=8)
    else:
        ax.text(0.5, 0.5, "no scored questions", ha="center", va="center")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.set_title("Per-question answer metrics")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_usage_figure(usage: dict, path: Path) -> None:
    sites = sorted(usage)
    totals = [
        usage[s]["input_tokens"] + usage[s]["output_tokens"] for s in sites
    ]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.8 * len(sites) + 2), 3.0))
    ax.bar(sites, totals, color="#d65f5f")
    ax.set_ylabel("tokens (in + out)")
    ax.set_title("Oracle token usage by module")
    ax.tick_params(axis="x", rotation=30, labelsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
