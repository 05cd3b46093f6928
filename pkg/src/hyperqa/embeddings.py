"""Embedding storage and exact cosine top-k retrieval.

One index per text kind (entity names, entity descriptions, hyperedge
names). Vectors are L2-normalized at insert so cosine similarity reduces
to a dot product. Retrieval is a brute-force scan: graphs at the scale
this engine targets are small, and exactness keeps the oracle-equivalence
tests trivial.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

INDEX_VERSION = 1
INDEX_MAGIC = b"HQVIDX01"

ENTITY_NAME = "entity_name"
ENTITY_DESC = "entity_desc"
HYPEREDGE_NAME = "hyperedge_name"
INDEX_KINDS = (ENTITY_NAME, ENTITY_DESC, HYPEREDGE_NAME)


class EmbeddingError(Exception):
    pass


def _as_vector(values) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1:
        raise EmbeddingError("embedding must be a flat vector")
    return vec


def normalize(values) -> np.ndarray:
    vec = _as_vector(values)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise EmbeddingError("cannot normalize a zero vector")
    return vec / norm


def cosine_similarity(a, b) -> float:
    va, vb = _as_vector(a), _as_vector(b)
    if va.shape != vb.shape:
        raise EmbeddingError(f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}")
    na, nb = float(np.linalg.norm(va)), float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise EmbeddingError("cosine similarity undefined for zero vectors")
    return float(np.dot(va, vb) / (na * nb))


@dataclass
class VectorIndex:
    """Immutable id -> normalized-vector store for one text kind."""

    kind: str
    dim: int
    ids: list[str]
    matrix: np.ndarray  # shape (len(ids), dim), rows L2-normalized
    source_hash: str

    def __len__(self) -> int:
        return len(self.ids)

    def _rows(self) -> dict[str, int]:
        cached = getattr(self, "_row_map", None)
        if cached is None:
            cached = {iid: i for i, iid in enumerate(self.ids)}
            self._row_map = cached
        return cached

    def vector(self, item_id: str) -> np.ndarray:
        row = self._rows().get(item_id)
        if row is None:
            raise EmbeddingError(f"no embedding for {item_id!r}")
        return self.matrix[row]

    def has(self, item_id: str) -> bool:
        return item_id in self._rows()

    def top_k_above(self, query, k: int, theta: float) -> list[tuple[str, float]]:
        """Top-k entries with similarity >= theta, descending, ties by id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self.ids:
            return []
        q = normalize(query)
        if q.shape[0] != self.dim:
            raise EmbeddingError(f"dimension mismatch: {q.shape[0]} vs {self.dim}")
        scores = self.matrix @ q
        ranked = sorted(
            zip(self.ids, scores.tolist()), key=lambda it: (-it[1], it[0])
        )
        return [(iid, s) for iid, s in ranked if s >= theta][:k]


def index_texts(graph, kind: str) -> list[tuple[str, str]]:
    """(id, text) pairs for one index kind, in sorted-id order."""
    if kind == ENTITY_NAME:
        return [(vid, graph.entity(vid).name) for vid in graph.entity_ids()]
    if kind == ENTITY_DESC:
        return [(vid, graph.entity(vid).description) for vid in graph.entity_ids()]
    if kind == HYPEREDGE_NAME:
        return [(eid, graph.edge(eid).name) for eid in graph.edge_ids()]
    raise ValueError(f"unknown index kind {kind!r}")


def source_hash(pairs: list[tuple[str, str]]) -> str:
    digest = hashlib.sha256()
    for item_id, text in pairs:
        digest.update(item_id.encode("utf-8"))
        digest.update(b"\x00")
        digest.update(text.encode("utf-8"))
        digest.update(b"\x01")
    return digest.hexdigest()


def build_index(graph, kind: str, embed: Callable[[str], np.ndarray]) -> VectorIndex:
    """Embed every item of the kind; raises with the failing id on error."""
    pairs = index_texts(graph, kind)
    vectors = []
    for item_id, text in pairs:
        try:
            vectors.append(normalize(embed(text)))
        except Exception as exc:
            raise EmbeddingError(f"embedding failed for {item_id!r}: {exc}") from exc
    if vectors:
        dims = {v.shape[0] for v in vectors}
        if len(dims) != 1:
            raise EmbeddingError(f"inconsistent embedding dims: {sorted(dims)}")
        dim = dims.pop()
        matrix = np.vstack(vectors)
    else:
        dim = 0
        matrix = np.zeros((0, 0))
    return VectorIndex(
        kind=kind,
        dim=dim,
        ids=[item_id for item_id, _ in pairs],
        matrix=matrix,
        source_hash=source_hash(pairs),
    )


def save_index(index: VectorIndex, path: str | Path) -> None:
    """Versioned header + packed float32 rows, with a row->id JSON sidecar."""
    path = Path(path)
    header = json.dumps(
        {
            "version": INDEX_VERSION,
            "kind": index.kind,
            "dim": index.dim,
            "count": len(index.ids),
            "source_hash": index.source_hash,
        },
        sort_keys=True,
    ).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(INDEX_MAGIC)
        fh.write(len(header).to_bytes(4, "little"))
        fh.write(header)
        fh.write(index.matrix.astype("<f4").tobytes())
    path.with_suffix(path.suffix + ".ids.json").write_text(
        json.dumps(index.ids, ensure_ascii=False), "utf-8"
    )


def load_index(path: str | Path) -> VectorIndex:
    path = Path(path)
    raw = path.read_bytes()
    if raw[: len(INDEX_MAGIC)] != INDEX_MAGIC:
        raise EmbeddingError(f"{path} is not an index file")
    off = len(INDEX_MAGIC)
    hlen = int.from_bytes(raw[off : off + 4], "little")
    off += 4
    header = json.loads(raw[off : off + hlen].decode("utf-8"))
    off += hlen
    if header["version"] != INDEX_VERSION:
        raise EmbeddingError(f"unsupported index version {header['version']}")
    ids = json.loads(path.with_suffix(path.suffix + ".ids.json").read_text("utf-8"))
    count, dim = header["count"], header["dim"]
    matrix = np.frombuffer(raw[off:], dtype="<f4").astype(np.float64)
    matrix = matrix.reshape((count, dim)) if count else np.zeros((0, dim or 0))
    return VectorIndex(
        kind=header["kind"],
        dim=dim,
        ids=ids,
        matrix=matrix,
        source_hash=header["source_hash"],
    )


@dataclass
class IndexSet:
    """The three per-graph vector indexes the pipeline needs."""

    names: VectorIndex
    descriptions: VectorIndex
    edge_names: VectorIndex

    @classmethod
    def build(cls, graph, embed) -> "IndexSet":
        return cls(
            names=build_index(graph, ENTITY_NAME, embed),
            descriptions=build_index(graph, ENTITY_DESC, embed),
            edge_names=build_index(graph, HYPEREDGE_NAME, embed),
        )

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        save_index(self.names, directory / "entity_name.vec")
        save_index(self.descriptions, directory / "entity_desc.vec")
        save_index(self.edge_names, directory / "hyperedge_name.vec")

    @classmethod
    def load(cls, directory: str | Path) -> "IndexSet":
        directory = Path(directory)
        return cls(
            names=load_index(directory / "entity_name.vec"),
            descriptions=load_index(directory / "entity_desc.vec"),
            edge_names=load_index(directory / "hyperedge_name.vec"),
        )
