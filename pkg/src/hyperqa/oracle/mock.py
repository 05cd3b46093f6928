"""Deterministic mock backend.

Every response is a pure function of (kind, payload, seed, fixtures), so
identical runs yield identical transcripts. The embedder hashes character
trigrams into a fixed-dimension vector, which correlates with string
similarity well enough to make threshold behavior testable without any
network access. Generative kinds are driven by a fixture table mapping
question patterns to canned decompositions, path requirements, and answers;
unmatched questions fall back to conservative defaults.
"""

from __future__ import annotations

import json
import re
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .contracts import BackendReply, OracleError

EMBED_DIM = 256

_STOPWORDS = frozenset(
    """a an the is are was were be been do does did what which who whom whose
    when where why how must shall should can could may might will would of in
    on at to for with and or not no it its this that these those by as from
    into have has had""".split()
)

_PUNCT = re.compile(r"[^\w\s]")
_WS = re.compile(r"\s+")


def _norm(text: str) -> str:
    return _WS.sub(" ", text.casefold()).strip()


def _strip_punct(text: str) -> str:
    return _WS.sub(" ", _PUNCT.sub(" ", text.casefold())).strip()


def _tokens(text: str) -> list[str]:
    return _strip_punct(text).split()


def _count_tokens(obj) -> int:
    return len(json.dumps(obj, ensure_ascii=False).split())


@dataclass
class Fixtures:
    """Canned behavior for the generative mock kinds.

    Patterns are casefolded substrings matched against the question text
    (for refinements, against the serialized step answers).
    """

    aliases: dict[str, str] = field(default_factory=dict)
    keywords: list[dict] = field(default_factory=list)
    plans: list[dict] = field(default_factory=list)
    refinements: list[dict] = field(default_factory=list)
    paths: list[dict] = field(default_factory=list)
    entity_scores: list[dict] = field(default_factory=list)
    directions: list[dict] = field(default_factory=list)
    answers: list[dict] = field(default_factory=list)
    judge: list[dict] = field(default_factory=list)

    @classmethod
    def from_file(cls, path: str | Path) -> "Fixtures":
        data = json.loads(Path(path).read_text("utf-8"))
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown fixture sections: {sorted(unknown)}")
        return cls(**data)

    @staticmethod
    def match(entries: list[dict], text: str) -> Optional[dict]:
        folded = text.casefold()
        for entry in entries:
            if entry["pattern"].casefold() in folded:
                return entry
        return None

    @staticmethod
    def match_all(entries: list[dict], text: str) -> list[dict]:
        folded = text.casefold()
        return [e for e in entries if e["pattern"].casefold() in folded]


class MockBackend:
    def __init__(self, seed: int = 0, fixtures: Optional[Fixtures] = None) -> None:
        self.seed = seed
        self.fixtures = fixtures or Fixtures()
        self._seed_bytes = str(seed).encode("utf-8") + b"|"

    # -- embedding -----------------------------------------------------

    def embed_text(self, text: str) -> list[float]:
        normed = _norm(text)
        vec = [0.0] * EMBED_DIM
        if not normed:
            vec[zlib.crc32(self._seed_bytes) % EMBED_DIM] = 1.0
            return vec
        padded = f"  {normed}  "
        for i in range(len(padded) - 2):
            tri = padded[i : i + 3].encode("utf-8")
            vec[zlib.crc32(self._seed_bytes + tri) % EMBED_DIM] += 1.0
        norm = sum(x * x for x in vec) ** 0.5
        return [x / norm for x in vec]

    def _sim(self, a: str, b: str) -> float:
        va, vb = self.embed_text(a), self.embed_text(b)
        return sum(x * y for x, y in zip(va, vb))

    # -- dispatch ------------------------------------------------------

    def handle(self, kind: str, payload: dict) -> BackendReply:
        handler = getattr(self, "_on_" + _camel_to_snake(kind), None)
        if handler is None:
            raise OracleError(f"mock backend has no handler for {kind}")
        result = handler(payload)
        return BackendReply(
            result=result,
            input_tokens=_count_tokens(payload),
            output_tokens=_count_tokens(result),
        )

    def _on_embed(self, payload: dict) -> dict:
        return {"vector": self.embed_text(payload["text"])}

    def _on_keyword_extract(self, payload: dict) -> dict:
        question = payload["question"]
        entry = Fixtures.match(self.fixtures.keywords, question)
        if entry is not None:
            return {"keywords": list(entry["keywords"])}
        seen: dict[str, None] = {}
        for raw in _PUNCT.sub(" ", question).split():
            word = raw.strip()
            if len(word) < 3 or word.casefold() in _STOPWORDS:
                continue
            seen.setdefault(word, None)
        return {"keywords": list(seen)}

    def _on_synonym_judge(self, payload: dict) -> dict:
        groups: dict[str, list[str]] = {}
        for member in payload["entities"]:
            name = member["name"]
            key = _strip_punct(name)
            key = self.fixtures.aliases.get(key, key)
            groups.setdefault(key, []).append(name)
        candidates = [sorted(names) for names in groups.values() if len(names) >= 2]
        if not candidates:
            return {"synonyms": []}
        # Largest group wins; ties broken by the lexicographically first list.
        best = min(candidates, key=lambda names: (-len(names), names))
        return {"synonyms": best}

    def _on_plan_propose(self, payload: dict) -> dict:
        question = payload["question"]
        count = int(payload.get("count", 1))
        entry = Fixtures.match(self.fixtures.plans, question)
        if entry is not None:
            return {"plans": [json.loads(json.dumps(p)) for p in entry["plans"]][:count]}
        single = {
            "subquestions": [{"id": 0, "text": question, "topics": []}],
            "deps": [],
        }
        return {"plans": [single]}

    def _on_plan_refine(self, payload: dict) -> dict:
        answers_blob = json.dumps(payload.get("answers", {}), sort_keys=True)
        entry = Fixtures.match(self.fixtures.refinements, answers_blob)
        if entry is not None:
            return {"plan": json.loads(json.dumps(entry["plan"]))}
        return {"refusal": True}

    def _on_entity_score(self, payload: dict) -> dict:
        question = payload["question"]
        name = payload["entity"]
        for entry in self.fixtures.entity_scores:
            if (
                entry["entity"].casefold() == name.casefold()
                and entry["pattern"].casefold() in question.casefold()
            ):
                return {"score": float(entry["score"])}
        text = payload.get("description") or name
        score = max(0.0, min(1.0, self._sim(text, question)))
        return {"score": round(score, 2)}

    def _on_direction_select(self, payload: dict) -> dict:
        limit = int(payload["limit"])
        names = [" | ".join(c["path_names"]) for c in payload["candidates"]]
        entry = Fixtures.match(self.fixtures.directions, payload["question"])
        order = list(range(len(names)))
        if entry is not None:
            prefer = [p.casefold() for p in entry.get("prefer", [])]
            order.sort(
                key=lambda i: (
                    not any(p in names[i].casefold() for p in prefer),
                    i,
                )
            )
        return {"indices": order[:limit]}

    def _on_path_select(self, payload: dict) -> dict:
        question = payload["question"]
        entries = Fixtures.match_all(self.fixtures.paths, question)
        if not entries:
            return {"indices": []}
        indices = []
        for i, cand in enumerate(payload["candidates"]):
            joined = " | ".join(cand["names"]).casefold()
            for entry in entries:
                if all(req.casefold() in joined for req in entry["require"]):
                    indices.append(i)
                    break
        return {"indices": indices}

    def _on_step_answer(self, payload: dict) -> dict:
        question = payload["question"]
        entries = Fixtures.match_all(self.fixtures.paths, question)
        context = payload.get("context", "")
        for entry in entries:
            if all(req.casefold() in context.casefold() for req in entry["require"]):
                return {"answer": entry["answer"]}
        lines = [ln for ln in context.splitlines() if ln.strip()]
        if not lines:
            return {"refusal": True}
        return {"answer": lines[-1].strip()}

    def _on_candidate_answer(self, payload: dict) -> dict:
        question = payload["question"]
        entry = Fixtures.match(self.fixtures.answers, question)
        if entry is not None:
            return {
                "answer": entry["answer"],
                "reasoning": entry.get("reasoning", ""),
            }
        answers = payload.get("answers", [])
        if not answers:
            return {"refusal": True}
        return {"answer": answers[-1], "reasoning": "derived from final resolved step"}

    def _on_final_judge(self, payload: dict) -> dict:
        if "answer" in payload and "gold" in payload:
            return {"score": self._quality_score(payload["answer"], payload["gold"])}
        candidates = payload["candidates"]
        entry = Fixtures.match(self.fixtures.judge, payload["question"])
        order = list(range(len(candidates)))
        if entry is not None:
            prefer = entry["prefer"].casefold()
            order.sort(key=lambda i: (prefer not in candidates[i].casefold(), i))
        return {"ranking": order}

    @staticmethod
    def _quality_score(answer: str, gold: str) -> float:
        # Rubric: 0 for an empty answer, 100 for an exact normalized match,
        # token-set Jaccard scaled to 100 otherwise.
        pred, ref = set(_tokens(answer)), set(_tokens(gold))
        if not pred:
            return 0.0
        if pred == ref:
            return 100.0
        union = pred | ref
        return round(100.0 * len(pred & ref) / len(union), 2) if union else 0.0


def _camel_to_snake(name: str) -> str:
    return re.sub(r"(?<!^)(?=[A-Z])", "_", name).lower()
