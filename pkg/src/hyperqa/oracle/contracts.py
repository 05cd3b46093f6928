"""Typed request/response contracts for every LLM/embedding interaction.

All model calls in the pipeline flow through one gateway so that the whole
system can run offline against a deterministic mock backend, and so token
usage can be metered per calling module.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol

SCHEMA_VERSION = 1


class Kind:
    EMBED = "Embed"
    KEYWORD_EXTRACT = "KeywordExtract"
    SYNONYM_JUDGE = "SynonymJudge"
    PLAN_PROPOSE = "PlanPropose"
    PLAN_REFINE = "PlanRefine"
    ENTITY_SCORE = "EntityScore"
    DIRECTION_SELECT = "DirectionSelect"
    PATH_SELECT = "PathSelect"
    STEP_ANSWER = "StepAnswer"
    CANDIDATE_ANSWER = "CandidateAnswer"
    FINAL_JUDGE = "FinalJudge"

    ALL = (
        EMBED,
        KEYWORD_EXTRACT,
        SYNONYM_JUDGE,
        PLAN_PROPOSE,
        PLAN_REFINE,
        ENTITY_SCORE,
        DIRECTION_SELECT,
        PATH_SELECT,
        STEP_ANSWER,
        CANDIDATE_ANSWER,
        FINAL_JUDGE,
    )


class OracleError(Exception):
    pass


class OracleSchemaError(OracleError):
    """Response failed validation after the bounded repair attempts."""


class OracleBackendError(OracleError):
    """Backend unreachable or persistently failing."""


@dataclass(frozen=True)
class OracleRequest:
    kind: str
    payload: dict
    call_site: str

    def __post_init__(self) -> None:
        if self.kind not in Kind.ALL:
            raise OracleError(f"unknown oracle kind {self.kind!r}")


@dataclass(frozen=True)
class UsageRecord:
    call_site: str
    kind: str
    input_tokens: int
    output_tokens: int


@dataclass(frozen=True)
class BackendReply:
    result: dict
    input_tokens: int
    output_tokens: int


class Backend(Protocol):
    def handle(self, kind: str, payload: dict) -> BackendReply: ...


def _is_refusal(result: dict) -> bool:
    return bool(result.get("refusal"))


def _require(result: dict, key: str, types) -> None:
    if key not in result or not isinstance(result[key], types):
        raise OracleSchemaError(f"response missing or mistyped field {key!r}: {result!r}")


def _validate_plan(plan) -> None:
    if not isinstance(plan, dict):
        raise OracleSchemaError(f"plan must be an object: {plan!r}")
    _require(plan, "subquestions", list)
    _require(plan, "deps", list)
    for sub in plan["subquestions"]:
        if not isinstance(sub, dict):
            raise OracleSchemaError(f"subquestion must be an object: {sub!r}")
        _require(sub, "id", int)
        _require(sub, "text", str)
    for dep in plan["deps"]:
        if not (isinstance(dep, list) and len(dep) == 2):
            raise OracleSchemaError(f"dep must be a pair: {dep!r}")


def _validate_index_list(result: dict) -> None:
    _require(result, "indices", list)
    if not all(isinstance(i, int) for i in result["indices"]):
        raise OracleSchemaError(f"indices must be integers: {result!r}")


def validate_response(kind: str, result: dict) -> None:
    """Check the kind-specific response schema; refusals are always legal
    for the generative kinds."""
    if not isinstance(result, dict):
        raise OracleSchemaError(f"response must be an object: {result!r}")
    if kind == Kind.EMBED:
        _require(result, "vector", list)
        if not result["vector"]:
            raise OracleSchemaError("embedding vector is empty")
    elif kind == Kind.KEYWORD_EXTRACT:
        _require(result, "keywords", list)
    elif kind == Kind.SYNONYM_JUDGE:
        _require(result, "synonyms", list)
    elif kind == Kind.PLAN_PROPOSE:
        if _is_refusal(result):
            return
        _require(result, "plans", list)
        for plan in result["plans"]:
            _validate_plan(plan)
    elif kind == Kind.PLAN_REFINE:
        if _is_refusal(result):
            return
        _validate_plan(result.get("plan"))
    elif kind == Kind.ENTITY_SCORE:
        _require(result, "score", (int, float))
        if not 0.0 <= float(result["score"]) <= 1.0:
            raise OracleSchemaError(f"entity score out of [0,1]: {result!r}")
    elif kind in (Kind.DIRECTION_SELECT, Kind.PATH_SELECT):
        _validate_index_list(result)
    elif kind in (Kind.STEP_ANSWER, Kind.CANDIDATE_ANSWER):
        if _is_refusal(result):
            return
        _require(result, "answer", str)
    elif kind == Kind.FINAL_JUDGE:
        # Two judge roles share the kind: candidate ranking and the scalar
        # answer-quality rubric.
        if "score" in result:
            _require(result, "score", (int, float))
            if not 0.0 <= float(result["score"]) <= 100.0:
                raise OracleSchemaError(f"judge score out of [0,100]: {result!r}")
        else:
            _require(result, "ranking", list)


def _digest(obj) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True, ensure_ascii=False).encode("utf-8")
    ).hexdigest()[:16]


@dataclass
class _SiteTotals:
    calls: int = 0
    input_tokens: int = 0
    output_tokens: int = 0


class OracleGateway:
    """Single dispatch chokepoint with metering, validation, and retries."""

    def __init__(
        self,
        backend: Backend,
        transcript_path: Optional[str | Path] = None,
        max_attempts: int = 3,
        backoff: float = 0.0,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.backend = backend
        self.records: list[UsageRecord] = []
        self.max_attempts = max_attempts
        self.backoff = backoff
        self._sleep = sleep
        self._transcript = Path(transcript_path) if transcript_path else None

    def dispatch(self, req: OracleRequest) -> dict:
        reply = self._call_with_retry(req)
        try:
            validate_response(req.kind, reply.result)
        except OracleSchemaError:
            # One automatic re-ask on an unparseable response, then hard error.
            reply = self._call_with_retry(req)
            validate_response(req.kind, reply.result)
        self.records.append(
            UsageRecord(
                call_site=req.call_site,
                kind=req.kind,
                input_tokens=reply.input_tokens,
                output_tokens=reply.output_tokens,
            )
        )
        self._log(req, reply)
        return reply.result

    def _call_with_retry(self, req: OracleRequest) -> BackendReply:
        last: Optional[Exception] = None
        for attempt in range(self.max_attempts):
            try:
                return self.backend.handle(req.kind, req.payload)
            except OracleSchemaError:
                raise
            except OracleError as exc:
                last = exc
                if self.backoff:
                    self._sleep(min(self.backoff * 2**attempt, 5.0))
        raise OracleBackendError(f"backend failed for {req.kind}: {last}")

    def _log(self, req: OracleRequest, reply: BackendReply) -> None:
        if self._transcript is None:
            return
        record = {
            "kind": req.kind,
            "call_site": req.call_site,
            "payload_digest": _digest(req.payload),
            "result_digest": _digest(reply.result),
            "tokens": [reply.input_tokens, reply.output_tokens],
        }
        with self._transcript.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def usage_report(self) -> dict[str, dict[str, int]]:
        """Per-call-site totals: {site: {calls, input_tokens, output_tokens}}."""
        totals: dict[str, _SiteTotals] = {}
        for rec in self.records:
            site = totals.setdefault(rec.call_site, _SiteTotals())
            site.calls += 1
            site.input_tokens += rec.input_tokens
            site.output_tokens += rec.output_tokens
        return {
            site: {
                "calls": agg.calls,
                "input_tokens": agg.input_tokens,
                "output_tokens": agg.output_tokens,
            }
            for site, agg in sorted(totals.items())
        }

    # convenience wrappers --------------------------------------------

    def embed(self, text: str, call_site: str):
        import numpy as np

        result = self.dispatch(
            OracleRequest(Kind.EMBED, {"text": text}, call_site)
        )
        return np.asarray(result["vector"], dtype=np.float64)
