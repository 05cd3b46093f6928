"""JSON-over-HTTP backend adapter.

Speaks a minimal protocol: POST <base_url>/oracle with
``{"kind", "payload", "schema_version"}``; the server replies
``{"ok": true, "result": {...}, "usage": {...}?}`` or
``{"ok": false, "error": "..."}``. Token usage falls back to
whitespace counts when the server does not report it.
"""

from __future__ import annotations

import json

import requests

from .contracts import SCHEMA_VERSION, BackendReply, OracleBackendError


class HttpBackend:
    def __init__(self, base_url: str, timeout: float = 30.0) -> None:
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def handle(self, kind: str, payload: dict) -> BackendReply:
        body = {"kind": kind, "payload": payload, "schema_version": SCHEMA_VERSION}
        try:
            resp = requests.post(
                self.base_url + "/oracle", json=body, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise OracleBackendError(f"oracle endpoint unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise OracleBackendError(f"oracle endpoint returned {resp.status_code}")
        try:
            data = resp.json()
        except ValueError as exc:
            raise OracleBackendError("oracle endpoint sent non-JSON body") from exc
        if not data.get("ok"):
            raise OracleBackendError(f"oracle call failed: {data.get('error')}")
        result = data.get("result")
        if not isinstance(result, dict):
            raise OracleBackendError(f"malformed oracle result: {result!r}")
        usage = data.get("usage") or {}
        return BackendReply(
            result=result,
            input_tokens=int(usage.get("input_tokens", len(json.dumps(body).split()))),
            output_tokens=int(
                usage.get("output_tokens", len(json.dumps(result).split()))
            ),
        )
