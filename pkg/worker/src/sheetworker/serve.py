"""The NDJSON request loop: handshake, open, exec*, close.

One session per process, strictly single-threaded. User-code failures never
end the loop; only close (or stdin EOF) does. Protocol version "1":

  request  {"id":int,"kind":"open"|"exec"|"close","code":str?,"workbook_path":str?,"timeout_ms":int?}
  response {"id":int,"ok":bool,"stdout":str,"expr":str|null,
            "error":{"kind":str,"message":str,"traceback":str}|null,
            "duration_ms":int,"new_vars":[str]}
"""

from __future__ import annotations

import json
import os
import sys
import time

from .runner import run_code
from .tools import ExcelToolkit
from . import xlsxio

PROTOCOL_VERSION = "1"
DEFAULT_TIMEOUT_MS = 60_000


def _response(request_id: int, *, ok: bool = True, stdout: str = "",
              expr=None, error=None, duration_ms: int = 0, new_vars=()) -> dict:
    return {"id": request_id, "ok": ok, "stdout": stdout, "expr": expr,
            "error": error, "duration_ms": duration_ms, "new_vars": list(new_vars)}


def _error(request_id: int, kind: str, message: str, duration_ms: int = 0) -> dict:
    return _response(request_id, ok=False,
                     error={"kind": kind, "message": message, "traceback": ""},
                     duration_ms=duration_ms)


def _apply_memory_limit() -> int | None:
    """Best-effort address-space cap, driven by SHEETWORKER_MEMORY_BYTES."""
    raw = os.environ.get("SHEETWORKER_MEMORY_BYTES")
    if not raw:
        return None
    try:
        import resource

        limit = int(raw)
        resource.setrlimit(resource.RLIMIT_AS, (limit, limit))
        return limit
    except (ValueError, OSError):
        return None


def _send(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def _build_namespace(workbook_path: str) -> dict:
    import numpy as np
    import pandas as pd

    toolkit = ExcelToolkit(xlsxio.load(workbook_path))
    namespace = {"__name__": "__sandbox__", "pd": pd, "np": np}
    namespace.update(toolkit.bindings())
    return namespace


def serve(stdin=None) -> int:
    stdin = stdin or sys.stdin
    memory_limit = _apply_memory_limit()
    _send({"hello": True, "protocol": PROTOCOL_VERSION,
           "limits": {"memory_bytes": memory_limit,
                      "network": "not-enforced",
                      "stdout_bytes": 32768}})

    namespace: dict | None = None
    for line in stdin:
        if not line.strip():
            continue
        try:
            request = json.loads(line)
            request_id = int(request["id"])
            kind = request["kind"]
        except (ValueError, KeyError, TypeError):
            _send(_error(0, "protocol-error", f"unparseable request: {line[:200]!r}"))
            continue

        if kind == "open":
            started = time.monotonic()
            try:
                namespace = _build_namespace(request["workbook_path"])
                _send(_response(request_id,
                                duration_ms=int((time.monotonic() - started) * 1000)))
            except Exception as exc:
                _send(_error(request_id, "workbook-load-failure",
                             f"{type(exc).__name__}: {exc}"))
        elif kind == "exec":
            if namespace is None:
                _send(_error(request_id, "protocol-error", "exec before open"))
                continue
            timeout_ms = int(request.get("timeout_ms") or DEFAULT_TIMEOUT_MS)
            started = time.monotonic()
            outcome = run_code(request.get("code", ""), namespace,
                               timeout_s=timeout_ms / 1000.0)
            _send(_response(request_id,
                            ok=outcome["error"] is None,
                            stdout=outcome["stdout"],
                            expr=outcome["expr"],
                            error=outcome["error"],
                            duration_ms=int((time.monotonic() - started) * 1000),
                            new_vars=outcome["new_vars"]))
        elif kind == "close":
            _send(_response(request_id))
            return 0
        else:
            _send(_error(request_id, "protocol-error", f"unknown kind {kind!r}"))
    return 0


def main() -> int:
    return serve()


if __name__ == "__main__":
    raise SystemExit(main())
