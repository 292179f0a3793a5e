"""Persistent code-execution sessions over an NDJSON wire protocol.

One worker process per session, newline-delimited JSON over the child's
stdin/stdout, strictly one response per request. A scripted in-process stub
implements the same session surface for offline tests and demos.

Wire schema (version "1"):
  request  {"id":int,"kind":"open"|"exec"|"close","code":str?,"workbook_path":str?,"timeout_ms":int?}
  response {"id":int,"ok":bool,"stdout":str,"expr":str|null,
            "error":{"kind":str,"message":str,"traceback":str}|null,
            "duration_ms":int,"new_vars":[str]}
The worker announces itself first with {"hello":true,"protocol":"1","limits":{...}}.
"""

from __future__ import annotations

import enum
import itertools
import json
import os
import queue
import shlex
import subprocess
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    HandshakeTimeoutError,
    SandboxProtocolError,
    ScriptExhaustedError,
    SessionStateError,
    SpawnFailureError,
    WorkbookLoadFailureError,
    WorkerCrashError,
)

PROTOCOL_VERSION = "1"
DEFAULT_EXEC_TIMEOUT_MS = 60_000
HANDSHAKE_TIMEOUT_S = 15.0
CLOSE_GRACE_S = 3.0
EXEC_GRACE_S = 10.0  # client-side slack on top of the worker-enforced timeout

_session_counter = itertools.count(1)


@dataclass(frozen=True)
class ExecError:
    kind: str
    message: str
    traceback: str = ""


@dataclass(frozen=True)
class ExecResult:
    stdout: str = ""
    expr: str | None = None
    error: ExecError | None = None
    duration_ms: int = 0
    new_vars: tuple[str, ...] = ()

    def __post_init__(self):
        if self.error is not None and self.expr is not None:
            raise ValueError("error and expression result are mutually exclusive")

    @property
    def ok(self) -> bool:
        return self.error is None

    @classmethod
    def from_wire(cls, payload: dict) -> "ExecResult":
        error = payload.get("error")
        return cls(
            stdout=payload.get("stdout", ""),
            expr=None if error else payload.get("expr"),
            error=ExecError(**error) if error else None,
            duration_ms=int(payload.get("duration_ms", 0)),
            new_vars=tuple(payload.get("new_vars", ())),
        )

    def to_wire(self, request_id: int) -> dict:
        return {
            "id": request_id,
            "ok": self.error is None,
            "stdout": self.stdout,
            "expr": self.expr,
            "error": None if self.error is None else {
                "kind": self.error.kind,
                "message": self.error.message,
                "traceback": self.error.traceback,
            },
            "duration_ms": self.duration_ms,
            "new_vars": list(self.new_vars),
        }


class SessionState(enum.Enum):
    OPEN = "open"
    CLOSED = "closed"
    CRASHED = "crashed"


@dataclass
class SessionHandle:
    session_id: str
    state: SessionState = SessionState.OPEN


@dataclass
class Session:
    handle: SessionHandle
    executor: object
    workbook_path: str
    tainted: bool = False  # set after a timeout; interpreter state is suspect
    _backend: object = field(default=None, repr=False)

    @property
    def state(self) -> SessionState:
        return self.handle.state

    @property
    def session_id(self) -> str:
        return self.handle.session_id


def open_session(executor, workbook_path) -> Session:
    """Spawn a worker, load the workbook, return an Open session."""
    workbook_path = str(workbook_path)
    session_id = f"s{next(_session_counter):04d}"
    backend = executor.spawn(workbook_path, session_id)
    return Session(handle=SessionHandle(session_id=session_id),
                   executor=executor, workbook_path=workbook_path,
                   _backend=backend)


def exec_code(session: Session, code: str,
              timeout_ms: int = DEFAULT_EXEC_TIMEOUT_MS) -> ExecResult:
    """Run code in the session's persistent namespace."""
    if session.state is not SessionState.OPEN:
        raise SessionStateError(f"exec on {session.state.value} session")
    try:
        result = session._backend.exec(code, timeout_ms)
    except WorkerCrashError:
        session.handle.state = SessionState.CRASHED
        raise
    if result.error is not None and result.error.kind == "timeout":
        session.tainted = True
    return result


def close_session(session: Session) -> None:
    """Terminate the worker; idempotent, no-op on crashed sessions."""
    if session.state is SessionState.OPEN:
        session._backend.close()
        session.handle.state = SessionState.CLOSED


def replace_session(session: Session) -> Session:
    """Close (best effort) and open a fresh session on the same workbook."""
    try:
        close_session(session)
    except Exception:
        pass
    return open_session(session.executor, session.workbook_path)


# ---------------------------------------------------------------------------
# Process-backed executor
# ---------------------------------------------------------------------------

class ProcessExecutor:
    """Launches the worker command once per session and speaks the protocol."""

    def __init__(self, worker_cmd: str | list[str],
                 handshake_timeout: float = HANDSHAKE_TIMEOUT_S,
                 record_dir: str | Path | None = None):
        self.worker_cmd = shlex.split(worker_cmd) if isinstance(worker_cmd, str) else list(worker_cmd)
        self.handshake_timeout = handshake_timeout
        self.record_dir = Path(record_dir) if record_dir else None

    def spawn(self, workbook_path: str, session_id: str) -> "_ProcessBackend":
        return _ProcessBackend(self, workbook_path, session_id)


class _ProcessBackend:
    def __init__(self, executor: ProcessExecutor, workbook_path: str, session_id: str):
        self.session_id = session_id
        self._ids = itertools.count(1)
        self._record_path = None
        if executor.record_dir is not None:
            executor.record_dir.mkdir(parents=True, exist_ok=True)
            self._record_path = executor.record_dir / f"wire_{session_id}.ndjson"
        try:
            self.proc = subprocess.Popen(
                executor.worker_cmd,
                stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True, encoding="utf-8", bufsize=1,
            )
        except OSError as exc:
            raise SpawnFailureError(f"cannot start worker {executor.worker_cmd}: {exc}") from exc

        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

        hello = self._read_json(executor.handshake_timeout, HandshakeTimeoutError)
        if hello.get("hello") is not True or hello.get("protocol") != PROTOCOL_VERSION:
            self._kill()
            raise SandboxProtocolError(f"bad handshake: {hello!r}")
        self.limits = hello.get("limits", {})  # advisory only

        response = self._roundtrip({"kind": "open", "workbook_path": workbook_path},
                                   timeout=executor.handshake_timeout)
        if not response.get("ok"):
            message = (response.get("error") or {}).get("message", "open failed")
            self._kill()
            raise WorkbookLoadFailureError(message)

    def _pump(self):
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)  # EOF sentinel

    def _read_json(self, timeout: float, timeout_exc=WorkerCrashError) -> dict:
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            self._kill()
            raise timeout_exc(f"no response within {timeout:.1f}s") from None
        if line is None:
            stderr = ""
            try:
                stderr = self.proc.stderr.read() or ""
            except Exception:
                pass
            self._kill()
            raise WorkerCrashError(f"worker exited unexpectedly; stderr: {stderr[-2000:]}")
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            self._kill()
            raise SandboxProtocolError(f"unparseable wire line {line!r}") from exc

    def _roundtrip(self, fields: dict, timeout: float) -> dict:
        request = {"id": next(self._ids), **fields}
        self._record(request)
        try:
            self.proc.stdin.write(json.dumps(request) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self._kill()
            raise WorkerCrashError(f"worker pipe closed: {exc}") from exc
        while True:
            response = self._read_json(timeout)
            self._record(response)
            if response.get("id") == request["id"]:
                return response
            raise SandboxProtocolError(
                f"response id {response.get('id')} does not match request {request['id']}")

    def _record(self, obj: dict) -> None:
        if self._record_path is not None:
            with open(self._record_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(obj) + "\n")

    def exec(self, code: str, timeout_ms: int) -> ExecResult:
        deadline = timeout_ms / 1000.0 + EXEC_GRACE_S
        response = self._roundtrip({"kind": "exec", "code": code,
                                    "timeout_ms": timeout_ms}, timeout=deadline)
        return ExecResult.from_wire(response)

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self._roundtrip({"kind": "close"}, timeout=CLOSE_GRACE_S)
            except (SandboxProtocolError, WorkerCrashError, OSError):
                pass  # worker may already be gone; the kill below settles it
            try:
                self.proc.wait(timeout=CLOSE_GRACE_S)
            except subprocess.TimeoutExpired:
                self._kill()

    def _kill(self) -> None:
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=1.0)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


# ---------------------------------------------------------------------------
# Scripted stub executor
# ---------------------------------------------------------------------------

@dataclass
class StubEntry:
    """One scripted exchange: match the incoming code, return a canned result.

    `match` is a substring (or predicate) checked against the executed code;
    None accepts anything. `apply` optionally mutates the session's workbook
    file, standing in for side effects a real worker would have performed.
    """

    result: ExecResult
    match: object = None
    apply: object = None


def scripted_stub(script: list[StubEntry | tuple]) -> "ScriptedExecutor":
    """Build a stub executor from (matcher, ExecResult) pairs or StubEntries."""
    entries = []
    for item in script:
        if isinstance(item, StubEntry):
            entries.append(item)
        else:
            matcher, result = item
            entries.append(StubEntry(result=result, match=matcher))
    return ScriptedExecutor(entries)


class ScriptedExecutor:
    def __init__(self, entries: list[StubEntry]):
        self.entries = list(entries)
        self._cursor = 0

    @property
    def remaining(self) -> int:
        return len(self.entries) - self._cursor

    def spawn(self, workbook_path: str, session_id: str) -> "_StubBackend":
        if not os.path.exists(workbook_path):
            raise WorkbookLoadFailureError(f"no workbook at {workbook_path}")
        return _StubBackend(self, workbook_path)

    def next_entry(self, code: str) -> StubEntry:
        if self._cursor >= len(self.entries):
            raise ScriptExhaustedError(
                f"stub script exhausted after {len(self.entries)} entries; got code:\n{code}")
        entry = self.entries[self._cursor]
        self._cursor += 1
        matcher = entry.match
        if matcher is not None:
            matched = matcher(code) if callable(matcher) else (matcher in code)
            if not matched:
                raise SandboxProtocolError(
                    f"stub entry {self._cursor} expected {matcher!r}, got code:\n{code}")
        return entry


class _StubBackend:
    def __init__(self, executor: ScriptedExecutor, workbook_path: str):
        self.executor = executor
        self.workbook_path = workbook_path

    def exec(self, code: str, timeout_ms: int) -> ExecResult:
        entry = self.executor.next_entry(code)
        if entry.apply is not None:
            entry.apply(self.workbook_path)
        return entry.result

    def close(self) -> None:
        pass


def _apply_from_spec(spec: dict):
    """Build a stub side effect from its JSON description."""
    def apply(workbook_path: str) -> None:
        from .workbook import load_workbook, save_workbook, set_cell

        wb = load_workbook(workbook_path)
        sheet_name = spec.get("sheet") or wb.sheets[0].name
        for write in spec.get("set", []):
            set_cell(wb, sheet_name, write["ref"], write["value"])
        if spec.get("save", True):
            save_workbook(wb, workbook_path)
    return apply


def load_stub_script(path) -> ScriptedExecutor:
    """Read a stub script from JSON: a list of entry objects.

    Entry fields: match (substring), stdout, expr, error {kind,message,
    traceback}, duration_ms, new_vars, apply {sheet, set:[{ref,value}], save}.
    """
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise SandboxProtocolError(f"stub script {path} must be a JSON list")
    entries = []
    for item in raw:
        error = item.get("error")
        result = ExecResult(
            stdout=item.get("stdout", ""),
            expr=item.get("expr"),
            error=ExecError(**error) if error else None,
            duration_ms=int(item.get("duration_ms", 0)),
            new_vars=tuple(item.get("new_vars", ())),
        )
        apply = _apply_from_spec(item["apply"]) if item.get("apply") else None
        entries.append(StubEntry(result=result, match=item.get("match"), apply=apply))
    return ScriptedExecutor(entries)
