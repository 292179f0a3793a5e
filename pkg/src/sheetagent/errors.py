"""Exception hierarchy shared across the package."""


class SheetAgentError(Exception):
    """Base class for every error raised by this package."""


# --- workbook / addressing ---------------------------------------------------

class MalformedReferenceError(SheetAgentError, ValueError):
    """A1 cell or range text that cannot be parsed."""


class UnknownSheetError(SheetAgentError, KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.sheet_name = name

    def __str__(self) -> str:
        return f"no sheet named {self.sheet_name!r}"


class RegionOutOfBoundsError(SheetAgentError, ValueError):
    """Requested region falls outside the sheet's populated area."""


class WorkbookIOError(SheetAgentError, OSError):
    """File could not be read or written."""


class CorruptFileError(SheetAgentError):
    """File is not a usable spreadsheet (bad zip, no sheets, invalid merges...)."""


class UnsupportedFormatError(SheetAgentError):
    """Not an Office Open XML spreadsheet."""


# --- sandbox ------------------------------------------------------------------

class SandboxError(SheetAgentError):
    """Base class for session / wire-protocol failures."""


class SpawnFailureError(SandboxError):
    pass


class HandshakeTimeoutError(SandboxError):
    pass


class WorkbookLoadFailureError(SandboxError):
    """The worker could not load the workbook named in the open message."""


class WorkerCrashError(SandboxError):
    """The worker process died or stopped responding mid-session."""


class SandboxProtocolError(SandboxError):
    """Malformed or out-of-order message on the wire, or a stub mismatch."""


class ScriptExhaustedError(SandboxProtocolError):
    """A scripted executor ran out of canned responses."""


class SessionStateError(SandboxError):
    """Operation not valid in the session's current state."""


# --- llm gateway --------------------------------------------------------------

class LlmError(SheetAgentError):
    pass


class LlmHttpError(LlmError):
    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class AuthError(LlmError):
    pass


class ContextOverflowError(LlmError):
    pass


class LlmScriptError(LlmError):
    """Scripted LLM received a prompt its script did not expect."""


# --- evalkit ------------------------------------------------------------------

class CaseSchemaError(SheetAgentError):
    """A benchmark case file line failed validation."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class JudgeError(SheetAgentError):
    """Judge output could not be parsed even after the repair retry."""
