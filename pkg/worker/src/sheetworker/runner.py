"""Code execution inside the persistent namespace.

Interactive-interpreter semantics: statements run in the shared namespace,
the last top-level bare expression's repr comes back separately, stdout is
captured per exec (truncated at 32 KiB), and newly bound top-level names are
reported. A SIGALRM watchdog interrupts runaway code.
"""

from __future__ import annotations

import ast
import contextlib
import io
import signal
import traceback

STDOUT_LIMIT = 32_768
TRUNCATION_NOTE = "\n... (truncated output for brevity) ...\n"

_ERROR_KINDS = {
    "ZeroDivisionError": "division-by-zero",
    "SyntaxError": "syntax-error",
    "IndentationError": "syntax-error",
    "MemoryError": "memory-limit",
}


class ExecTimeout(Exception):
    pass


def _alarm_handler(signum, frame):
    raise ExecTimeout("execution timed out")


def _truncate(text: str) -> str:
    if len(text) <= STDOUT_LIMIT:
        return text
    return text[:STDOUT_LIMIT] + TRUNCATION_NOTE


def run_code(code: str, namespace: dict, timeout_s: float) -> dict:
    """Execute code; never raises. Returns stdout/expr/error/new_vars."""
    before = set(namespace)
    buffer = io.StringIO()
    expr_value = None
    error = None

    try:
        tree = ast.parse(code, mode="exec")
    except SyntaxError as exc:
        return {
            "stdout": "",
            "expr": None,
            "error": {"kind": "syntax-error", "message": str(exc),
                      "traceback": traceback.format_exc(limit=1)},
            "new_vars": [],
        }

    trailing_expr = None
    if tree.body and isinstance(tree.body[-1], ast.Expr):
        trailing_expr = ast.Expression(tree.body[-1].value)
        tree.body = tree.body[:-1]

    old_handler = signal.signal(signal.SIGALRM, _alarm_handler)
    signal.setitimer(signal.ITIMER_REAL, max(timeout_s, 0.001))
    try:
        with contextlib.redirect_stdout(buffer):
            if tree.body:
                exec(compile(tree, "<sandbox>", "exec"), namespace)  # noqa: S102
            if trailing_expr is not None:
                expr_value = eval(compile(trailing_expr, "<sandbox>", "eval"),  # noqa: S307
                                  namespace)
    except ExecTimeout:
        error = {"kind": "timeout", "message": f"execution exceeded {timeout_s:.1f}s",
                 "traceback": ""}
    except BaseException as exc:  # user code may raise anything, incl. SystemExit
        if isinstance(exc, (KeyboardInterrupt,)):
            error = {"kind": "interrupted", "message": str(exc) or "interrupted",
                     "traceback": traceback.format_exc()}
        else:
            kind = _ERROR_KINDS.get(type(exc).__name__, "runtime-error")
            error = {"kind": kind, "message": f"{type(exc).__name__}: {exc}",
                     "traceback": traceback.format_exc()}
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0)
        signal.signal(signal.SIGALRM, old_handler)

    expr = None
    if error is None and expr_value is not None:
        try:
            expr = repr(expr_value)
        except Exception as exc:
            expr = f"<unreprable: {type(exc).__name__}>"

    new_vars = sorted(name for name in set(namespace) - before
                      if not name.startswith("_"))
    return {
        "stdout": _truncate(buffer.getvalue()),
        "expr": expr if error is None else None,
        "error": error,
        "new_vars": new_vars,
    }
