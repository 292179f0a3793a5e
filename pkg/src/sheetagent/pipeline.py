"""The understand-execute-validate state machine.

One run: build a budgeted preview, generate a query-aware overview, then
iterate (multi-turn code execution -> checklist validation) until the
validator passes or the iteration cap is hit, threading improvement feedback
into each re-execution's opening prompt.
"""

from __future__ import annotations

import json
import logging
import re
import shutil
import string
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import SandboxError, SheetAgentError
from .llm import ChatMessage, LlmParams
from .sandbox import (
    DEFAULT_EXEC_TIMEOUT_MS,
    ExecError,
    ExecResult,
    Session,
    exec_code,
    open_session,
    close_session,
    replace_session,
)
from .serializer import DEFAULT_PREVIEW_BUDGET, DEFAULT_VARIANT, EncodingVariant, build_preview
from .workbook import load_workbook

log = logging.getLogger(__name__)

FINAL_ANSWER_RE = re.compile(
    r"^[\s>#*_`]*final\s+answer[\s*_`]*:?[\s*_`]*(?P<rest>.*)$",
    re.IGNORECASE,
)

DEFAULT_TOOLS = ("inspector", "search", "get_sheet_as_dataframe", "list_sheets")

_TOOL_DOCS = {
    "inspector": 'inspector(range_references, sheet_name, attributes=False) -> one row-major '
                 'grid per range; pass "A1:N20" or a list of range strings; attributes=True '
                 'adds formulas, fill color, and font',
    "search": 'search(query, mode="partial", sheet_name=None) -> matching cells with A1 '
              'positions; modes: exact, partial, whitespace-tolerant',
    "get_sheet_as_dataframe": 'get_sheet_as_dataframe(sheet_name, header_row=0, max_rows=None) '
                              '-> pandas DataFrame; header_row=0 treats every row as data, '
                              'header_row=k takes names from row k',
    "list_sheets": "list_sheets() -> sheet names with used-range dimensions",
}

_EDIT_TASK_BLOCK = """
This is an EDIT task: change the workbook itself, then answer with what you
changed. Besides the read tools you can call set_cell(sheet_name, ref, value)
and save_workbook() to persist your edits into the working file. Always call
save_workbook() before giving the final answer.
"""

_REPAIR_OVERVIEW = ("Your previous reply was missing the required sections. Respond again "
                    "with exactly the two headings **SHEET_SUMMARY:** and "
                    "**PROBLEM_INSIGHTS:**, each followed by its content.")

_REPAIR_VERDICT = ("Your previous reply could not be parsed. Respond again using exactly the "
                   "five headings **VALIDATION_STATUS:** (PASSED or FAILED), "
                   "**CONFIDENCE_SCORE:** (a number between 0 and 1), **ISSUES_FOUND:**, "
                   "**IMPROVEMENT_FEEDBACK:**, and **FINAL_ASSESSMENT:**.")


def load_prompt(name: str) -> string.Template:
    text = (resources.files("sheetagent") / "prompts" / f"{name}.txt").read_text("utf-8")
    return string.Template(text)


# ---------------------------------------------------------------------------
# Data types
# ---------------------------------------------------------------------------

@dataclass
class SheetOverview:
    sheet_summary: str
    problem_insights: str

    def render(self) -> str:
        return (f"SHEET SUMMARY:\n{self.sheet_summary.strip()}\n\n"
                f"PROBLEM INSIGHTS:\n{self.problem_insights.strip()}")


@dataclass
class ExecutionTurn:
    turn_index: int
    reasoning: str
    code: str | None = None
    result: ExecResult | None = None
    final_answer: str | None = None

    @property
    def kind(self) -> str:
        if self.code is not None:
            return "code"
        if self.final_answer is not None:
            return "final"
        return "reasoning"


@dataclass
class ExecutionOutcome:
    answer: str
    trace: list[ExecutionTurn]
    terminated_by: str  # "final-answer" | "turn-limit" | "fatal-error"


@dataclass
class ValidationVerdict:
    status: str  # "PASSED" | "FAILED"
    confidence: float
    issues: list[str] = field(default_factory=list)
    improvement_feedback: list[str] = field(default_factory=list)
    final_assessment: str = ""
    parse_degraded: bool = False

    @property
    def passed(self) -> bool:
        return self.status == "PASSED"

    def render(self) -> str:
        issues = "\n".join(f"- {line}" for line in self.issues) or "- none"
        feedback = "\n".join(f"- {line}" for line in self.improvement_feedback) or "- none"
        return (f"**VALIDATION_STATUS:** {self.status}\n\n"
                f"**CONFIDENCE_SCORE:** {self.confidence}\n\n"
                f"**ISSUES_FOUND:**\n{issues}\n\n"
                f"**IMPROVEMENT_FEEDBACK:**\n{feedback}\n\n"
                f"**FINAL_ASSESSMENT:**\n{self.final_assessment}".rstrip() + "\n")


@dataclass
class AgentResult:
    final_answer: str
    iterations: list[tuple[ExecutionOutcome, ValidationVerdict | None]]
    overview: SheetOverview | None
    elapsed_s: float
    validated: bool
    run_id: str | None = None
    trace_dir: str | None = None
    edited_path: str | None = None


class PipelineFatalError(SheetAgentError):
    """Fatal llm/sandbox failure; carries the partial result so far."""

    def __init__(self, message: str, partial: AgentResult | None = None):
        super().__init__(message)
        self.partial = partial


@dataclass
class PipelineConfig:
    llm: object = None
    executor: object = None
    validator_llm: object = None  # defaults to llm
    llm_params: LlmParams = field(default_factory=LlmParams)
    budget_tokens: int = DEFAULT_PREVIEW_BUDGET
    variant: EncodingVariant = DEFAULT_VARIANT
    max_turns: int = 10
    max_iterations: int = 3
    understanding: bool = True
    validation: bool = True
    strategy_adaptation: bool = False
    enabled_tools: tuple[str, ...] = DEFAULT_TOOLS
    exec_timeout_ms: int = DEFAULT_EXEC_TIMEOUT_MS
    trace_dir: str | None = None
    run_id: str | None = None
    edit_mode: bool = False
    edit_out_path: str | None = None

    def shape(self) -> str:
        """Loggable ablation shape, e.g. 'understand+execute+validate'."""
        stages = (["understand"] if self.understanding else []) + ["execute"] \
            + (["validate"] if self.validation else [])
        return "+".join(stages)


# ---------------------------------------------------------------------------
# Text helpers
# ---------------------------------------------------------------------------

def extract_code_blocks(text: str) -> list[str]:
    """Fenced code blocks in order, language tag stripped.

    A fence opens on a line that is ``` plus an optional language token and
    closes on a line that is exactly ``` — backticks embedded mid-line (for
    example inside string literals) do not toggle the fence.
    """
    blocks: list[str] = []
    current: list[str] | None = None
    for line in text.split("\n"):
        stripped = line.strip()
        if current is None:
            if re.fullmatch(r"```[\w+#.-]*", stripped):
                current = []
        else:
            if stripped == "```":
                blocks.append("\n".join(current))
                current = None
            else:
                current.append(line)
    return blocks


def strip_code_blocks(text: str) -> str:
    out = []
    in_block = False
    for line in text.split("\n"):
        stripped = line.strip()
        if not in_block and re.fullmatch(r"```[\w+#.-]*", stripped):
            in_block = True
            continue
        if in_block:
            if stripped == "```":
                in_block = False
            continue
        out.append(line)
    return "\n".join(out)


def strip_markdown(text: str) -> str:
    text = re.sub(r"\*\*|__|`", "", text)
    text = re.sub(r"^[ \t]*#+[ \t]*", "", text, flags=re.MULTILINE)
    return text.strip()


def detect_final_answer(text: str) -> str | None:
    """Answer text following a 'Final Answer' marker line, or None.

    Markers inside fenced code blocks are ignored; the answer is the rest of
    the message from the marker on, markdown-stripped.
    """
    lines = strip_code_blocks(text).split("\n")
    for i, line in enumerate(lines):
        m = FINAL_ANSWER_RE.match(line)
        if m:
            remainder = "\n".join([m.group("rest")] + lines[i + 1:])
            answer = strip_markdown(remainder)
            return answer if answer else None
    return None


def _render_exec_result(result: ExecResult) -> str:
    parts = ["Code execution result:"]
    if result.stdout:
        parts.append("Output:\n" + result.stdout.rstrip("\n"))
    if result.expr is not None:
        parts.append("Expression result: " + result.expr)
    if result.error is not None:
        parts.append(f"Error ({result.error.kind}): {result.error.message}")
        if result.error.traceback:
            parts.append(result.error.traceback.rstrip("\n"))
    if len(parts) == 1:
        parts.append("(no output)")
    return "\n".join(parts)


# ---------------------------------------------------------------------------
# Understand
# ---------------------------------------------------------------------------

_OVERVIEW_HEADINGS = {
    "summary": re.compile(r"^[\s>#*_]*sheet[ _]summary[\s*_]*:?[\s*_]*$", re.I | re.M),
    "insights": re.compile(r"^[\s>#*_]*problem[ _-]?(specific[ _-])?insights[\s*_]*:?[\s*_]*$", re.I | re.M),
}


def _parse_overview(text: str) -> SheetOverview | None:
    matches = {}
    for key, pattern in _OVERVIEW_HEADINGS.items():
        m = pattern.search(text)
        if not m:
            return None
        matches[key] = m
    s, i = matches["summary"], matches["insights"]
    if s.start() < i.start():
        summary = text[s.end():i.start()]
        insights = text[i.end():]
    else:
        insights = text[i.end():s.start()]
        summary = text[s.end():]
    summary, insights = summary.strip(), insights.strip()
    if not summary or not insights:
        return None
    return SheetOverview(sheet_summary=summary, problem_insights=insights)


def understand(workbook, query: str, llm, budget: int = DEFAULT_PREVIEW_BUDGET,
               variant: EncodingVariant = DEFAULT_VARIANT, *,
               preview: str | None = None,
               llm_params: LlmParams = LlmParams()) -> SheetOverview:
    """Generate the sheet summary + problem-specific insights overview."""
    if preview is None:
        preview = build_preview(workbook, budget, variant).render()
    prompt = load_prompt("understand").substitute(query=query, preview=preview)
    messages = [ChatMessage("system", prompt), ChatMessage("user", query)]
    text = llm.chat(messages, llm_params)
    overview = _parse_overview(text)
    if overview is None:
        messages += [ChatMessage("assistant", text), ChatMessage("user", _REPAIR_OVERVIEW)]
        text = llm.chat(messages, llm_params)
        overview = _parse_overview(text)
    if overview is None:
        log.warning("overview parse failed twice; falling back to raw text")
        raw = text.strip() or "(empty overview)"
        overview = SheetOverview(sheet_summary=raw, problem_insights=raw)
    return overview


# ---------------------------------------------------------------------------
# Execute
# ---------------------------------------------------------------------------

class _SessionBox:
    """Holds the live session so replacement survives across turns."""

    def __init__(self, session: Session):
        self.session = session


def _tools_doc(enabled: tuple[str, ...]) -> str:
    return "\n".join(f"- {_TOOL_DOCS[name]}" for name in enabled if name in _TOOL_DOCS)


def build_execute_prompt(query: str, preview: str, overview: SheetOverview | None,
                         feedback: list[str] | None,
                         enabled_tools: tuple[str, ...] = DEFAULT_TOOLS,
                         edit_mode: bool = False,
                         strategy_adaptation: bool = False) -> str:
    overview_block = ""
    if overview is not None:
        overview_block = "\nWORKBOOK OVERVIEW:\n" + overview.render() + "\n"
    feedback_block = ""
    if feedback:
        feedback_block = ("\nIMPROVEMENT FEEDBACK FROM THE PREVIOUS VALIDATION "
                          "(address every point):\n"
                          + "\n".join(f"- {line}" for line in feedback) + "\n")
    task_block = _EDIT_TASK_BLOCK if edit_mode else ""
    if strategy_adaptation:
        task_block += load_prompt("strategy_adaptation").template
    return load_prompt("execute").substitute(
        tools_doc=_tools_doc(enabled_tools),
        task_block=task_block,
        query=query,
        overview_block=overview_block,
        preview=preview,
        feedback_block=feedback_block,
    )


def _exec_with_retry(box: _SessionBox, code: str, timeout_ms: int) -> ExecResult:
    """Run code; replace the session and retry once on fatal sandbox errors."""
    try:
        result = exec_code(box.session, code, timeout_ms)
    except SandboxError:
        log.warning("sandbox failure; replacing session and retrying once")
        box.session = replace_session(box.session)
        result = exec_code(box.session, code, timeout_ms)
    if box.session.tainted:
        # Interpreter state after a timeout is undefined; start fresh.
        box.session = replace_session(box.session)
    return result


def execute(query: str, overview: SheetOverview | None, preview: str,
            sandbox_session: Session | _SessionBox, llm,
            feedback: list[str] | None = None, max_turns: int = 10, *,
            enabled_tools: tuple[str, ...] = DEFAULT_TOOLS,
            edit_mode: bool = False, strategy_adaptation: bool = False,
            exec_timeout_ms: int = DEFAULT_EXEC_TIMEOUT_MS,
            llm_params: LlmParams = LlmParams()) -> ExecutionOutcome:
    """The iterative reasoning/execution cycle for one pipeline iteration."""
    box = sandbox_session if isinstance(sandbox_session, _SessionBox) \
        else _SessionBox(sandbox_session)
    opening = build_execute_prompt(query, preview, overview, feedback,
                                   enabled_tools, edit_mode, strategy_adaptation)
    conversation = [ChatMessage("system", opening), ChatMessage("user", query)]
    turns: list[ExecutionTurn] = []

    for turn_index in range(1, max_turns + 1):
        text = llm.chat(conversation, llm_params)
        conversation.append(ChatMessage("assistant", text))
        blocks = extract_code_blocks(text)

        if blocks:
            code = blocks[0]  # only the first fenced block runs
            try:
                result = _exec_with_retry(box, code, exec_timeout_ms)
            except SandboxError as exc:
                crash = ExecResult(error=ExecError("worker-crash", str(exc)))
                turns.append(ExecutionTurn(turn_index, reasoning=text, code=code,
                                           result=crash))
                log.error("sandbox fatal after replacement retry: %s", exc)
                return ExecutionOutcome(answer=_best_effort_answer(turns),
                                        trace=turns, terminated_by="fatal-error")
            turns.append(ExecutionTurn(turn_index, reasoning=text, code=code,
                                       result=result))
            conversation.append(ChatMessage("user", _render_exec_result(result)))
            continue

        answer = detect_final_answer(text)
        if answer:
            turns.append(ExecutionTurn(turn_index, reasoning=text, final_answer=answer))
            return ExecutionOutcome(answer=answer, trace=turns,
                                    terminated_by="final-answer")

        turns.append(ExecutionTurn(turn_index, reasoning=text))
        conversation.append(ChatMessage(
            "user", "Continue. Emit one python code block, or finish with a "
                    "'Final Answer:' line."))

    return ExecutionOutcome(answer=_best_effort_answer(turns), trace=turns,
                            terminated_by="turn-limit")


def _best_effort_answer(turns: list[ExecutionTurn]) -> str:
    for turn in reversed(turns):
        if turn.reasoning.strip():
            return strip_markdown(strip_code_blocks(turn.reasoning))
    return ""


# ---------------------------------------------------------------------------
# Validate
# ---------------------------------------------------------------------------

_HEADING_RE = {
    "status": re.compile(r"\*{0,2}VALIDATION_STATUS:?\*{0,2}:?\s*(?P<v>PASSED|FAILED)", re.I),
    "confidence": re.compile(r"\*{0,2}CONFIDENCE_SCORE:?\*{0,2}:?\s*(?P<v>[-+0-9.eE]+)"),
}
_SECTION_RE = re.compile(
    r"\*{0,2}(?P<name>VALIDATION_STATUS|CONFIDENCE_SCORE|ISSUES_FOUND|"
    r"IMPROVEMENT_FEEDBACK|FINAL_ASSESSMENT):?\*{0,2}:?", re.I)


class _VerdictParseError(ValueError):
    pass


def _bullets(block: str) -> list[str]:
    items = []
    for line in block.split("\n"):
        stripped = line.strip()
        if stripped.startswith(("-", "*")):
            item = stripped.lstrip("-* ").strip()
            if item and item.lower() not in ("none", "n/a", "none."):
                items.append(item)
    return items


def parse_validation_verdict(text: str) -> ValidationVerdict:
    """Parse the five bold-heading sections of a validator reply.

    Raises on a missing status/confidence or a confidence outside [0,1].
    """
    m_status = _HEADING_RE["status"].search(text)
    m_conf = _HEADING_RE["confidence"].search(text)
    if not m_status or not m_conf:
        raise _VerdictParseError("missing VALIDATION_STATUS or CONFIDENCE_SCORE")
    status = m_status.group("v").upper()
    try:
        confidence = float(m_conf.group("v"))
    except ValueError as exc:
        raise _VerdictParseError(f"bad confidence {m_conf.group('v')!r}") from exc
    if not 0.0 <= confidence <= 1.0:
        raise _VerdictParseError(f"confidence {confidence} outside [0, 1]")

    sections: dict[str, str] = {}
    matches = list(_SECTION_RE.finditer(text))
    for i, m in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        sections[m.group("name").upper()] = text[m.end():end].strip()

    issues = _bullets(sections.get("ISSUES_FOUND", ""))
    feedback = _bullets(sections.get("IMPROVEMENT_FEEDBACK", ""))
    if status == "FAILED" and not issues:
        issues = ["validator reported failure without itemized issues"]
    return ValidationVerdict(
        status=status,
        confidence=confidence,
        issues=issues,
        improvement_feedback=feedback,
        final_assessment=sections.get("FINAL_ASSESSMENT", "").strip(),
    )


def render_trace_for_validation(outcome: ExecutionOutcome) -> str:
    parts = []
    for turn in outcome.trace:
        parts.append(f"--- TURN {turn.turn_index} ({turn.kind}) ---")
        parts.append(turn.reasoning.strip())
        if turn.result is not None:
            parts.append(_render_exec_result(turn.result))
    return "\n".join(parts)


_EDIT_VALIDATE_ADDENDUM = ("\n- Edit task: explicitly check the editing area — confirm through "
                           "the logs that the intended cells were written and saved.\n")


def validate(query: str, preview: str, outcome: ExecutionOutcome, llm, *,
             edit_mode: bool = False,
             llm_params: LlmParams = LlmParams()) -> ValidationVerdict:
    """Checklist-driven verdict over the full trace; fails open after two
    unparseable replies (PASSED at confidence 0.5) so the loop terminates."""
    prompt = load_prompt("validate").substitute(
        query=query,
        preview=preview,
        trace=render_trace_for_validation(outcome),
        answer=outcome.answer,
        edit_addendum=_EDIT_VALIDATE_ADDENDUM if edit_mode else "",
    )
    messages = [ChatMessage("system", prompt),
                ChatMessage("user", "Produce the validation verdict now.")]
    text = llm.chat(messages, llm_params)
    try:
        return parse_validation_verdict(text)
    except _VerdictParseError as first_error:
        messages += [ChatMessage("assistant", text), ChatMessage("user", _REPAIR_VERDICT)]
        text = llm.chat(messages, llm_params)
        try:
            return parse_validation_verdict(text)
        except _VerdictParseError as second_error:
            log.warning("verdict unparseable twice (%s; %s); failing open as "
                        "PASSED@0.5", first_error, second_error)
            return ValidationVerdict(status="PASSED", confidence=0.5,
                                     final_assessment="verdict parse failed; fail-open",
                                     parse_degraded=True)


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

class TraceWriter:
    """Run trace layout: trace/<run_id>/{overview.txt, iteration_<i>/turn_<j>.json,
    verdict_<i>.txt, answer.txt}."""

    def __init__(self, root: str | Path | None, run_id: str):
        self.dir = Path(root) / run_id if root else None
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)

    def overview(self, overview: SheetOverview) -> None:
        if self.dir is not None:
            (self.dir / "overview.txt").write_text(overview.render() + "\n", "utf-8")

    def turn(self, iteration: int, turn: ExecutionTurn) -> None:
        if self.dir is None:
            return
        folder = self.dir / f"iteration_{iteration}"
        folder.mkdir(exist_ok=True)
        payload = {
            "turn_index": turn.turn_index,
            "kind": turn.kind,
            "reasoning": turn.reasoning,
            "code": turn.code,
            "final_answer": turn.final_answer,
            "result": turn.result.to_wire(turn.turn_index) if turn.result else None,
        }
        path = folder / f"turn_{turn.turn_index}.json"
        path.write_text(json.dumps(payload, indent=2, ensure_ascii=False,
                                   sort_keys=True) + "\n", "utf-8")

    def verdict(self, iteration: int, verdict: ValidationVerdict) -> None:
        if self.dir is not None:
            (self.dir / f"verdict_{iteration}.txt").write_text(verdict.render(), "utf-8")

    def answer(self, text: str) -> None:
        if self.dir is not None:
            (self.dir / "answer.txt").write_text(text + "\n", "utf-8")


def run_pipeline(workbook_path, query: str, config: PipelineConfig) -> AgentResult:
    """Understand once, then up to max_iterations x (execute -> validate)."""
    start = time.monotonic()
    run_id = config.run_id or time.strftime("run-%Y%m%d-%H%M%S")
    tracer = TraceWriter(config.trace_dir, run_id)
    validator = config.validator_llm or config.llm
    log.info("pipeline shape: %s", config.shape())

    workbook_path = str(workbook_path)
    session_path = workbook_path
    edited_path = None
    if config.edit_mode:
        if not config.edit_out_path:
            raise ValueError("edit_mode requires edit_out_path")
        edited_path = str(config.edit_out_path)
        shutil.copyfile(workbook_path, edited_path)
        session_path = edited_path

    wb = load_workbook(workbook_path)
    preview = build_preview(wb, config.budget_tokens, config.variant).render()

    overview = None
    if config.understanding:
        overview = understand(wb, query, config.llm, config.budget_tokens,
                              config.variant, preview=preview,
                              llm_params=config.llm_params)
        tracer.overview(overview)

    iterations: list[tuple[ExecutionOutcome, ValidationVerdict | None]] = []
    box = _SessionBox(open_session(config.executor, session_path))
    validated = False
    final_answer = ""
    try:
        feedback: list[str] | None = None
        for iteration in range(1, config.max_iterations + 1):
            outcome = execute(query, overview, preview, box, config.llm,
                              feedback=feedback, max_turns=config.max_turns,
                              enabled_tools=config.enabled_tools,
                              edit_mode=config.edit_mode,
                              strategy_adaptation=config.strategy_adaptation,
                              exec_timeout_ms=config.exec_timeout_ms,
                              llm_params=config.llm_params)
            for turn in outcome.trace:
                tracer.turn(iteration, turn)

            if outcome.terminated_by == "fatal-error":
                iterations.append((outcome, None))
                partial = AgentResult(final_answer=outcome.answer,
                                      iterations=iterations, overview=overview,
                                      elapsed_s=time.monotonic() - start,
                                      validated=False, run_id=run_id,
                                      trace_dir=str(tracer.dir) if tracer.dir else None,
                                      edited_path=edited_path)
                raise PipelineFatalError("sandbox failed fatally during execution",
                                         partial=partial)

            final_answer = outcome.answer
            if not config.validation:
                iterations.append((outcome, None))
                validated = False
                break

            verdict = validate(query, preview, outcome, validator,
                               edit_mode=config.edit_mode,
                               llm_params=config.llm_params)
            tracer.verdict(iteration, verdict)
            iterations.append((outcome, verdict))
            if verdict.passed:
                validated = True
                break
            feedback = verdict.improvement_feedback or verdict.issues
    finally:
        close_session(box.session)

    tracer.answer(final_answer)
    return AgentResult(
        final_answer=final_answer,
        iterations=iterations,
        overview=overview,
        elapsed_s=time.monotonic() - start,
        validated=validated,
        run_id=run_id,
        trace_dir=str(tracer.dir) if tracer.dir else None,
        edited_path=edited_path,
    )
