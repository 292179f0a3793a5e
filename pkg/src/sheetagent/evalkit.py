"""Benchmark harness: case loading, suite runs, LLM-as-judge scoring,
workbook diffing for edit tasks, and report aggregation."""

from __future__ import annotations

import hashlib
import json
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from .cellref import CellRef, RangeRef, parse_range_ref
from .errors import CaseSchemaError, JudgeError
from .llm import ChatMessage, LlmParams
from .pipeline import PipelineConfig, run_pipeline
from .workbook import CellError, load_workbook

CASE_SCHEMA_VERSION = 1
CATEGORIES = ("complex", "multi-table", "large-sheet", "edit", "qa")

# Display order of the report table; the generic qa bucket only shows in Total.
TABLE_COLUMNS = (("complex", "Complex"), ("multi-table", "Multi-table"),
                 ("large-sheet", "Large Sheet"), ("edit", "Edit"))


@dataclass(frozen=True)
class BenchCase:
    id: str
    workbook_path: str
    question: str
    category: str
    expected_answer: str | None = None
    expected_workbook_path: str | None = None
    tags: tuple[str, ...] = ()
    check_ranges: tuple[str, ...] | None = None


def load_cases(path) -> list[BenchCase]:
    """Read newline-delimited JSON cases; schema-validated, duplicate ids rejected."""
    cases: list[BenchCase] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not any(line.strip() for line in lines):
        raise CaseSchemaError("case file is empty")
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CaseSchemaError(f"invalid JSON: {exc}", line=lineno) from exc
        cases.append(_validate_case(raw, lineno, seen))
    return cases


def _validate_case(raw: dict, lineno: int, seen: set[str]) -> BenchCase:
    def fail(message: str):
        raise CaseSchemaError(message, line=lineno)

    if not isinstance(raw, dict):
        fail("case must be a JSON object")
    if raw.get("schema") != CASE_SCHEMA_VERSION:
        fail(f"missing or unsupported schema version (expect \"schema\": {CASE_SCHEMA_VERSION})")
    case_id = raw.get("id")
    if not case_id or not isinstance(case_id, str):
        fail("missing case id")
    if case_id in seen:
        fail(f"duplicate case id {case_id!r}")
    seen.add(case_id)
    for key in ("workbook_path", "question"):
        if not raw.get(key) or not isinstance(raw[key], str):
            fail(f"case {case_id!r}: missing {key}")
    category = raw.get("category")
    if category not in CATEGORIES:
        fail(f"case {case_id!r}: category must be one of {CATEGORIES}")
    if category == "edit":
        if not raw.get("expected_workbook_path"):
            fail(f"case {case_id!r}: edit cases need expected_workbook_path")
    elif not raw.get("expected_answer"):
        fail(f"case {case_id!r}: qa cases need expected_answer")
    tags = raw.get("tags", [])
    if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
        fail(f"case {case_id!r}: tags must be a list of strings")
    check_ranges = raw.get("check_ranges")
    if check_ranges is not None and not isinstance(check_ranges, list):
        fail(f"case {case_id!r}: check_ranges must be a list of range strings")
    return BenchCase(
        id=case_id,
        workbook_path=raw["workbook_path"],
        question=raw["question"],
        category=category,
        expected_answer=raw.get("expected_answer"),
        expected_workbook_path=raw.get("expected_workbook_path"),
        tags=tuple(tags),
        check_ranges=tuple(check_ranges) if check_ranges else None,
    )


# ---------------------------------------------------------------------------
# LLM-as-judge
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JudgeVerdict:
    is_correct: bool
    confidence_score: float
    reasoning: str


_JUDGE_REPAIR = ('Your previous reply was not valid JSON. Respond again with ONLY a JSON '
                 'object holding exactly the keys "is_correct" (true/false), '
                 '"confidence_score" (0.0-1.0), and "reasoning" (string).')


def default_judge_prompt_path() -> Path:
    return Path(str(resources.files("sheetagent") / "prompts" / "judge.txt"))


def judge_prompt_sha256(prompt_path: str | Path | None = None) -> str:
    path = Path(prompt_path) if prompt_path else default_judge_prompt_path()
    return hashlib.sha256(path.read_bytes()).hexdigest()


def render_judge_prompt(question: str, expected: str, actual: str,
                        tags: tuple[str, ...] = (),
                        prompt_path: str | Path | None = None) -> str:
    path = Path(prompt_path) if prompt_path else default_judge_prompt_path()
    template = string.Template(path.read_text("utf-8"))
    return template.substitute(question=question, expected_answer=expected,
                               agent_answer=actual,
                               tags_str=", ".join(tags) if tags else "none")


def _parse_json_object(text: str) -> dict | None:
    text = text.strip()
    try:
        obj = json.loads(text)
        if isinstance(obj, dict):
            return obj
    except json.JSONDecodeError:
        pass
    start, end = text.find("{"), text.rfind("}")
    if start != -1 and end > start:
        try:
            obj = json.loads(text[start:end + 1])
            if isinstance(obj, dict):
                return obj
        except json.JSONDecodeError:
            return None
    return None


def _verdict_from(obj: dict | None) -> JudgeVerdict | None:
    if obj is None:
        return None
    if not isinstance(obj.get("is_correct"), bool):
        return None
    confidence = obj.get("confidence_score")
    if not isinstance(confidence, (int, float)) or isinstance(confidence, bool):
        return None
    if not 0.0 <= float(confidence) <= 1.0:
        return None
    reasoning = obj.get("reasoning")
    if not isinstance(reasoning, str):
        return None
    return JudgeVerdict(is_correct=obj["is_correct"],
                        confidence_score=float(confidence), reasoning=reasoning)


def judge_answer(question: str, expected: str, actual: str, llm,
                 tags: tuple[str, ...] = (),
                 prompt_path: str | Path | None = None,
                 llm_params: LlmParams = LlmParams()) -> JudgeVerdict:
    """Score an answer with the evaluator prompt; one repair retry on bad JSON."""
    prompt = render_judge_prompt(question, expected, actual, tags, prompt_path)
    messages = [ChatMessage("user", prompt)]
    text = llm.chat(messages, llm_params)
    verdict = _verdict_from(_parse_json_object(text))
    if verdict is not None:
        return verdict
    messages += [ChatMessage("assistant", text), ChatMessage("user", _JUDGE_REPAIR)]
    text = llm.chat(messages, llm_params)
    verdict = _verdict_from(_parse_json_object(text))
    if verdict is None:
        raise JudgeError(f"judge output unparseable after retry: {text[:300]!r}")
    return verdict


# ---------------------------------------------------------------------------
# Workbook diffing for edit tasks
# ---------------------------------------------------------------------------

REL_TOLERANCE = 1e-9


@dataclass(frozen=True)
class EditCheck:
    passed: bool
    mismatches: tuple[tuple[str, str, object, object], ...]  # (sheet, ref, expected, actual)


def _values_equal(a, b) -> bool:
    if isinstance(a, bool) or isinstance(b, bool):
        return a is b if isinstance(a, bool) and isinstance(b, bool) else False
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return abs(a - b) <= REL_TOLERANCE * max(abs(a), abs(b), 1e-300)
    if isinstance(a, CellError) and isinstance(b, CellError):
        return a.code == b.code
    return a == b


def compare_workbooks(expected_path, actual_path,
                      check_ranges: list[str] | tuple[str, ...] | None = None) -> EditCheck:
    """Cell-by-cell value comparison (relative tolerance 1e-9 on numbers).

    Compares over check_ranges when given, else the union of both files'
    used ranges, sheet by sheet.
    """
    expected = load_workbook(expected_path)
    actual = load_workbook(actual_path)
    mismatches: list[tuple[str, str, object, object]] = []

    for name in dict.fromkeys(expected.sheet_names + actual.sheet_names):
        if name not in expected.sheet_names or name not in actual.sheet_names:
            mismatches.append((name, "*", "sheet present" if name in expected.sheet_names
                               else "sheet absent", "sheet absent" if name not in
                               actual.sheet_names else "sheet present"))
            continue
        exp_sheet = expected.sheet(name)
        act_sheet = actual.sheet(name)
        if check_ranges:
            regions = [parse_range_ref(r) for r in check_ranges]
        else:
            exp_used = exp_sheet.used_range()
            act_used = act_sheet.used_range()
            top = CellRef(min(exp_used.start.row, act_used.start.row),
                          min(exp_used.start.col, act_used.start.col))
            bottom = CellRef(max(exp_used.end.row, act_used.end.row),
                             max(exp_used.end.col, act_used.end.col))
            regions = [RangeRef(top, bottom)]
        for region in regions:
            for ref in region.cells():
                want = exp_sheet.cell(ref).value
                got = act_sheet.cell(ref).value
                if (want is None and got == "") or (want == "" and got is None):
                    continue  # both render empty
                if not _values_equal(want, got):
                    mismatches.append((name, ref.to_a1(), want, got))
    return EditCheck(passed=not mismatches, mismatches=tuple(mismatches))


# ---------------------------------------------------------------------------
# Suite runner and report
# ---------------------------------------------------------------------------

@dataclass
class CaseResult:
    case_id: str
    category: str
    agent_answer: str | None = None
    verdict: JudgeVerdict | EditCheck | None = None
    judge_error: str | None = None
    error: str | None = None
    elapsed_s: float = 0.0
    trace_path: str | None = None

    @property
    def correct(self) -> bool:
        if isinstance(self.verdict, JudgeVerdict):
            return self.verdict.is_correct
        if isinstance(self.verdict, EditCheck):
            return self.verdict.passed
        return False


@dataclass
class SuiteReport:
    results: list[CaseResult]
    judge_prompt_sha256: str

    def _bucket(self, category: str) -> tuple[int, int]:
        rows = [r for r in self.results if r.category == category]
        return sum(r.correct for r in rows), len(rows)

    @property
    def total(self) -> int:
        return len(self.results)

    @property
    def correct(self) -> int:
        return sum(r.correct for r in self.results)

    @property
    def judge_errors(self) -> int:
        return sum(1 for r in self.results if r.judge_error)

    @property
    def case_errors(self) -> int:
        return sum(1 for r in self.results if r.error)

    @property
    def accuracy(self) -> float | None:
        denominator = self.total - self.judge_errors
        return self.correct / denominator if denominator else None

    def render_table(self) -> str:
        header = [label for _, label in TABLE_COLUMNS] + ["Total"]
        scored = [self._bucket(cat) for cat, _ in TABLE_COLUMNS]
        scored.append((self.correct, self.total))
        cells = [f"{c}/{t}" if t else "-" for c, t in scored]
        widths = [max(len(h), len(v)) for h, v in zip(header, cells)]
        line = " | ".join(h.ljust(w) for h, w in zip(header, widths))
        rule = "-+-".join("-" * w for w in widths)
        values = " | ".join(v.ljust(w) for v, w in zip(cells, widths))
        footer = []
        if self.judge_errors:
            footer.append(f"judge errors: {self.judge_errors} (excluded from accuracy)")
        if self.case_errors:
            footer.append(f"case errors: {self.case_errors}")
        if self.accuracy is not None:
            footer.append(f"accuracy: {self.accuracy:.3f}")
        return "\n".join([line, rule, values] + footer)

    def to_json(self) -> dict:
        categories = {}
        for cat in CATEGORIES:
            correct, total = self._bucket(cat)
            if total:
                categories[cat] = {"correct": correct, "total": total}
        return {
            "schema": 1,
            "judge_prompt_sha256": self.judge_prompt_sha256,
            "totals": {
                "correct": self.correct,
                "total": self.total,
                "judge_errors": self.judge_errors,
                "case_errors": self.case_errors,
                "accuracy": self.accuracy,
            },
            "categories": categories,
            "cases": [
                {
                    "id": r.case_id,
                    "category": r.category,
                    "answer": r.agent_answer,
                    "correct": r.correct,
                    "judge_error": r.judge_error,
                    "error": r.error,
                    "elapsed_s": round(r.elapsed_s, 3),
                    "trace_path": r.trace_path,
                }
                for r in sorted(self.results, key=lambda r: r.case_id)
            ],
        }


def run_case(case: BenchCase, config: PipelineConfig, judge_llm,
             judge_prompt_path: str | Path | None = None) -> CaseResult:
    """Run one benchmark case end to end; never raises."""
    import time

    result = CaseResult(case_id=case.id, category=case.category)
    start = time.monotonic()
    try:
        config = replace(config, run_id=config.run_id or case.id)
        if case.category == "edit":
            out = config.edit_out_path
            if not out and config.trace_dir:
                out = str(Path(config.trace_dir) / f"{case.id}.edited.xlsx")
            if not out:
                out = str(Path(case.workbook_path).with_suffix("")) + f".{case.id}.edited.xlsx"
            config = replace(config, edit_mode=True, edit_out_path=out)
        agent = run_pipeline(case.workbook_path, case.question, config)
        result.agent_answer = agent.final_answer
        result.trace_path = agent.trace_dir
        if case.category == "edit":
            result.verdict = compare_workbooks(case.expected_workbook_path,
                                               agent.edited_path,
                                               check_ranges=case.check_ranges)
        else:
            try:
                result.verdict = judge_answer(case.question, case.expected_answer,
                                              agent.final_answer, judge_llm,
                                              tags=case.tags,
                                              prompt_path=judge_prompt_path)
            except JudgeError as exc:
                result.judge_error = str(exc)
    except Exception as exc:  # per-case isolation: failures never abort the suite
        result.error = f"{type(exc).__name__}: {exc}"
    result.elapsed_s = time.monotonic() - start
    return result


def run_suite(cases: list[BenchCase], config_factory, judge_factory,
              parallelism: int = 1,
              judge_prompt_path: str | Path | None = None) -> SuiteReport:
    """Run every case through its own pipeline and aggregate a report.

    config_factory(case) -> PipelineConfig and judge_factory(case) -> llm are
    called per case so parallel runs stay fully isolated (scripted clients
    hold cursors and must not be shared).
    """
    def one(case: BenchCase) -> CaseResult:
        return run_case(case, config_factory(case), judge_factory(case),
                        judge_prompt_path=judge_prompt_path)

    if parallelism <= 1:
        results = [one(case) for case in cases]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(one, cases))
    return SuiteReport(results=results,
                       judge_prompt_sha256=judge_prompt_sha256(judge_prompt_path))
