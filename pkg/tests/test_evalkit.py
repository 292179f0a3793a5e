import json

import pytest
from hypothesis import given, strategies as st

from sheetagent.errors import CaseSchemaError, JudgeError
from sheetagent.evalkit import (
    BenchCase,
    CaseResult,
    EditCheck,
    JudgeVerdict,
    SuiteReport,
    compare_workbooks,
    judge_answer,
    judge_prompt_sha256,
    load_cases,
    render_judge_prompt,
    run_suite,
)
from sheetagent.llm import ScriptedLlm
from sheetagent.pipeline import PipelineConfig
from sheetagent.sandbox import scripted_stub
from sheetagent.workbook import Workbook, load_workbook, save_workbook, set_cell

from . import case_scripts as cs


# --- load_cases ---------------------------------------------------------------

def _case_line(**overrides):
    base = {"schema": 1, "id": "c1", "workbook_path": "wb.xlsx",
            "question": "q?", "category": "qa", "expected_answer": "42"}
    base.update(overrides)
    return json.dumps(base)


def test_load_valid_cases(tmp_path):
    path = tmp_path / "cases.ndjson"
    path.write_text("\n".join([
        _case_line(id="a", category="complex"),
        _case_line(id="b", category="multi-table", tags=["hard"]),
        _case_line(id="c", category="edit", expected_answer=None,
                   expected_workbook_path="expected.xlsx"),
    ]))
    cases = load_cases(path)
    assert [c.id for c in cases] == ["a", "b", "c"]
    assert cases[1].tags == ("hard",)
    assert cases[2].expected_workbook_path == "expected.xlsx"


def test_load_rejects_missing_expected_answer(tmp_path):
    path = tmp_path / "cases.ndjson"
    path.write_text(_case_line(expected_answer=None))
    with pytest.raises(CaseSchemaError) as excinfo:
        load_cases(path)
    assert excinfo.value.line == 1


def test_load_rejects_duplicate_ids(tmp_path):
    path = tmp_path / "cases.ndjson"
    path.write_text(_case_line(id="dup") + "\n" + _case_line(id="dup"))
    with pytest.raises(CaseSchemaError) as excinfo:
        load_cases(path)
    assert "dup" in str(excinfo.value) and excinfo.value.line == 2


def test_load_rejects_bad_json_schema_and_category(tmp_path):
    path = tmp_path / "cases.ndjson"
    path.write_text("{not json")
    with pytest.raises(CaseSchemaError):
        load_cases(path)
    path.write_text(_case_line(schema=99))
    with pytest.raises(CaseSchemaError):
        load_cases(path)
    path.write_text(_case_line(category="weird"))
    with pytest.raises(CaseSchemaError):
        load_cases(path)
    path.write_text("\n\n")
    with pytest.raises(CaseSchemaError):
        load_cases(path)


# --- judge ---------------------------------------------------------------------

def test_judge_prompt_renders_fields_and_rule():
    prompt = render_judge_prompt("How many?", "163802, 6987, much higher",
                                 "163,802.21 tonnes vs 6,986.95 tonnes",
                                 tags=("numerical",))
    assert "QUESTION: How many?" in prompt
    assert "EXPECTED ANSWER: 163802, 6987, much higher" in prompt
    assert "TAGS: numerical" in prompt
    assert "the agent's answer is INCORRECT" in prompt  # data-availability rule
    assert "minor rounding differences" in prompt
    assert '"is_correct": true/false' in prompt


def test_judge_prompt_hash_is_stable():
    assert judge_prompt_sha256() == judge_prompt_sha256()
    assert len(judge_prompt_sha256()) == 64


def test_judge_parses_verdict():
    llm = ScriptedLlm(['{"is_correct": true, "confidence_score": 0.98, '
                       '"reasoning": "exact match"}'])
    verdict = judge_answer("q", "NL", "NL", llm)
    assert verdict.is_correct and verdict.confidence_score == 0.98


def test_judge_rounding_tolerance_flow():
    llm = ScriptedLlm([{"match": "163,802.21",
                        "reply": '{"is_correct": true, "confidence_score": 0.9, '
                                 '"reasoning": "minor rounding differences"}'}])
    verdict = judge_answer(cs.CASE3_QUERY, "163802, 6987, much higher",
                           "Scotland: 163,802.21 tonnes; EWNI: 6,986.95 tonnes; "
                           "much higher", llm)
    assert verdict.is_correct


def test_judge_data_availability_fixture():
    # Expected answer is a concrete value; agent claims no data available.
    llm = ScriptedLlm([{"match": "no data available",
                        "reply": '{"is_correct": false, "confidence_score": 0.95, '
                                 '"reasoning": "expected value present, agent claims '
                                 'no data available"}'}])
    verdict = judge_answer("What is the 2023 total?", "163802",
                           "no data available", llm)
    assert not verdict.is_correct


def test_judge_repair_retry_and_error():
    llm = ScriptedLlm(["not json at all",
                       'Sure: {"is_correct": false, "confidence_score": 0.7, '
                       '"reasoning": "wrong"}'])
    verdict = judge_answer("q", "a", "b", llm)
    assert not verdict.is_correct and verdict.confidence_score == 0.7
    assert len(llm.calls) == 2

    llm = ScriptedLlm(["nope", "still nope"])
    with pytest.raises(JudgeError):
        judge_answer("q", "a", "b", llm)


def test_judge_rejects_out_of_range_confidence():
    llm = ScriptedLlm(['{"is_correct": true, "confidence_score": 1.7, "reasoning": "x"}',
                       '{"is_correct": true, "confidence_score": 0.9, "reasoning": "x"}'])
    verdict = judge_answer("q", "a", "a", llm)
    assert verdict.confidence_score == 0.9  # first reply rejected, repaired


# --- compare_workbooks ------------------------------------------------------------

def _simple_wb(value_b2=2):
    wb = Workbook()
    sheet = wb.add_sheet("S")
    sheet.set("A1", "x")
    sheet.set("B2", value_b2)
    return wb


def test_compare_identical(tmp_path):
    a, b = tmp_path / "a.xlsx", tmp_path / "b.xlsx"
    save_workbook(_simple_wb(), a)
    save_workbook(_simple_wb(), b)
    check = compare_workbooks(a, b)
    assert check.passed and check.mismatches == ()


def test_compare_single_changed_cell(tmp_path):
    a, b = tmp_path / "a.xlsx", tmp_path / "b.xlsx"
    save_workbook(_simple_wb(2), a)
    save_workbook(_simple_wb(3), b)
    check = compare_workbooks(a, b)
    assert not check.passed
    assert [(m[0], m[1]) for m in check.mismatches] == [("S", "B2")]


def test_compare_numeric_tolerance(tmp_path):
    a, b = tmp_path / "a.xlsx", tmp_path / "b.xlsx"
    save_workbook(_simple_wb(1.0), a)
    save_workbook(_simple_wb(1.0 + 1e-12), b)
    assert compare_workbooks(a, b).passed
    save_workbook(_simple_wb(1.0 + 1e-6), b)
    assert not compare_workbooks(a, b).passed


def test_compare_with_check_ranges(tmp_path):
    a, b = tmp_path / "a.xlsx", tmp_path / "b.xlsx"
    save_workbook(_simple_wb(2), a)
    save_workbook(_simple_wb(3), b)
    assert compare_workbooks(a, b, check_ranges=["A1"]).passed
    assert not compare_workbooks(a, b, check_ranges=["B2"]).passed


def test_compare_missing_sheet(tmp_path):
    a, b = tmp_path / "a.xlsx", tmp_path / "b.xlsx"
    save_workbook(_simple_wb(), a)
    wb = _simple_wb()
    wb.add_sheet("Extra").set("A1", 1)
    save_workbook(wb, b)
    check = compare_workbooks(a, b)
    assert not check.passed
    assert any(m[0] == "Extra" for m in check.mismatches)


# --- run_suite ----------------------------------------------------------------------

def _qa_case(case_id, category, chats_path):
    return BenchCase(id=case_id, workbook_path=str(chats_path), question=cs.CASE1_QUERY,
                     category=category, expected_answer="2, 24")


def _suite_factories(tmp_path, judge_correct=True, judge_bad_json=False):
    def config_factory(case):
        return PipelineConfig(
            llm=ScriptedLlm(["Final Answer: 2, 24"]),
            executor=scripted_stub([]),
            understanding=False, validation=False,
            trace_dir=str(tmp_path / "traces"))

    def judge_factory(case):
        if judge_bad_json and case.id.endswith("judge-err"):
            return ScriptedLlm(["nope", "still nope"])
        verdict = json.dumps({"is_correct": judge_correct, "confidence_score": 0.9,
                              "reasoning": "scripted"})
        return ScriptedLlm([verdict])

    return config_factory, judge_factory


def test_suite_all_correct(chats_path, tmp_path):
    cases = [_qa_case("a", "complex", chats_path), _qa_case("b", "multi-table", chats_path),
             _qa_case("c", "large-sheet", chats_path), _qa_case("d", "qa", chats_path)]
    config_factory, judge_factory = _suite_factories(tmp_path)
    report = run_suite(cases, config_factory, judge_factory)
    assert report.total == 4 and report.correct == 4
    assert report.accuracy == 1.0
    table = report.render_table()
    assert table.splitlines()[0].split(" | ") == \
        ["Complex", "Multi-table", "Large Sheet", "Edit", "Total"]
    assert "1/1" in table and "4/4" in table


def test_suite_parallel_matches_serial(chats_path, tmp_path):
    cases = [_qa_case(f"case{i}", "complex", chats_path) for i in range(8)]
    config_factory, judge_factory = _suite_factories(tmp_path)
    serial = run_suite(cases, config_factory, judge_factory, parallelism=1)
    parallel = run_suite(cases, config_factory, judge_factory, parallelism=4)
    assert serial.to_json()["totals"] == parallel.to_json()["totals"]
    assert serial.to_json()["categories"] == parallel.to_json()["categories"]


def test_suite_judge_errors_excluded_from_accuracy(chats_path, tmp_path):
    cases = [_qa_case("ok1", "complex", chats_path),
             _qa_case("x-judge-err", "complex", chats_path)]
    config_factory, judge_factory = _suite_factories(tmp_path, judge_bad_json=True)
    report = run_suite(cases, config_factory, judge_factory)
    assert report.judge_errors == 1
    assert report.accuracy == 1.0  # 1 correct / (2 - 1 judge error)
    payload = report.to_json()
    assert payload["totals"]["judge_errors"] == 1


def test_suite_case_error_isolation(chats_path, tmp_path):
    cases = [_qa_case("good", "complex", chats_path),
             BenchCase(id="broken", workbook_path="/missing.xlsx", question="q",
                       category="qa", expected_answer="1")]
    config_factory, judge_factory = _suite_factories(tmp_path)
    report = run_suite(cases, config_factory, judge_factory)
    assert report.total == 2 and report.case_errors == 1
    broken = [r for r in report.results if r.case_id == "broken"][0]
    assert broken.error and not broken.correct


def test_suite_edit_case(chats_path, tmp_path):
    expected = tmp_path / "expected.xlsx"
    wb = load_workbook(chats_path)
    set_cell(wb, "Sheet1", "Z1", 123)
    save_workbook(wb, expected)

    stub_script = tmp_path / "edit_stub.json"
    stub_script.write_text(json.dumps([
        {"match": "set_cell", "stdout": "saved\n",
         "apply": {"sheet": "Sheet1", "set": [{"ref": "Z1", "value": 123}],
                   "save": True}},
    ]))

    from sheetagent.sandbox import load_stub_script

    def config_factory(case):
        return PipelineConfig(
            llm=ScriptedLlm(["```python\nset_cell('Sheet1', 'Z1', 123)\n"
                             "save_workbook()\n```", "Final Answer: done"]),
            executor=load_stub_script(stub_script),
            understanding=False, validation=False,
            trace_dir=str(tmp_path / "traces"))

    case = BenchCase(id="edit1", workbook_path=str(chats_path),
                     question="Set Z1 to 123", category="edit",
                     expected_workbook_path=str(expected))
    report = run_suite([case], config_factory, lambda c: ScriptedLlm([]))
    assert report.total == 1 and report.correct == 1
    assert isinstance(report.results[0].verdict, EditCheck)


def test_report_hash_recorded(chats_path, tmp_path):
    config_factory, judge_factory = _suite_factories(tmp_path)
    report = run_suite([_qa_case("a", "qa", chats_path)], config_factory, judge_factory)
    assert report.judge_prompt_sha256 == judge_prompt_sha256()
    assert report.to_json()["judge_prompt_sha256"] == judge_prompt_sha256()


@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=40))
def test_accuracy_arithmetic_property(flags):
    # (correct, judge_error) pairs; judge-errored cases are never correct.
    results = []
    for i, (correct, judge_error) in enumerate(flags):
        results.append(CaseResult(
            case_id=f"c{i}", category="qa",
            verdict=None if judge_error else JudgeVerdict(correct, 0.9, "r"),
            judge_error="bad json" if judge_error else None))
    report = SuiteReport(results=results, judge_prompt_sha256="0" * 64)
    scored = report.total - report.judge_errors
    if scored == 0:
        assert report.accuracy is None
    else:
        assert report.accuracy == report.correct / scored
    assert report.correct <= scored
