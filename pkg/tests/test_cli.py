import json

import pytest

from sheetagent.cli import main, read_config_file, resolve_settings
from sheetagent.evalkit import compare_workbooks
from sheetagent.serializer import EncodingVariant

from . import case_scripts as cs
from .conftest import golden


def _llm_script_file(tmp_path, entries, name="llm.json"):
    path = tmp_path / name
    serializable = []
    for entry in entries:
        serializable.append(entry if isinstance(entry, (str, dict)) else str(entry))
    path.write_text(json.dumps(serializable))
    return path


def _stub_script_file(tmp_path, entries, name="stub.json"):
    path = tmp_path / name
    path.write_text(json.dumps(entries))
    return path


# --- preview -----------------------------------------------------------------

@pytest.mark.parametrize("variant", [v.value for v in EncodingVariant])
def test_preview_all_variants(quarterly_path, capsys, variant):
    assert main(["preview", str(quarterly_path), "--variant", variant]) == 0
    out = capsys.readouterr()
    assert golden(f"quarterly.{variant.value if hasattr(variant, 'value') else variant}.txt") in out.out


def test_preview_default_budget_is_10000(quarterly_path, capsys):
    assert main(["preview", str(quarterly_path)]) == 0
    assert "budget 10000" in capsys.readouterr().err


def test_preview_unknown_variant_usage_error(quarterly_path):
    with pytest.raises(SystemExit) as excinfo:
        main(["preview", str(quarterly_path), "--variant", "fancy-yaml"])
    assert excinfo.value.code == 2


# --- ask ---------------------------------------------------------------------

def _case1_cli_files(tmp_path):
    llm = _llm_script_file(tmp_path, cs.case1_llm().script)
    stub = _stub_script_file(tmp_path, [
        {"match": "header_row=0", "expr": cs.CASE1_EXPR, "duration_ms": 38},
    ])
    return llm, stub


def test_ask_scripted_smoke(chats_path, tmp_path, capsys):
    llm, stub = _case1_cli_files(tmp_path)
    code = main(["ask", str(chats_path), cs.CASE1_QUERY,
                 "--llm", f"fake:{llm}", "--sandbox", f"stub:{stub}",
                 "--trace-dir", str(tmp_path / "trace"), "--run-id", "smoke"])
    out = capsys.readouterr()
    assert code == 0
    assert "2, 24" in out.out
    assert (tmp_path / "trace" / "smoke" / "answer.txt").read_text().strip() == "2, 24"


def test_ask_no_validation_skips_verdicts(chats_path, tmp_path, capsys):
    llm = _llm_script_file(tmp_path, [cs._CASE1_OVERVIEW, "Final Answer: 2, 24"])
    stub = _stub_script_file(tmp_path, [])
    code = main(["ask", str(chats_path), cs.CASE1_QUERY,
                 "--llm", f"fake:{llm}", "--sandbox", f"stub:{stub}",
                 "--no-validation", "--trace-dir", str(tmp_path / "trace"),
                 "--run-id", "novalidate"])
    assert code == 0
    run_dir = tmp_path / "trace" / "novalidate"
    assert not list(run_dir.glob("verdict_*.txt"))


def test_ask_requires_api_key_for_http(chats_path, tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("LLM_API_KEY", raising=False)
    code = main(["ask", str(chats_path), "q", "--llm", "http://example.invalid/v1",
                 "--sandbox", "stub:/nonexistent.json"])
    err = capsys.readouterr().err
    assert code == 2
    assert "key" in err.lower()


def test_ask_without_endpoint_is_config_error(chats_path, tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)  # no sheetagent.toml around
    code = main(["ask", str(chats_path), "q"])
    assert code == 2


def test_ask_pipeline_error_exit_code(tmp_path, capsys):
    llm = _llm_script_file(tmp_path, ["Final Answer: x"])
    stub = _stub_script_file(tmp_path, [])
    code = main(["ask", str(tmp_path / "missing.xlsx"), "q",
                 "--llm", f"fake:{llm}", "--sandbox", f"stub:{stub}"])
    assert code == 1


# --- edit --------------------------------------------------------------------

def test_edit_scripted_changes_one_cell(chats_path, tmp_path, capsys):
    out_path = tmp_path / "edited.xlsx"
    llm = _llm_script_file(tmp_path, [
        "```python\nset_cell('Sheet1', 'K2', 99)\nsave_workbook()\n```",
        "Final Answer: K2 set to 99",
        cs._PASS_VERDICT,
    ])
    stub = _stub_script_file(tmp_path, [
        {"match": "set_cell", "stdout": "saved\n",
         "apply": {"sheet": "Sheet1", "set": [{"ref": "K2", "value": 99}],
                   "save": True}},
    ])
    code = main(["edit", str(chats_path), "Set K2 to 99", "--out", str(out_path),
                 "--llm", f"fake:{llm}", "--sandbox", f"stub:{stub}",
                 "--no-understanding", "--trace-dir", str(tmp_path / "trace")])
    assert code == 0
    check = compare_workbooks(chats_path, out_path)
    assert [(m[0], m[1]) for m in check.mismatches] == [("Sheet1", "K2")]


def test_edit_default_output_name(chats_path, tmp_path, capsys, monkeypatch):
    import shutil

    src = tmp_path / "book.xlsx"
    shutil.copyfile(chats_path, src)
    llm = _llm_script_file(tmp_path, ["Final Answer: nothing to do", cs._PASS_VERDICT])
    stub = _stub_script_file(tmp_path, [])
    code = main(["edit", str(src), "noop", "--llm", f"fake:{llm}",
                 "--sandbox", f"stub:{stub}", "--no-understanding",
                 "--trace-dir", str(tmp_path / "trace")])
    assert code == 0
    assert (tmp_path / "book.xlsx.edited.xlsx").exists()


# --- eval --------------------------------------------------------------------

def test_eval_end_to_end(chats_path, tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    llm = _llm_script_file(
        tmp_path, ["Final Answer: 2, 24",
                   '{"is_correct": true, "confidence_score": 1.0, "reasoning": "ok"}'])
    stub = _stub_script_file(tmp_path, [])
    cases = tmp_path / "cases.ndjson"
    cases.write_text(json.dumps({
        "schema": 1, "id": "case-a", "workbook_path": str(chats_path),
        "question": cs.CASE1_QUERY, "category": "complex",
        "expected_answer": "2, 24"}) + "\n")
    code = main(["eval", str(cases), "--llm", f"fake:{llm}",
                 "--sandbox", f"stub:{stub}", "--no-understanding",
                 "--no-validation", "--trace-dir", str(tmp_path / "trace"),
                 "--report", str(tmp_path / "report.json")])
    out = capsys.readouterr()
    assert code == 0
    assert out.out.splitlines()[0].split(" | ") == \
        ["Complex", "Multi-table", "Large Sheet", "Edit", "Total"]
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["totals"]["correct"] == 1
    assert report["judge_prompt_sha256"]


def test_eval_empty_case_file(tmp_path, capsys):
    cases = tmp_path / "cases.ndjson"
    cases.write_text("\n")
    code = main(["eval", str(cases), "--llm", "fake:/dev/null"])
    assert code == 2


# --- trace -------------------------------------------------------------------

def test_trace_pretty_print(chats_path, tmp_path, capsys):
    llm, stub = _case1_cli_files(tmp_path)
    main(["ask", str(chats_path), cs.CASE1_QUERY,
          "--llm", f"fake:{llm}", "--sandbox", f"stub:{stub}",
          "--trace-dir", str(tmp_path / "trace"), "--run-id", "printme"])
    capsys.readouterr()

    code = main(["trace", "printme", "--trace-dir", str(tmp_path / "trace")])
    out = capsys.readouterr().out
    assert code == 0
    assert out.count("--- turn") == 4
    assert "VALIDATION_STATUS" in out
    assert "FINAL ANSWER" in out


def test_trace_unknown_run_id(tmp_path, capsys):
    code = main(["trace", "ghost", "--trace-dir", str(tmp_path)])
    assert code == 1
    assert "not found" in capsys.readouterr().err


# --- config resolution ----------------------------------------------------------

def test_config_file_env_flag_precedence(tmp_path, monkeypatch):
    config = tmp_path / "sheetagent.toml"
    config.write_text(
        "budget = 5000\n"
        "max_turns = 4\n"
        "[llm]\n"
        'endpoint = "http://file-endpoint/v1"\n'
        'model = "file-model"\n'
        "[sandbox]\n"
        'worker_cmd = "python -m worker"\n')

    settings = resolve_settings(str(config), {})
    assert settings["budget"] == 5000
    assert settings["llm.endpoint"] == "http://file-endpoint/v1"
    assert settings["sandbox.worker_cmd"] == "python -m worker"

    monkeypatch.setenv("SHEETAGENT_BUDGET", "7000")
    monkeypatch.setenv("SHEETAGENT_LLM_MODEL", "env-model")
    settings = resolve_settings(str(config), {})
    assert settings["budget"] == 7000  # env beats file
    assert settings["llm.model"] == "env-model"

    settings = resolve_settings(str(config), {"budget": 9000})
    assert settings["budget"] == 9000  # flag beats env and file

    monkeypatch.setenv("LLM_API_KEY", "sekrit")
    settings = resolve_settings(str(config), {})
    assert settings["llm.api_key"] == "sekrit"


def test_read_config_file_values(tmp_path):
    config = tmp_path / "c.toml"
    config.write_text(
        "# comment\n"
        "understanding = false\n"
        "budget = 1234  # trailing comment\n"
        "ratio = 0.5\n"
        '[llm]\n'
        'endpoint = "http://x/v1"  \n'
        "tags = [\"a\", \"b\"]\n")
    values = read_config_file(config)
    assert values["understanding"] is False
    assert values["budget"] == 1234
    assert values["ratio"] == 0.5
    assert values["llm.endpoint"] == "http://x/v1"
    assert values["llm.tags"] == ["a", "b"]
