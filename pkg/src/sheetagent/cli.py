"""Command-line entry point: preview, ask, edit, eval, and trace.

Configuration resolves in order: built-in defaults, then `sheetagent.toml`
(or --config), then SHEETAGENT_* environment overrides, then flags. Exit
codes: 0 success, 1 pipeline error, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from dataclasses import replace
from pathlib import Path

from .errors import CaseSchemaError, SheetAgentError
from .evalkit import load_cases, run_suite
from .llm import LlmParams, make_llm_client
from .pipeline import PipelineConfig, run_pipeline
from .sandbox import ProcessExecutor, load_stub_script
from .serializer import (
    DEFAULT_PREVIEW_BUDGET,
    EncodingVariant,
    build_preview,
)
from .workbook import load_workbook

CONFIG_FILENAME = "sheetagent.toml"
ENV_PREFIX = "SHEETAGENT_"

# key path -> (type, default); every flag resolves through one of these.
CONFIG_KEYS = {
    "budget": (int, DEFAULT_PREVIEW_BUDGET),
    "variant": (str, EncodingVariant.MARKDOWN_CELLPOS.value),
    "max_turns": (int, 10),
    "max_iterations": (int, 3),
    "understanding": (bool, True),
    "validation": (bool, True),
    "strategy_adaptation": (bool, False),
    "trace_dir": (str, "trace"),
    "llm.endpoint": (str, None),
    "llm.model": (str, "default"),
    "llm.api_key": (str, None),
    "sandbox.worker_cmd": (str, None),
    "judge.endpoint": (str, None),
    "eval.parallelism": (int, 1),
}


def _parse_toml_value(raw: str, path: str, lineno: int):
    raw = raw.strip()
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1].replace('\\"', '"').replace("\\\\", "\\")
    if raw.startswith("'") and raw.endswith("'") and len(raw) >= 2:
        return raw[1:-1]
    if raw in ("true", "false"):
        return raw == "true"
    if raw.startswith("[") and raw.endswith("]"):
        inner = raw[1:-1].strip()
        if not inner:
            return []
        return [_parse_toml_value(part.strip(), path, lineno)
                for part in re.split(r",(?=(?:[^\"]*\"[^\"]*\")*[^\"]*$)", inner)]
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        raise SheetAgentError(f"{path}:{lineno}: cannot parse value {raw!r}") from None


def read_config_file(path) -> dict:
    """Parse the TOML subset this tool uses (no tomllib on py3.10).

    Supports [section] headers, key = value with strings, numbers, booleans,
    and flat arrays; # comments.
    """
    values: dict[str, object] = {}
    section = ""
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            continue
        if "=" not in stripped:
            raise SheetAgentError(f"{path}:{lineno}: expected key = value")
        key, _, raw = stripped.partition("=")
        if "#" in raw and not raw.strip().startswith(('"', "'", "[")):
            raw = raw.split("#", 1)[0]
        full_key = f"{section}.{key.strip()}" if section else key.strip()
        values[full_key] = _parse_toml_value(raw, str(path), lineno)
    return values


def _coerce(raw, target, key: str):
    if target is bool and isinstance(raw, str):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise SheetAgentError(f"cannot read boolean {key}={raw!r}")
    if target in (int, float) and isinstance(raw, str):
        return target(raw)
    return raw


def resolve_settings(config_path: str | None, overrides: dict) -> dict:
    """defaults <- config file <- SHEETAGENT_* env <- CLI flags."""
    settings = {key: default for key, (_, default) in CONFIG_KEYS.items()}

    file_path = config_path or (CONFIG_FILENAME if os.path.exists(CONFIG_FILENAME) else None)
    if file_path:
        for key, value in read_config_file(file_path).items():
            if key in CONFIG_KEYS:
                settings[key] = _coerce(value, CONFIG_KEYS[key][0], key)

    for key, (target, _) in CONFIG_KEYS.items():
        env_name = ENV_PREFIX + key.replace(".", "_").upper()
        if env_name in os.environ:
            settings[key] = _coerce(os.environ[env_name], target, key)
    if "LLM_API_KEY" in os.environ:
        settings["llm.api_key"] = os.environ["LLM_API_KEY"]

    for key, value in overrides.items():
        if value is not None:
            settings[key] = value
    return settings


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="config file (default: ./sheetagent.toml)")
    parser.add_argument("--llm", dest="llm_endpoint",
                        help="chat endpoint URL, or fake:<script.json> for the scripted LLM")
    parser.add_argument("--model", dest="llm_model")
    parser.add_argument("--api-key", dest="llm_api_key")
    parser.add_argument("--sandbox", dest="sandbox",
                        help="worker command line, or stub:<script.json> for the scripted stub")
    parser.add_argument("--budget", type=int)
    parser.add_argument("--variant", choices=[v.value for v in EncodingVariant])
    parser.add_argument("--max-turns", type=int)
    parser.add_argument("--max-iterations", type=int)
    parser.add_argument("--no-understanding", "--no-understand",
                        dest="no_understanding", action="store_true")
    parser.add_argument("--no-validation", "--no-validate",
                        dest="no_validation", action="store_true")
    parser.add_argument("--strategy-adaptation", action="store_true")
    parser.add_argument("--trace-dir")
    parser.add_argument("--run-id")


def _settings_from_args(args) -> dict:
    overrides = {
        "llm.endpoint": getattr(args, "llm_endpoint", None),
        "llm.model": getattr(args, "llm_model", None),
        "llm.api_key": getattr(args, "llm_api_key", None),
        "sandbox.worker_cmd": getattr(args, "sandbox", None),
        "budget": getattr(args, "budget", None),
        "variant": getattr(args, "variant", None),
        "max_turns": getattr(args, "max_turns", None),
        "max_iterations": getattr(args, "max_iterations", None),
        "trace_dir": getattr(args, "trace_dir", None),
    }
    if getattr(args, "no_understanding", False):
        overrides["understanding"] = False
    if getattr(args, "no_validation", False):
        overrides["validation"] = False
    if getattr(args, "strategy_adaptation", False):
        overrides["strategy_adaptation"] = True
    return resolve_settings(getattr(args, "config", None), overrides)


class UsageError(SheetAgentError):
    pass


def _build_llm(settings: dict):
    endpoint = settings["llm.endpoint"]
    if not endpoint:
        raise UsageError("no LLM endpoint configured (--llm, llm.endpoint, or "
                         "SHEETAGENT_LLM_ENDPOINT)")
    api_key = settings["llm.api_key"]
    if endpoint.startswith(("http://", "https://")) and not api_key:
        raise UsageError("auth error: an API key is required for HTTP endpoints "
                         "(--api-key, llm.api_key, or LLM_API_KEY)")
    return make_llm_client(endpoint, api_key=api_key)


def _build_executor(settings: dict):
    spec = settings["sandbox.worker_cmd"]
    if not spec:
        raise UsageError("no sandbox configured (--sandbox, sandbox.worker_cmd, "
                         "or SHEETAGENT_SANDBOX_WORKER_CMD)")
    if spec.startswith("stub:"):
        return load_stub_script(spec[len("stub:"):])
    return ProcessExecutor(spec)


def _build_pipeline_config(settings: dict, args) -> PipelineConfig:
    return PipelineConfig(
        llm=_build_llm(settings),
        executor=_build_executor(settings),
        llm_params=LlmParams(model=settings["llm.model"]),
        budget_tokens=settings["budget"],
        variant=EncodingVariant.from_name(settings["variant"]),
        max_turns=settings["max_turns"],
        max_iterations=settings["max_iterations"],
        understanding=settings["understanding"],
        validation=settings["validation"],
        strategy_adaptation=settings["strategy_adaptation"],
        trace_dir=settings["trace_dir"],
        run_id=getattr(args, "run_id", None),
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_preview(args) -> int:
    settings = _settings_from_args(args)
    wb = load_workbook(args.file)
    variant = EncodingVariant.from_name(settings["variant"])
    preview = build_preview(wb, settings["budget"], variant)
    print(preview.render())
    print(f"\n[{preview.total_estimated_tokens} tokens estimated, "
          f"budget {preview.budget.total}, variant {variant.value}]", file=sys.stderr)
    return 0


def cmd_ask(args) -> int:
    settings = _settings_from_args(args)
    config = _build_pipeline_config(settings, args)
    result = run_pipeline(args.file, args.question, config)
    print(result.final_answer)
    if not result.validated and config.validation:
        print("[warning: answer is unvalidated (iteration cap reached)]",
              file=sys.stderr)
    if result.trace_dir:
        print(f"[trace: {result.trace_dir}]", file=sys.stderr)
    return 0


def cmd_edit(args) -> int:
    settings = _settings_from_args(args)
    out = args.out or f"{args.file}.edited.xlsx"
    config = replace(_build_pipeline_config(settings, args),
                     edit_mode=True, edit_out_path=out)
    result = run_pipeline(args.file, args.instruction, config)
    print(result.final_answer)
    print(f"[edited workbook: {result.edited_path}]", file=sys.stderr)
    if not result.validated and config.validation:
        print("[warning: edit is unvalidated (iteration cap reached)]", file=sys.stderr)
    if result.trace_dir:
        print(f"[trace: {result.trace_dir}]", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    settings = _settings_from_args(args)
    try:
        cases = load_cases(args.cases)
    except CaseSchemaError as exc:
        print(f"case file error: {exc}", file=sys.stderr)
        return 2

    def config_factory(case):
        return _build_pipeline_config(settings, args)

    judge_endpoint = settings["judge.endpoint"] or settings["llm.endpoint"]

    def judge_factory(case):
        if not judge_endpoint:
            raise UsageError("no judge endpoint configured")
        return make_llm_client(judge_endpoint, api_key=settings["llm.api_key"])

    parallelism = args.parallel or settings["eval.parallelism"]
    report = run_suite(cases, config_factory, judge_factory, parallelism=parallelism)
    print(report.render_table())
    report_path = args.report or "eval_report.json"
    Path(report_path).write_text(json.dumps(report.to_json(), indent=2,
                                            ensure_ascii=False) + "\n", "utf-8")
    print(f"[report: {report_path}]", file=sys.stderr)
    return 1 if report.case_errors else 0


def cmd_trace(args) -> int:
    root = Path(args.trace_dir or "trace")
    run_dir = root / args.run_id
    if not run_dir.is_dir():
        print(f"run {args.run_id!r} not found under {root}/", file=sys.stderr)
        return 1
    overview = run_dir / "overview.txt"
    if overview.exists():
        print("=== OVERVIEW ===")
        print(overview.read_text("utf-8").rstrip())
    for iteration_dir in sorted(run_dir.glob("iteration_*")):
        print(f"\n=== {iteration_dir.name.upper().replace('_', ' ')} ===")
        for turn_file in sorted(iteration_dir.glob("turn_*.json"),
                                key=lambda p: int(p.stem.split("_")[1])):
            turn = json.loads(turn_file.read_text("utf-8"))
            print(f"\n--- turn {turn['turn_index']} ({turn['kind']}) ---")
            print(turn["reasoning"].rstrip())
            if turn.get("code"):
                print("~~~ code ~~~")
                print(turn["code"].rstrip())
            result = turn.get("result")
            if result:
                if result.get("stdout"):
                    print("~~~ stdout ~~~")
                    print(result["stdout"].rstrip())
                if result.get("expr") is not None:
                    print(f"~~~ expression: {result['expr']}")
                if result.get("error"):
                    print(f"~~~ error [{result['error']['kind']}]: "
                          f"{result['error']['message']}")
        verdict = run_dir / f"verdict_{iteration_dir.name.split('_')[1]}.txt"
        if verdict.exists():
            print("\n--- verdict ---")
            print(verdict.read_text("utf-8").rstrip())
    answer = run_dir / "answer.txt"
    if answer.exists():
        print("\n=== FINAL ANSWER ===")
        print(answer.read_text("utf-8").rstrip())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sheetagent",
        description="Spreadsheet QA/manipulation agent: preview encodings, "
                    "tool-augmented code execution, checklist validation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_preview = sub.add_parser("preview", help="print a budgeted workbook preview")
    p_preview.add_argument("file")
    _add_run_flags(p_preview)
    p_preview.set_defaults(func=cmd_preview)

    p_ask = sub.add_parser("ask", help="answer a question about a workbook")
    p_ask.add_argument("file")
    p_ask.add_argument("question")
    _add_run_flags(p_ask)
    p_ask.set_defaults(func=cmd_ask)

    p_edit = sub.add_parser("edit", help="apply an edit instruction to a workbook")
    p_edit.add_argument("file")
    p_edit.add_argument("instruction")
    p_edit.add_argument("--out", help="output path (default: <file>.edited.xlsx)")
    _add_run_flags(p_edit)
    p_edit.set_defaults(func=cmd_edit)

    p_eval = sub.add_parser("eval", help="run a benchmark case file")
    p_eval.add_argument("cases")
    p_eval.add_argument("--parallel", type=int, default=None)
    p_eval.add_argument("--report", help="report JSON path (default: eval_report.json)")
    _add_run_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_trace = sub.add_parser("trace", help="pretty-print a stored run trace")
    p_trace.add_argument("run_id")
    p_trace.add_argument("--trace-dir")
    p_trace.set_defaults(func=cmd_trace)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SheetAgentError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
