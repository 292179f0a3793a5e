"""Deterministic demo workbooks for offline runs, docs, and test fixtures.

Four builders: a small quarterly-indicator sheet exercising merges and
alignment, a fisheries landings sheet with hierarchical "of which" rows and
footnotes, a per-user support-chat log organized in multi-row blocks, and a
large payments table for column-aggregation workloads.
"""

from __future__ import annotations

import random

from .workbook import MergedRegion, Sheet, Workbook, save_workbook
from .cellref import parse_range_ref


def quarterly_workbook() -> Workbook:
    wb = Workbook()
    sheet = wb.add_sheet("Quarterly")
    sheet.set("B6", "Time period")
    sheet.merged.append(MergedRegion(parse_range_ref("B6:D6")))
    for col, label in zip("EFGHI", ["2023-Q3", "2023-Q4", "2024-Q1", "2024-Q2", "2024-Q3"]):
        sheet.set(f"{col}6", label)
    sheet.set("J6", "    ")
    sheet.set("A7", "")
    sheet.set("B7", "Combined transaction")
    sheet.set("C7", "Combined unit of measure")
    for col in "DEFGHIJ":
        sheet.set(f"{col}7", "")
    sheet.set("A8", "")
    sheet.set("B8", "Adjustment: Calendar and seasonally adjusted")
    sheet.merged.append(MergedRegion(parse_range_ref("B8:H8")))
    return wb


# Stock rows of the landings sheet: (label, B..N values); None marks an
# unpopulated spacer cell (column K).
_LANDINGS_ROWS: list[tuple[str, list]] = [
    ("NS Herring", [38597.9, 36893.62, -4.41547338067615, 0, 640.896, "-",
                    23821.22, 38198.5493, 60.3551342038737, None,
                    62419.12, 75171.0553, 20.4295339312698]),
    ("WC Herring", [1.78, 262.09, "-", 0, 0, "-", 5.35, 170.233, "-", None,
                    7.13, 432.323, "-"]),
    ("WC Mackerel", [81546.81, 98473.65, 20.757206811646, 0, 5662.28299999999, "-",
                     74260.35, 113387.945, 52.6897530108597, None,
                     155807.16, 228985.001, 46.9669307880331]),
    ("    of which IVa", [72391.79, 70475.45, -2.64717863724597, 0, 3935.516, "-",
                          72519.96, 85213.217, 17.5031218991296, None,
                          144911.75, 165874.81, 14.4660871185394]),
    ("NS Mackerel", [1024.67, 1287.44, 25.6443537919526, 0, 52.293, "-",
                     47.6, 361.234, 658.894957983193, None,
                     1072.27, 1932.077, 80.1856808453095]),
    ("     of which IIIa IVbc", [97.74, 0, "-", 0, 21.304, "-",
                                 47.25, 181.583, 284.302645502646, None,
                                 144.99, 202.887, 39.9317194289262]),
    ("Firth of Clyde Herring", [0, 0, "-", 0, 0, "-", 0, 0, "-", None, 0, 0, "-"]),
    ("NS Horse Mackerel", [1.5, 0, "-", 0, 600.66, "-", 36.01, 2740.804, "-", None,
                           37.51, 3341.464, "-"]),
    ("WC Horse Mackerel", [392.27, 8.36, -97.8688148469167, 0, 30.816, "-",
                           165.05, 113.967, -30.9500151469252, None,
                           557.32, 153.143, -72.5215316155889]),
    ("NS Blue Whiting EU", [0, 0, "-", 0, 0, "-", 3.21, 0, "-", None, 3.21, 0, "-"]),
    ("NS Sandeels", [0, 0, "-", 0, 0, "-", 0, 0, "-", None, 0, 0, "-"]),
    ("Sandeels (IV - Norwegian Waters)*+", [0, 0, "-", 0, 0, "-", 0, 0, "-", None,
                                            0, 0, "-"]),
    ("Norway Pout (IV - Norwegian Waters)*+", [0, 0, "-", 0, 0, "-", 0, 0.141, "-",
                                               None, 0, 0.141, "-"]),
    ("Atlanto Scandian Herring", [0, 0, "-", 0, 0, "-", 9620.33, 7087.29,
                                  -26.3300739163833, None,
                                  9620.33, 7087.29, -26.3300739163833]),
    ("Blue Whiting I-VIII, XII, XIV", [17261.3, 26877.05, 55.7069861482044, 0, 0, "-",
                                       28750.62, 73254.908, 154.794185308004, None,
                                       46011.92, 100131.958, 117.621777139489]),
    ("   of which Bay of Biscay BW", [17261.3, 26877.05, 55.7069861482044, 0, 0, "-",
                                      0, 0, "-", None,
                                      17261.3, 26877.05, 55.7069861482044]),
    ("Faroes Blue Whiting", [0, 0, "-", 0, 0, "-", 0, 0, "-", None, 0, 0, "-"]),
    ("Shetland Sandeels*", [0, 0, "-", 0, 0, "-", 0, 0, "-", None, 0, 0, "-"]),
]

_LANDINGS_FOOTNOTES = [
    "2022 landings are for the nearest comparable week last year (assuming an "
    "average delay of 2 weeks in notification of landings) therefore",
    "comparisons will be approximate, and should be treated accordingly.",
    "2022 uptake is of the final quota, after all swaps.",
    "Shetland inshore sand eel fishery monitored separately.",
    "* Summary Table only",
    "+ Norwegian waters south of 62 degrees N",
]


def landings_workbook() -> Workbook:
    wb = Workbook()
    sheet = wb.add_sheet("PELAGIC")

    sheet.set("B1", "Landings into")
    sheet.set("L1", "Total landings")
    sheet.set("A2", "Stock")
    sheet.set("B2", "Scotland")
    sheet.set("E2", "England, Wales & N.I.")
    sheet.set("H2", "Abroad")
    sheet.set("L2", "by UK vessels")
    for ref in ("B1:J1", "L1:N1", "B2:D2", "E2:G2", "H2:J2", "L2:N2"):
        sheet.merged.append(MergedRegion(parse_range_ref(ref)))
    for col in "DGJN":
        sheet.set(f"{col}3", "%\nchange")
    for start_col, year_cols in (("B", ("B", "C", "D")), ("E", ("E", "F", "G")),
                                 ("H", ("H", "I", "J")), ("L", ("L", "M", "N"))):
        sheet.set(f"{year_cols[0]}4", 2022)
        sheet.set(f"{year_cols[1]}4", 2023)
        sheet.set(f"{year_cols[2]}4", "change")

    for i, (label, values) in enumerate(_LANDINGS_ROWS):
        row = 6 + i
        sheet.set(f"A{row}", label)
        for offset, value in enumerate(values):
            if value is None:
                continue
            sheet.set(f"{chr(ord('B') + offset)}{row}", value)

    for i, note in enumerate(_LANDINGS_FOOTNOTES):
        sheet.set(f"A{25 + i}", note)
    return wb


# (name, per-day chat counts). Block layout per user:
#   row k:   C="User Name:"  F=<name>
#   rows k+1..: C="Day <n>"   K=<chats that day>
#   last row: C="Total"       K=<total chats>
_CHAT_USERS = [
    ("Aravelli Sivapani 10170897", [5, 4, 3]),
    ("Chalam Raju Chalam 10172481", [6, 6]),
    ("Badugu Ramesh 10171204", [4, 4, 3]),
    ("Kiran Kumar Valluri 10170233", [2, 3, 4]),
]


def support_chats_workbook() -> Workbook:
    wb = Workbook()
    sheet = wb.add_sheet("Sheet1")
    sheet.set("A1", "Chat Service Report")  # anchors the used range at column A
    sheet.set("K2", "Chats Serviced")
    row = 3
    for name, days in _CHAT_USERS:
        sheet.set(f"C{row}", "User Name:")
        sheet.set(f"F{row}", name)
        for day, count in enumerate(days, start=1):
            row += 1
            sheet.set(f"A{row}", row - 3)
            sheet.set(f"C{row}", f"Day {day}")
            sheet.set(f"K{row}", count)
        row += 1
        sheet.set(f"C{row}", "Total")
        sheet.set(f"K{row}", sum(days))
        row += 2  # blank spacer row between blocks
    return wb


PAYMENTS_SEED = 20240613
PAYMENTS_COLUMNS = [
    "psp_reference", "merchant", "card_scheme", "year", "hour_of_day",
    "minute_of_day", "day_of_year", "is_credit", "eur_amount", "ip_country",
    "issuing_country",
]
PAYMENTS_COUNTRY_COUNTS = {"NL": 29622, "IT": 28329, "BE": 23040, "SE": 4, "LU": 1}
_PAYMENTS_HEAD = ["SE", "NL", "NL", "LU", "NL", "NL", "NL", "SE", "BE", "SE", "SE", "NL"]


def payments_country_column() -> list[str]:
    """The issuing_country column: pinned first rows, seeded shuffle after."""
    remaining = dict(PAYMENTS_COUNTRY_COUNTS)
    for code in _PAYMENTS_HEAD:
        remaining[code] -= 1
    tail = [code for code, count in remaining.items() for _ in range(count)]
    random.Random(PAYMENTS_SEED).shuffle(tail)
    return _PAYMENTS_HEAD + tail


def payments_workbook() -> Workbook:
    wb = Workbook()
    sheet = wb.add_sheet("payments")
    for i, name in enumerate(PAYMENTS_COLUMNS):
        sheet.set(f"{chr(ord('A') + i)}1", name)
    rng = random.Random(PAYMENTS_SEED + 1)
    for i, code in enumerate(payments_country_column()):
        sheet.set(f"K{2 + i}", code)
    # Sparse sample of the other columns; enough for realistic inspection.
    for row in range(2, 22):
        sheet.set(f"A{row}", 19000000000 + rng.randrange(10**9))
        sheet.set(f"B{row}", rng.choice(["Crossfit_Hanna", "Belles_cookbook_store",
                                         "Golfclub_Baron_Friso", "Martinis_Fine_Steakhouse"]))
        sheet.set(f"I{row}", round(rng.uniform(5, 500), 2))
    return wb


BUILDERS = {
    "quarterly": quarterly_workbook,
    "landings": landings_workbook,
    "support_chats": support_chats_workbook,
    "payments": payments_workbook,
}


def write_demo_workbook(kind: str, path) -> None:
    save_workbook(BUILDERS[kind](), path)


DEMO_QUESTION = ("How many users handled more than 11 chats serviced, and what "
                 "is the total number of chats they serviced?")

_DEMO_CODE_REPLY = """Reloading with every row treated as data and aggregating per user block:

```python
df = get_sheet_as_dataframe('Sheet1', header_row=0)
user_rows = df.index[df.iloc[:, 2] == "User Name:"].tolist()
results = []
for idx, start in enumerate(user_rows):
    end = user_rows[idx + 1] if idx + 1 < len(user_rows) else len(df)
    block = df.iloc[start + 1:end]
    totals = block.index[block.iloc[:, 2] == "Total"].tolist()
    if totals:
        results.append({'user': df.iloc[start, 5], 'chats': int(df.iloc[totals[0], 10])})
over_11 = [r for r in results if r['chats'] > 11]
over_11, len(over_11), sum(r['chats'] for r in over_11)
```"""

_DEMO_EXPR = ("([{'user': 'Aravelli Sivapani 10170897', 'chats': 12}, "
              "{'user': 'Chalam Raju Chalam 10172481', 'chats': 12}], 2, 24)")

_DEMO_PASS_VERDICT = """**VALIDATION_STATUS:** PASSED

**CONFIDENCE_SCORE:** 0.95

**ISSUES_FOUND:**
- none

**IMPROVEMENT_FEEDBACK:**
- none

**FINAL_ASSESSMENT:**
Block totals support the answer and the format matches the query.
"""


def write_demo_scripts(outdir) -> dict:
    """Scripted-LLM + sandbox-stub JSON for a fully offline `ask` run."""
    import json
    import pathlib

    outdir = pathlib.Path(outdir)
    llm_script = [
        ("**SHEET_SUMMARY:**\nA support-chat log with no standard header row; each "
         "user's data occupies a distinct multi-row block (a \"User Name:\" row, "
         "per-day rows, then a \"Total\" row whose column K holds the user's total "
         "chats).\n\n**PROBLEM_INSIGHTS:**\nLoad with header_row=0, find the block "
         "boundaries from column C, read each block's Total from column K, then "
         "filter users with chat service count > 11 and sum their totals."),
        _DEMO_CODE_REPLY,
        "Final Answer: 2, 24",
        _DEMO_PASS_VERDICT,
    ]
    stub_script = [
        {"match": "header_row=0", "expr": _DEMO_EXPR, "duration_ms": 40,
         "new_vars": ["df", "user_rows", "results", "over_11"]},
    ]
    paths = {
        "llm": outdir / "ask_chats.llm.json",
        "stub": outdir / "ask_chats.stub.json",
    }
    paths["llm"].write_text(json.dumps(llm_script, indent=2) + "\n", "utf-8")
    paths["stub"].write_text(json.dumps(stub_script, indent=2) + "\n", "utf-8")
    return paths


def main(argv=None) -> int:
    import argparse
    import pathlib

    parser = argparse.ArgumentParser(
        description="Write the demo workbooks (and optional offline run scripts).")
    parser.add_argument("outdir", type=pathlib.Path)
    parser.add_argument("--only", choices=sorted(BUILDERS), default=None)
    parser.add_argument("--with-scripts", action="store_true",
                        help="also write scripted-LLM/stub JSON for an offline ask run")
    args = parser.parse_args(argv)
    args.outdir.mkdir(parents=True, exist_ok=True)
    kinds = [args.only] if args.only else sorted(BUILDERS)
    for kind in kinds:
        target = args.outdir / f"{kind}.xlsx"
        write_demo_workbook(kind, target)
        print(f"wrote {target}")
    if args.with_scripts:
        for path in write_demo_scripts(args.outdir).values():
            print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
