"""Scripted LLM replies and sandbox stubs replaying the three reference
transcripts (chat-count blocks, payments aggregation, landings double-count
correction) for offline pipeline tests."""

from sheetagent.sandbox import ExecResult, StubEntry, ScriptedExecutor
from sheetagent.llm import ScriptedLlm
from sheetagent.toolkit import inspect as tk_inspect

CASE1_QUERY = ("How many users handled more than 11 chats serviced, and what is "
               "the total number of chats they serviced?")
CASE2_QUERY = ("Which issuing country has the highest number of transactions? "
               "The answer must be just the country code. If a question does not "
               "have a relevant or applicable answer for the task, please respond "
               "with 'Not Applicable'.")
CASE3_QUERY = ("What is the total landings (tonnes live weight) for Scotland in "
               "2023, and how does it compare to the total landings for England, "
               "Wales, and N.I.?")

_CASE1_OVERVIEW = """**SHEET_SUMMARY:**
This workbook holds a support-chat service log on a single sheet with no
standard header row. Each user's data occupies a distinct multi-row block:
a row labelled "User Name:" in column C with the user's name in column F,
followed by per-day rows, and closed by a "Total" row whose column K holds
that user's total chats serviced.

**PROBLEM_INSIGHTS:**
Load with header_row=0 so every row is treated as data. Locate the rows
where column C equals "User Name:" to delineate user blocks, read each
block's "Total" row from column K, then filter users with chat service
count > 11 and sum their totals.
"""

_CASE1_CODE = """\
# Load the sheet as a DataFrame, treating all rows as data (no header)
df = get_sheet_as_dataframe('Sheet1', header_row=0)

# Identify all rows where column C contains "User Name:" to delineate user blocks
user_rows = df.index[df.iloc[:, 2] == "User Name:"].tolist()

results = []
for idx, user_row in enumerate(user_rows):
    user_name = df.iloc[user_row, 5]
    block_end = user_rows[idx + 1] if idx < len(user_rows) - 1 else len(df)
    block = df.iloc[user_row + 1:block_end]
    total_rows = block.index[block.iloc[:, 2] == "Total"].tolist()
    if total_rows:
        chats = int(df.iloc[total_rows[0], 10])
        results.append({'user': user_name, 'chats': chats})

over_11 = [r for r in results if r['chats'] > 11]
over_11, len(over_11), sum(r['chats'] for r in over_11)
"""

CASE1_EXPR = ("([{'user': 'Aravelli Sivapani 10170897', 'chats': 12}, "
              "{'user': 'Chalam Raju Chalam 10172481', 'chats': 12}], 2, 24)")

_PASS_VERDICT = """**VALIDATION_STATUS:** PASSED

**CONFIDENCE_SCORE:** 0.95

**ISSUES_FOUND:**
- none

**IMPROVEMENT_FEEDBACK:**
- none

**FINAL_ASSESSMENT:**
The extraction respected the block structure and the totals support the
answer; format matches the query.
"""


def case1_llm() -> ScriptedLlm:
    return ScriptedLlm([
        {"match": "WORKBOOK PREVIEW", "reply": _CASE1_OVERVIEW},
        ("Given the absence of a standard header row in the sheet, it is "
         "necessary to utilize header_row=0 to ensure that all rows are "
         "treated as data. I will reload accordingly and scan the user blocks."),
        "Reloading with all rows as data and aggregating per user:\n\n```python\n"
        + _CASE1_CODE + "```",
        ("The expression shows exactly two users above 11 chats, 12 each, "
         "so the combined total is 24."),
        {"match": CASE1_QUERY, "reply": "Final Answer: 2, 24"},
        {"match": "validation verdict", "reply": _PASS_VERDICT},
    ])


def case1_stub() -> ScriptedExecutor:
    return ScriptedExecutor([
        StubEntry(match="header_row=0",
                  result=ExecResult(expr=CASE1_EXPR, duration_ms=38,
                                    new_vars=("df", "user_rows", "results", "over_11"))),
    ])


CASE2_STDOUT = """issuing_country
NL     29622
IT     28329
BE     23040
Name: count, dtype: int64
"""

_CASE2_CODE = """\
import pandas as pd

df_head = get_sheet_as_dataframe("payments", header_row=1, max_rows=1)
issuing_country_col = [col for col in df_head.columns if "issuing_country" in col][0]

df = get_sheet_as_dataframe("payments", header_row=1, max_rows=None)[[issuing_country_col]]
country_counts = df[issuing_country_col].value_counts()
print(country_counts.head(3))
"""


def case2_llm() -> ScriptedLlm:
    return ScriptedLlm([
        {"match": "WORKBOOK PREVIEW",
         "reply": ("**SHEET_SUMMARY:**\nA single very wide payments table with a "
                   "proper header row (row 1) and one transaction per row; the "
                   "issuing_country column carries two-letter country codes.\n\n"
                   "**PROBLEM_INSIGHTS:**\nThe sheet is far too large to read "
                   "through the preview; load the issuing_country column into a "
                   "DataFrame and count occurrences symbolically instead of "
                   "sampling rows.")},
        "Counting transactions per issuing country over the full column:\n\n"
        "```python\n" + _CASE2_CODE + "```",
        "Final Answer: NL",
        {"match": "validation verdict", "reply": _PASS_VERDICT},
    ])


def case2_stub() -> ScriptedExecutor:
    return ScriptedExecutor([
        StubEntry(match="value_counts",
                  result=ExecResult(stdout=CASE2_STDOUT, duration_ms=412,
                                    new_vars=("pd", "df_head", "issuing_country_col",
                                              "df", "country_counts"))),
    ])


# --- landings (double-count then corrected) --------------------------------

_CASE3_OVERVIEW = """**SHEET_SUMMARY:**
The PELAGIC sheet reports fish landings by stock. Columns group into
"Landings into" Scotland (B-D), England, Wales & N.I. (E-G), Abroad (H-J),
and "Total landings by UK vessels" (L-N), each with 2022, 2023, and change
sub-columns on row 4. Stock names sit in column A from row 6; indented
"of which" rows are breakdowns of the stock directly above them. Footnotes
occupy the bottom rows.

**PROBLEM_INSIGHTS:**
Scotland 2023 values are in column C and England, Wales & N.I. 2023 values
in column F. There is no grand-total row, so totals must be summed over the
stock rows; treat non-numeric placeholders like '-' as zero and be careful
with the hierarchical breakdown rows.
"""

_CASE3_CODE_1 = """\
# Let's inspect the first 20 rows in columns A to N to find the relevant rows.
data = inspector("A1:N20", "PELAGIC")
for i, row in enumerate(data):
    print(f"Row {i+1}: {row}")
"""

_CASE3_REASONING = ("I found that the data is organized by stock, with each row "
                    "representing a different stock. Scotland 2023 values are in "
                    "column C and England, Wales & N.I. 2023 values are in column "
                    "F. There is no explicit \"Total\" row in the first 20 rows, "
                    "so the totals must be calculated by summing the 2023 values "
                    "for each stock, likely rows 6 to 23.")

_CASE3_CODE_2 = """\
# Sum the 2023 landings for Scotland (column C) and England, Wales & N.I. (column F)
data = inspector("A6:F23", "PELAGIC")

scotland_2023_total = 0.0
ewni_2023_total = 0.0

for row in data:
    scotland_2023 = row[2]
    ewni_2023 = row[5]
    try:
        if scotland_2023 not in [None, '-', '']:
            scotland_2023_total += float(scotland_2023)
    except Exception:
        pass
    try:
        if ewni_2023 not in [None, '-', '']:
            ewni_2023_total += float(ewni_2023)
    except Exception:
        pass

print(f"Scotland 2023 total landings: {scotland_2023_total:.2f} tonnes")
print(f"England, Wales & N.I. 2023 total landings: {ewni_2023_total:.2f} tonnes")
print(f"Difference (Scotland - E,W&NI): {scotland_2023_total - ewni_2023_total:.2f} tonnes")
"""

CASE3_SUMS_STDOUT = """Scotland 2023 total landings: 261154.71 tonnes
England, Wales & N.I. 2023 total landings: 10943.77 tonnes
Difference (Scotland - E,W&NI): 250210.94 tonnes
"""

_CASE3_WRONG_FINAL = """Final Answer:
The total landings (tonnes live weight) for Scotland in 2023 are **261,154.71 tonnes**, while for England, Wales, and N.I. the total is **10,943.77 tonnes**. Scotland's total landings exceed those of England, Wales, and N.I. by **250,210.94 tonnes**.
"""

# Validator reply that fails the first iteration (double-counting).
CASE3_VALIDATOR_TEXT = """**VALIDATION_STATUS:** FAILED

**CONFIDENCE_SCORE:** 0.4

**ISSUES_FOUND:**
- The agent summed all rows in the Scotland_2023 and EWNI_2023 columns without accounting for hierarchical relationships in the data (e.g., "of which" rows, which are subcategories of the main stock above them).
- This approach results in double-counting for stocks that have both a parent and "of which" sub-rows (e.g., "WC Mackerel" and "of which IVa").
- The agent did not filter out subtotal or breakdown rows (such as "of which IVa", "of which IIIa IVbc", etc.), which should not be summed together with their parent rows.
- There was no explicit check or use of the inspector/inspector_attribute to verify the editing area before giving the final answer, as required by the instructions.
- The agent did not provide a breakdown or verification of which rows were included in the sum, making it difficult to audit the calculation.
- The answer format is otherwise clear and directly addresses the user's question, but the calculation method is flawed.

**IMPROVEMENT_FEEDBACK:**
- Before summing, use the inspector to review the "Stock" column and identify which rows are parent categories and which are subcategories (e.g., rows starting with "of which", "of which IVa", "of which IIIa IVbc", etc.).
- Exclude all "of which" and similar breakdown rows from the sum to avoid double-counting. Only sum the main stock rows.
- Consider using a filter such as: only include rows where the "Stock" value does NOT start with "of which" or is not an indented/breakdown row.
- Re-execute the sum for Scotland_2023 and EWNI_2023 using only the main stock rows.
- Use inspector or inspector_attribute to explicitly check the editing area and confirm which rows are being included in the calculation before providing the final answer.
- Provide a brief list of which stock names were included in the sum for transparency.

**FINAL_ASSESSMENT:**
The solution provides a clear and direct answer to the user's question, but the calculation method is incorrect due to double-counting caused by including both parent and subcategory ("of which") rows in the sum. This is a common pitfall in hierarchical data and leads to inflated totals. The agent should have filtered out breakdown rows and only summed main stock categories. The answer should be recalculated with proper data handling to ensure accuracy. Confidence is low until this is corrected.
"""

_CASE3_CODE_3 = """\
# Review the "Stock" column and the corresponding 2023 columns.
stock_range = "A6:A23"
scotland_2023_range = "C6:C23"
ewni_2023_range = "F6:F23"

stock_names = inspector(stock_range, "PELAGIC")
scotland_2023 = inspector(scotland_2023_range, "PELAGIC")
ewni_2023 = inspector(ewni_2023_range, "PELAGIC")

for i, row in enumerate(stock_names):
    print(f"Row {i+6}: {row[0]}")
"""

_CASE3_CODE_4 = """\
# Indices of main stock rows (0-based, relative to A6:A23)
main_stock_indices = [0, 1, 2, 4, 6, 7, 8, 9, 10, 11, 12, 13, 14, 16, 17]

def safe_float(val):
    try:
        return float(val)
    except Exception:
        return 0.0

scotland_2023_sum = sum(safe_float(scotland_2023[idx][0]) for idx in main_stock_indices)
ewni_2023_sum = sum(safe_float(ewni_2023[idx][0]) for idx in main_stock_indices)

for idx in main_stock_indices:
    print(f"{stock_names[idx][0]}: Scotland 2023 = {scotland_2023[idx][0]}, "
          f"England, Wales & N.I. 2023 = {ewni_2023[idx][0]}")

print(f"Total Scotland 2023: {scotland_2023_sum}")
print(f"Total England, Wales & N.I. 2023: {ewni_2023_sum}")
print(f"Difference (Scotland - EWNI): {scotland_2023_sum - ewni_2023_sum}")
"""

CASE3_TOTALS_STDOUT = """NS Herring: Scotland 2023 = 36893.62, England, Wales & N.I. 2023 = 640.896
WC Herring: Scotland 2023 = 262.09, England, Wales & N.I. 2023 = 0
WC Mackerel: Scotland 2023 = 98473.65, England, Wales & N.I. 2023 = 5662.28299999999
NS Mackerel: Scotland 2023 = 1287.44, England, Wales & N.I. 2023 = 52.293
Firth of Clyde Herring: Scotland 2023 = 0, England, Wales & N.I. 2023 = 0
NS Horse Mackerel: Scotland 2023 = 0, England, Wales & N.I. 2023 = 600.66
WC Horse Mackerel: Scotland 2023 = 8.36, England, Wales & N.I. 2023 = 30.816
NS Blue Whiting EU: Scotland 2023 = 0, England, Wales & N.I. 2023 = 0
NS Sandeels: Scotland 2023 = 0, England, Wales & N.I. 2023 = 0
Sandeels (IV - Norwegian Waters)*+: Scotland 2023 = 0, England, Wales & N.I. 2023 = 0
Norway Pout (IV - Norwegian Waters)*+: Scotland 2023 = 0, England, Wales & N.I. 2023 = 0
Atlanto Scandian Herring: Scotland 2023 = 0, England, Wales & N.I. 2023 = 0
Blue Whiting I-VIII, XII, XIV: Scotland 2023 = 26877.05, England, Wales & N.I. 2023 = 0
Faroes Blue Whiting: Scotland 2023 = 0, England, Wales & N.I. 2023 = 0
Shetland Sandeels*: Scotland 2023 = 0, England, Wales & N.I. 2023 = 0

Total Scotland 2023: 163802.20999999996
Total England, Wales & N.I. 2023: 6986.947999999989
Difference (Scotland - EWNI): 156815.262
"""

_CASE3_RIGHT_FINAL = """Final Answer:
The total landings (tonnes live weight) for Scotland in 2023 are **163,802.21 tonnes**, while the total for England, Wales, and N.I. is **6,986.95 tonnes**. Scotland's total exceeds that of England, Wales, and N.I. by **156,815.26 tonnes**.

**No breakdown or "of which" rows were included, ensuring no double-counting.**
"""

_CASE3_PASS_VERDICT = """**VALIDATION_STATUS:** PASSED

**CONFIDENCE_SCORE:** 0.9

**ISSUES_FOUND:**
- none

**IMPROVEMENT_FEEDBACK:**
- none

**FINAL_ASSESSMENT:**
The recalculated totals exclude the breakdown rows, the included stock list
is transparent, and the comparison answers the query directly.
"""


def case3_llm() -> ScriptedLlm:
    return ScriptedLlm([
        {"match": "WORKBOOK PREVIEW", "reply": _CASE3_OVERVIEW},
        "Exploring the relevant columns and rows first:\n\n```python\n" + _CASE3_CODE_1 + "```",
        _CASE3_REASONING,
        "Summing the 2023 columns across the stock rows:\n\n```python\n" + _CASE3_CODE_2 + "```",
        _CASE3_WRONG_FINAL,
        {"match": "validation verdict", "reply": CASE3_VALIDATOR_TEXT},
        # Iteration 2: the opening prompt must carry the feedback verbatim.
        {"match": 'Exclude all "of which" and similar breakdown rows',
         "reply": "Reviewing the Stock column for breakdown rows first:\n\n```python\n"
                  + _CASE3_CODE_3 + "```"},
        ("The \"Stock\" column contains both main stock rows and breakdown rows. "
         "To avoid double-counting, I will exclude rows 9, 11, and 21 and sum "
         "only the main stock rows:\n\n```python\n" + _CASE3_CODE_4 + "```"),
        _CASE3_RIGHT_FINAL,
        {"match": "validation verdict", "reply": _CASE3_PASS_VERDICT},
    ])


def landings_rows_stdout(landings_wb) -> str:
    """The canned stdout of the first inspector loop, rendered exactly as the
    worker would print it over the landings fixture."""
    grid = tk_inspect(landings_wb, "PELAGIC", ["A1:N20"])[0]
    return "".join(f"Row {i + 1}: {row}\n" for i, row in enumerate(grid))


def landings_stock_stdout(landings_wb) -> str:
    grid = tk_inspect(landings_wb, "PELAGIC", ["A6:A23"])[0]
    return "".join(f"Row {i + 6}: {row[0]}\n" for i, row in enumerate(grid))


def case3_stub(landings_wb) -> ScriptedExecutor:
    return ScriptedExecutor([
        StubEntry(match='inspector("A1:N20", "PELAGIC")',
                  result=ExecResult(stdout=landings_rows_stdout(landings_wb),
                                    duration_ms=21, new_vars=("data", "i", "row"))),
        StubEntry(match='inspector("A6:F23", "PELAGIC")',
                  result=ExecResult(stdout=CASE3_SUMS_STDOUT, duration_ms=18,
                                    new_vars=("scotland_2023_total", "ewni_2023_total"))),
        StubEntry(match='stock_range = "A6:A23"',
                  result=ExecResult(stdout=landings_stock_stdout(landings_wb),
                                    duration_ms=16,
                                    new_vars=("stock_range", "scotland_2023_range",
                                              "ewni_2023_range", "stock_names",
                                              "scotland_2023", "ewni_2023"))),
        StubEntry(match="main_stock_indices",
                  result=ExecResult(stdout=CASE3_TOTALS_STDOUT, duration_ms=14,
                                    new_vars=("main_stock_indices", "safe_float",
                                              "scotland_2023_sum", "ewni_2023_sum"))),
    ])


CASE3_FEEDBACK_LINES = [
    'Before summing, use the inspector to review the "Stock" column and identify which rows are parent categories and which are subcategories (e.g., rows starting with "of which", "of which IVa", "of which IIIa IVbc", etc.).',
    'Exclude all "of which" and similar breakdown rows from the sum to avoid double-counting. Only sum the main stock rows.',
    'Consider using a filter such as: only include rows where the "Stock" value does NOT start with "of which" or is not an indented/breakdown row.',
    'Re-execute the sum for Scotland_2023 and EWNI_2023 using only the main stock rows.',
    'Use inspector or inspector_attribute to explicitly check the editing area and confirm which rows are being included in the calculation before providing the final answer.',
    'Provide a brief list of which stock names were included in the sum for transparency.',
]
