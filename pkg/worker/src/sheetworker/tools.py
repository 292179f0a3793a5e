"""Tool bindings exposed inside the execution namespace.

Semantics mirror the orchestrator-side tool protocol: inspection with
optional attributes, three-mode search capped at 500 hits, DataFrame export
with the header_row convention (0 = no header), and sheet listing. Edit
flows additionally get set_cell and save_workbook.
"""

from __future__ import annotations

import re

import pandas as pd

from . import xlsxio
from .xlsxio import Workbook, XlsxError, a1_to_rc, parse_range, rc_to_a1

SEARCH_HIT_CAP = 500
_WS_RUN = re.compile(r"\s+")


def render_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "TRUE" if value else "FALSE"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _normalize_ws(text: str) -> str:
    return _WS_RUN.sub(" ", text.strip()).lower()


def _matches(rendered: str, query: str, mode: str) -> bool:
    if mode == "exact":
        return rendered == query
    if mode == "partial":
        return query.lower() in rendered.lower()
    if mode in ("whitespace-tolerant", "whitespace_tolerant"):
        return _normalize_ws(rendered) == _normalize_ws(query)
    raise ValueError(f"unknown search mode {mode!r}")


class ExcelToolkit:
    """Bound over one loaded workbook; the session exposes its methods as
    bare functions so generated code calls inspector(...), search(...), etc.
    """

    def __init__(self, workbook: Workbook):
        self.workbook = workbook

    # -- reading ---------------------------------------------------------

    def inspector(self, range_references, sheet_name: str, attributes=None):
        """Row-major value grids for one or more A1 ranges.

        Accepts a single "A1:N20" string or a list; returns one grid per
        range (a single grid when called with a single string). Empty and
        out-of-range cells come back as None.
        """
        single = isinstance(range_references, str)
        refs = [range_references] if single else list(range_references)
        sheet = self.workbook.sheet(sheet_name)
        grids = []
        for text in refs:
            (r1, c1), (r2, c2) = parse_range(text)
            if attributes:
                grid = [[self._attribute_record(sheet, r, c)
                         for c in range(c1, c2 + 1)] for r in range(r1, r2 + 1)]
            else:
                grid = [[self._value(sheet, r, c)
                         for c in range(c1, c2 + 1)] for r in range(r1, r2 + 1)]
            grids.append(grid)
        return grids[0] if single else grids

    @staticmethod
    def _value(sheet, r, c):
        cell = sheet["cells"].get((r, c))
        return cell["value"] if cell else None

    @staticmethod
    def _attribute_record(sheet, r, c):
        cell = sheet["cells"].get((r, c)) or {}
        return {
            "ref": rc_to_a1(r, c),
            "value": cell.get("value"),
            "formula": cell.get("formula"),
            "fill_color": cell.get("fill"),
            "font": cell.get("font"),
        }

    def search(self, query: str, mode: str = "partial", sheet_name: str | None = None):
        """Scan rendered cell values; hits ordered by (sheet, row, column)."""
        if not query:
            raise ValueError("search query must be non-empty")
        sheets = [self.workbook.sheet(sheet_name)] if sheet_name else self.workbook.sheets
        hits = []
        total = 0
        for sheet in sheets:
            for (r, c) in sorted(sheet["cells"]):
                rendered = render_value(sheet["cells"][(r, c)]["value"])
                if not rendered:
                    continue
                if _matches(rendered, query, mode):
                    total += 1
                    if len(hits) < SEARCH_HIT_CAP:
                        hits.append({"sheet": sheet["name"], "ref": rc_to_a1(r, c),
                                     "value": rendered})
        return {"hits": hits, "total_matches": total}

    def get_sheet_as_dataframe(self, sheet_name: str, header_row: int = 0,
                               max_rows: int | None = None) -> pd.DataFrame:
        """Sheet as a pandas DataFrame (object dtype: values arrive untouched).

        header_row is 1-based; 0 treats every row as data with synthetic
        col_1..col_N names; row k supplies names otherwise (blank ones fall
        back to col_<i>) and data starts at k+1.
        """
        sheet = self.workbook.sheet(sheet_name)
        if not sheet["cells"] and not sheet["merges"]:
            return pd.DataFrame(columns=["col_1"])
        (r1, c1), (r2, c2) = self.workbook.used_bounds(sheet_name)
        width = c2 - c1 + 1

        if header_row < 0:
            raise ValueError("header_row must be >= 0")
        if header_row == 0:
            columns = [f"col_{i + 1}" for i in range(width)]
            data_start = r1
        else:
            header_idx = header_row - 1
            if header_idx > r2:
                raise XlsxError(f"header_row {header_row} beyond used range")
            columns = []
            for i, c in enumerate(range(c1, c2 + 1)):
                name = render_value(self._value(sheet, header_idx, c))
                columns.append(name if name.strip() else f"col_{i + 1}")
            data_start = header_idx + 1

        rows = []
        for r in range(data_start, r2 + 1):
            if max_rows is not None and len(rows) >= max_rows:
                break
            rows.append([self._value(sheet, r, c) for c in range(c1, c2 + 1)])
        return pd.DataFrame(rows, columns=columns, dtype=object)

    def list_sheets(self):
        infos = []
        for sheet in self.workbook.sheets:
            (r1, c1), (r2, c2) = self.workbook.used_bounds(sheet["name"])
            infos.append({"name": sheet["name"], "rows": r2 - r1 + 1,
                          "cols": c2 - c1 + 1})
        return infos

    # -- manipulation -----------------------------------------------------

    def set_cell(self, sheet_name: str, ref: str, value) -> None:
        """Write a value (clears any formula at that cell)."""
        sheet = self.workbook.sheet(sheet_name)
        rc = a1_to_rc(ref)
        if value is None:
            sheet["cells"].pop(rc, None)
        else:
            sheet["cells"][rc] = {"value": value, "formula": None,
                                  "fill": None, "font": None}

    def save_workbook(self, path: str | None = None) -> str:
        """Persist edits; defaults to the file the session was opened on."""
        target = path or self.workbook.path
        if not target:
            raise XlsxError("no target path to save to")
        xlsxio.save(self.workbook, target)
        return target

    def bindings(self) -> dict:
        return {
            "inspector": self.inspector,
            "search": self.search,
            "get_sheet_as_dataframe": self.get_sheet_as_dataframe,
            "list_sheets": self.list_sheets,
            "set_cell": self.set_cell,
            "save_workbook": self.save_workbook,
        }
