"""The four-tool Excel protocol: inspect, search, table export, sheet listing.

This is the complete tool surface available both to the execution sandbox
(where the worker binds native equivalents) and to traditional tool-calling
mode via the structured schemas at the bottom.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .cellref import CellRef, RangeRef, parse_range_ref
from .errors import RegionOutOfBoundsError
from .workbook import Cell, FontInfo, Workbook, render_value

SEARCH_HIT_CAP = 500

_WHITESPACE_RUN = re.compile(r"\s+")


class SearchMode(enum.Enum):
    EXACT = "exact"
    PARTIAL = "partial"
    WHITESPACE_TOLERANT = "whitespace-tolerant"

    @classmethod
    def from_name(cls, name: str) -> "SearchMode":
        for mode in cls:
            if mode.value == name or mode.name.lower() == name.lower():
                return mode
        raise ValueError(f"unknown search mode {name!r}")


def normalize_whitespace(text: str) -> str:
    return _WHITESPACE_RUN.sub(" ", text.strip()).lower()


def value_matches(rendered: str, query: str, mode: SearchMode) -> bool:
    if mode is SearchMode.EXACT:
        return rendered == query
    if mode is SearchMode.PARTIAL:
        return query.lower() in rendered.lower()
    return normalize_whitespace(rendered) == normalize_whitespace(query)


@dataclass(frozen=True)
class SearchHit:
    sheet: str
    ref: CellRef
    rendered_value: str


@dataclass(frozen=True)
class SearchResult:
    hits: tuple[SearchHit, ...]
    total_matches: int

    def __iter__(self):
        return iter(self.hits)

    def __len__(self):
        return len(self.hits)


@dataclass(frozen=True)
class AttributeRecord:
    ref: CellRef
    value: object
    formula: str | None
    fill_color: str | None
    font: FontInfo | None


@dataclass(frozen=True)
class TableExport:
    columns: list[str]
    rows: list[list]


@dataclass(frozen=True)
class SheetInfo:
    name: str
    rows: int
    cols: int


def _as_range(ref: RangeRef | str) -> RangeRef:
    return parse_range_ref(ref) if isinstance(ref, str) else ref


def inspect(wb: Workbook, sheet_name: str, ranges: list[RangeRef | str],
            attributes: bool = False) -> list[list[list]]:
    """One row-major grid per range; out-of-bounds cells come back empty.

    Grids hold raw values (None for empty) or AttributeRecords when the
    attributes flag is set.
    """
    sheet = wb.sheet(sheet_name)
    grids = []
    for raw in ranges:
        region = _as_range(raw)
        grid = []
        for r in region.rows():
            row = []
            for c in region.cols():
                ref = CellRef(r, c)
                cell = sheet.cell(ref)
                if attributes:
                    row.append(AttributeRecord(ref=ref, value=cell.value,
                                               formula=cell.formula,
                                               fill_color=cell.fill_color,
                                               font=cell.font))
                else:
                    row.append(cell.value)
            grid.append(row)
        grids.append(grid)
    return grids


def search(wb: Workbook, query: str, mode: SearchMode = SearchMode.PARTIAL,
           scope: str | None = None, cap: int = SEARCH_HIT_CAP) -> SearchResult:
    """Scan rendered cell values (never formulas) for the query.

    Hits are ordered (sheet order, row, column); at most `cap` are returned,
    with the full match count alongside.
    """
    if not query:
        raise ValueError("search query must be non-empty")
    if isinstance(mode, str):
        mode = SearchMode.from_name(mode)
    sheets = [wb.sheet(scope)] if scope is not None else wb.sheets

    hits: list[SearchHit] = []
    total = 0
    for sheet in sheets:
        for ref in sorted(sheet.cells):
            rendered = render_value(sheet.cells[ref].value)
            if rendered == "":
                continue
            if value_matches(rendered, query, mode):
                total += 1
                if len(hits) < cap:
                    hits.append(SearchHit(sheet=sheet.name, ref=ref,
                                          rendered_value=rendered))
    return SearchResult(hits=tuple(hits), total_matches=total)


def export_table(wb: Workbook, sheet_name: str, header_row: int = 0,
                 max_rows: int | None = None) -> TableExport:
    """Flatten a sheet into column names + a row-major value matrix.

    header_row is 1-based; 0 means "no header": every used row is data and
    columns get synthetic names col_1..col_N. With header_row=k, row k
    supplies the names (empty ones fall back to col_<i>) and data starts at
    row k+1. max_rows caps the data rows.
    """
    sheet = wb.sheet(sheet_name)
    if not sheet.cells and not sheet.merged:
        return TableExport(columns=["col_1"], rows=[])
    bounds = sheet.used_range()
    width = bounds.width

    if header_row < 0:
        raise ValueError("header_row must be >= 0")
    if header_row == 0:
        columns = [f"col_{i + 1}" for i in range(width)]
        data_start = bounds.start.row
    else:
        header_idx = header_row - 1
        if header_idx > bounds.end.row:
            raise RegionOutOfBoundsError(
                f"header_row {header_row} beyond used range {bounds}")
        columns = []
        for i, c in enumerate(bounds.cols()):
            rendered = render_value(sheet.cell(CellRef(header_idx, c)).value)
            columns.append(rendered if rendered.strip() else f"col_{i + 1}")
        data_start = header_idx + 1

    rows = []
    for r in range(data_start, bounds.end.row + 1):
        if max_rows is not None and len(rows) >= max_rows:
            break
        rows.append([sheet.cell(CellRef(r, c)).value for c in bounds.cols()])
    return TableExport(columns=columns, rows=rows)


def list_sheets(wb: Workbook) -> list[SheetInfo]:
    infos = []
    for sheet in wb.sheets:
        bounds = sheet.used_range()
        infos.append(SheetInfo(name=sheet.name, rows=bounds.height, cols=bounds.width))
    return infos


# Structured schemas for traditional (JSON) tool-calling mode; the sandbox
# path exposes the same four operations as native callables instead.
TOOL_SCHEMAS = [
    {
        "name": "inspector",
        "description": "Return the values of one or more A1-style ranges as "
                       "row-major grids. Set attributes=true for formulas, "
                       "fill color, and font alongside each value.",
        "parameters": {
            "type": "object",
            "properties": {
                "range_references": {"type": "array", "items": {"type": "string"}},
                "sheet_name": {"type": "string"},
                "attributes": {"type": "boolean", "default": False},
            },
            "required": ["range_references", "sheet_name"],
        },
    },
    {
        "name": "search",
        "description": "Find cells whose rendered value matches the query. "
                       "Modes: exact, partial (case-insensitive substring), "
                       "whitespace-tolerant (trim + collapse runs).",
        "parameters": {
            "type": "object",
            "properties": {
                "query": {"type": "string"},
                "mode": {"type": "string",
                         "enum": [m.value for m in SearchMode],
                         "default": "partial"},
                "sheet_name": {"type": "string"},
            },
            "required": ["query"],
        },
    },
    {
        "name": "get_sheet_as_table",
        "description": "Export a sheet as column names plus data rows. "
                       "header_row=0 treats every row as data.",
        "parameters": {
            "type": "object",
            "properties": {
                "sheet_name": {"type": "string"},
                "header_row": {"type": "integer", "default": 0},
                "max_rows": {"type": ["integer", "null"], "default": None},
            },
            "required": ["sheet_name"],
        },
    },
    {
        "name": "list_sheets",
        "description": "List sheet names with used-range dimensions.",
        "parameters": {"type": "object", "properties": {}},
    },
]
