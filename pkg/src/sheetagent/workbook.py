"""In-memory workbook model: sheets, cells, merged regions, load/save.

Formula cells expose the file's cached value; nothing is recomputed. Dates
arrive as ISO-8601 text (conversion happens at load). Error literals keep
their own scalar kind and are never coerced.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .cellref import CellRef, RangeRef, parse_cell_ref
from .errors import CorruptFileError, UnknownSheetError

Scalar = None | str | int | float | bool  # plus CellError below


@dataclass(frozen=True)
class CellError:
    """An error literal such as #DIV/0! or #REF!."""

    code: str

    def __str__(self) -> str:
        return self.code


@dataclass(frozen=True)
class FontInfo:
    name: str | None = None
    size: float | None = None
    bold: bool = False
    italic: bool = False
    color: str | None = None


@dataclass(frozen=True)
class Cell:
    value: object = None  # Scalar | CellError
    formula: str | None = None
    fill_color: str | None = None
    font: FontInfo | None = None

    @property
    def is_blank(self) -> bool:
        return (self.value is None or self.value == "") and self.formula is None


EMPTY_CELL = Cell()


def render_value(value) -> str:
    """Human/LLM-facing rendering of a cell value.

    Empty renders as "" (never the text "None"); floats use shortest
    round-trip decimals; booleans use spreadsheet TRUE/FALSE.
    """
    if value is None:
        return ""
    if isinstance(value, bool):
        return "TRUE" if value else "FALSE"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, CellError):
        return value.code
    return str(value)


@dataclass(frozen=True)
class MergedRegion:
    region: RangeRef

    @property
    def anchor(self) -> CellRef:
        return self.region.start


@dataclass
class Sheet:
    name: str
    cells: dict[CellRef, Cell] = field(default_factory=dict)
    merged: list[MergedRegion] = field(default_factory=list)

    def cell(self, ref: CellRef | str) -> Cell:
        """Cell at ref; the empty-cell sentinel for unpopulated positions."""
        if isinstance(ref, str):
            ref = parse_cell_ref(ref)
        return self.cells.get(ref, EMPTY_CELL)

    def merged_region_at(self, ref: CellRef | str) -> MergedRegion | None:
        if isinstance(ref, str):
            ref = parse_cell_ref(ref)
        for merge in self.merged:
            if merge.region.contains(ref):
                return merge
        return None

    def used_range(self) -> RangeRef:
        """Minimal bounds of populated cells and merges; A1:A1 when empty."""
        min_r = min_c = None
        max_r = max_c = 0
        for ref in self.cells:
            if min_r is None:
                min_r, min_c, max_r, max_c = ref.row, ref.col, ref.row, ref.col
            else:
                min_r = min(min_r, ref.row)
                min_c = min(min_c, ref.col)
                max_r = max(max_r, ref.row)
                max_c = max(max_c, ref.col)
        for merge in self.merged:
            region = merge.region
            if min_r is None:
                min_r, min_c = region.start.row, region.start.col
                max_r, max_c = region.end.row, region.end.col
            else:
                min_r = min(min_r, region.start.row)
                min_c = min(min_c, region.start.col)
                max_r = max(max_r, region.end.row)
                max_c = max(max_c, region.end.col)
        if min_r is None:
            return RangeRef(CellRef(0, 0), CellRef(0, 0))
        return RangeRef(CellRef(min_r, min_c), CellRef(max_r, max_c))

    def set(self, ref: CellRef | str, value, *, formula: str | None = None,
            fill_color: str | None = None, font: FontInfo | None = None) -> None:
        """Write a value. Plain-value writes clear any prior formula."""
        if isinstance(ref, str):
            ref = parse_cell_ref(ref)
        if value is None and formula is None and fill_color is None and font is None:
            self.cells.pop(ref, None)
            return
        self.cells[ref] = Cell(value=value, formula=formula,
                               fill_color=fill_color, font=font)


@dataclass
class Workbook:
    sheets: list[Sheet] = field(default_factory=list)
    source_path: str | None = None

    @property
    def sheet_names(self) -> list[str]:
        return [s.name for s in self.sheets]

    def sheet(self, name: str) -> Sheet:
        for s in self.sheets:
            if s.name == name:
                return s
        raise UnknownSheetError(name)

    def add_sheet(self, name: str) -> Sheet:
        if name in self.sheet_names:
            raise CorruptFileError(f"duplicate sheet name {name!r}")
        sheet = Sheet(name=name)
        self.sheets.append(sheet)
        return sheet


def _validate_merges(sheet: Sheet) -> None:
    regions = [m.region for m in sheet.merged]
    for i, a in enumerate(regions):
        for b in regions[i + 1:]:
            if a.intersects(b):
                raise CorruptFileError(
                    f"overlapping merges {a} and {b} on sheet {sheet.name!r}")


def load_workbook(path) -> Workbook:
    """Load an .xlsx file with values, formulas, merges, and formatting."""
    from . import ooxml

    raw_sheets = ooxml.read_xlsx(path)
    wb = Workbook(source_path=str(path))
    seen = set()
    for raw in raw_sheets:
        if raw["name"] in seen:
            raise CorruptFileError(f"duplicate sheet name {raw['name']!r}")
        seen.add(raw["name"])
        sheet = Sheet(name=raw["name"])
        for ref, cd in raw["cells"].items():
            value = cd["value"]
            if isinstance(value, tuple) and value and value[0] == "error":
                value = CellError(value[1])
            font = cd["font"]
            sheet.cells[ref] = Cell(
                value=value,
                formula=cd["formula"],
                fill_color=cd["fill"],
                font=FontInfo(**font) if font else None,
            )
        sheet.merged = [MergedRegion(region) for region in raw["merges"]]
        _validate_merges(sheet)
        wb.sheets.append(sheet)
    return wb


def save_workbook(wb: Workbook, path) -> None:
    """Write the workbook to an .xlsx file; a reload yields equal content."""
    from . import ooxml

    raw_sheets = []
    for sheet in wb.sheets:
        cells = {}
        for ref, cell in sheet.cells.items():
            value = cell.value
            if isinstance(value, CellError):
                value = ("error", value.code)
            font = None
            if cell.font is not None:
                font = {"name": cell.font.name, "size": cell.font.size,
                        "bold": cell.font.bold, "italic": cell.font.italic,
                        "color": cell.font.color}
            cells[ref] = {"value": value, "formula": cell.formula,
                          "fill": cell.fill_color, "font": font}
        raw_sheets.append({"name": sheet.name, "cells": cells,
                           "merges": [m.region for m in sheet.merged]})
    ooxml.write_xlsx(path, raw_sheets)


def cell_at(wb: Workbook, sheet_name: str, ref: CellRef | str) -> Cell:
    return wb.sheet(sheet_name).cell(ref)


def set_cell(wb: Workbook, sheet_name: str, ref: CellRef | str, value) -> None:
    wb.sheet(sheet_name).set(ref, value)


def used_range(sheet: Sheet) -> RangeRef:
    return sheet.used_range()
