"""Minimal Office Open XML (.xlsx) reader/writer on stdlib zipfile + ElementTree.

Covers what the workbook model needs: cell values (with cached formula
results), formulas, merged regions, fill color, font, and date number formats
surfaced as ISO-8601 text. No recomputation, charts, or comments.
"""

from __future__ import annotations

import re
import zipfile
from datetime import datetime, timedelta
from xml.etree import ElementTree as ET
from xml.sax.saxutils import escape, quoteattr

from .cellref import MAX_COLS, MAX_ROWS, CellRef, parse_range_ref
from .errors import CorruptFileError, UnsupportedFormatError, WorkbookIOError

NS_MAIN = "http://schemas.openxmlformats.org/spreadsheetml/2006/main"
NS_REL_DOC = "http://schemas.openxmlformats.org/officeDocument/2006/relationships"
NS_REL_PKG = "http://schemas.openxmlformats.org/package/2006/relationships"


def _q(tag: str) -> str:
    return f"{{{NS_MAIN}}}{tag}"


# numFmtIds that Excel treats as date/time built-ins.
_BUILTIN_DATE_FORMATS = frozenset(
    list(range(14, 23)) + list(range(27, 37)) + [45, 46, 47] + list(range(50, 59))
)

_QUOTED_OR_ESCAPED = re.compile(r'"[^"]*"|\\.')
_BRACKETED = re.compile(r"\[[^\]]*\]")
_DATE_CHARS = frozenset("dmyhsDMYHS")


def _is_date_format(code: str) -> bool:
    # Elapsed-time brackets like [h] still mean time; color/condition brackets do not.
    if re.search(r"\[(h+|m+|s+)\]", code, re.I):
        return True
    stripped = _BRACKETED.sub("", _QUOTED_OR_ESCAPED.sub("", code))
    return any(ch in _DATE_CHARS for ch in stripped)


def serial_to_iso(serial: float, date1904: bool = False) -> str:
    """Render an Excel date serial as ISO-8601 text."""
    if date1904:
        epoch = datetime(1904, 1, 1)
    elif serial < 60:
        epoch = datetime(1899, 12, 31)
    else:
        # Skips the fictitious 1900-02-29 (serial 60 clamps to 02-28).
        epoch = datetime(1899, 12, 30)
    days = int(serial)
    frac = serial - days
    seconds = int(round(frac * 86400))
    if seconds >= 86400:
        days += 1
        seconds = 0
    moment = epoch + timedelta(days=days, seconds=seconds)
    if 0 < serial < 1:
        return moment.strftime("%H:%M:%S")
    if seconds:
        return moment.strftime("%Y-%m-%dT%H:%M:%S")
    return moment.strftime("%Y-%m-%d")


def _parse_number(text: str):
    if re.fullmatch(r"-?\d+", text):
        try:
            return int(text)
        except ValueError:
            pass
    return float(text)


# ---------------------------------------------------------------------------
# Reading
# ---------------------------------------------------------------------------

class _Styles:
    def __init__(self):
        self.xf_numfmt: list[int] = []
        self.xf_font: list[int] = []
        self.xf_fill: list[int] = []
        self.fonts: list[dict] = []
        self.fills: list[str | None] = []
        self.date_numfmts: set[int] = set(_BUILTIN_DATE_FORMATS)

    def is_date_style(self, s: int | None) -> bool:
        if s is None or not (0 <= s < len(self.xf_numfmt)):
            return False
        return self.xf_numfmt[s] in self.date_numfmts

    def font_of(self, s: int | None) -> dict | None:
        if s is None or not (0 <= s < len(self.xf_font)):
            return None
        idx = self.xf_font[s]
        if idx == 0 or not (0 <= idx < len(self.fonts)):
            return None
        return self.fonts[idx]

    def fill_of(self, s: int | None) -> str | None:
        if s is None or not (0 <= s < len(self.xf_fill)):
            return None
        idx = self.xf_fill[s]
        if idx < 2 or not (0 <= idx < len(self.fills)):
            return None  # fills 0/1 are the spec-mandated none/gray125 defaults
        return self.fills[idx]


def _read_styles(zf: zipfile.ZipFile) -> _Styles:
    styles = _Styles()
    try:
        data = zf.read("xl/styles.xml")
    except KeyError:
        return styles
    root = ET.fromstring(data)

    for nf in root.iter(_q("numFmt")):
        fmt_id = int(nf.get("numFmtId", "-1"))
        if fmt_id >= 0 and _is_date_format(nf.get("formatCode", "")):
            styles.date_numfmts.add(fmt_id)

    fonts_el = root.find(_q("fonts"))
    if fonts_el is not None:
        for font in fonts_el.findall(_q("font")):
            name_el = font.find(_q("name"))
            sz_el = font.find(_q("sz"))
            color_el = font.find(_q("color"))
            styles.fonts.append({
                "name": name_el.get("val") if name_el is not None else None,
                "size": float(sz_el.get("val")) if sz_el is not None and sz_el.get("val") else None,
                "bold": font.find(_q("b")) is not None,
                "italic": font.find(_q("i")) is not None,
                "color": color_el.get("rgb") if color_el is not None else None,
            })

    fills_el = root.find(_q("fills"))
    if fills_el is not None:
        for fill in fills_el.findall(_q("fill")):
            rgb = None
            pattern = fill.find(_q("patternFill"))
            if pattern is not None and pattern.get("patternType") == "solid":
                fg = pattern.find(_q("fgColor"))
                if fg is not None:
                    rgb = fg.get("rgb")
            styles.fills.append(rgb)

    xfs_el = root.find(_q("cellXfs"))
    if xfs_el is not None:
        for xf in xfs_el.findall(_q("xf")):
            styles.xf_numfmt.append(int(xf.get("numFmtId", "0")))
            styles.xf_font.append(int(xf.get("fontId", "0")))
            styles.xf_fill.append(int(xf.get("fillId", "0")))
    return styles


def _read_shared_strings(zf: zipfile.ZipFile) -> list[str]:
    try:
        data = zf.read("xl/sharedStrings.xml")
    except KeyError:
        return []
    root = ET.fromstring(data)
    strings = []
    for si in root.findall(_q("si")):
        strings.append("".join(t.text or "" for t in si.iter(_q("t"))))
    return strings


def _cell_ref_from_attr(attr: str | None, row_idx: int, next_col: int) -> CellRef:
    if attr:
        m = re.fullmatch(r"([A-Z]+)(\d+)", attr)
        if not m:
            raise CorruptFileError(f"bad cell reference {attr!r}")
        letters, digits = m.groups()
        col = 0
        for ch in letters:
            col = col * 26 + (ord(ch) - ord("A") + 1)
        return CellRef(int(digits) - 1, col - 1)
    return CellRef(row_idx, next_col)


def read_xlsx(path) -> list[dict]:
    """Parse an xlsx file into a list of raw sheet dicts.

    Each dict: {"name", "cells": {CellRef: {"value","formula","fill","font"}},
    "merges": [RangeRef]}. Validation of merge disjointness and workbook-level
    invariants happens in the workbook module.
    """
    try:
        zf = zipfile.ZipFile(path)
    except FileNotFoundError as exc:
        raise WorkbookIOError(f"cannot open {path}: {exc}") from exc
    except zipfile.BadZipFile as exc:
        raise UnsupportedFormatError(f"{path} is not an xlsx (zip) file") from exc

    with zf:
        names = set(zf.namelist())
        if "xl/workbook.xml" not in names:
            raise UnsupportedFormatError(f"{path} has no xl/workbook.xml part")

        try:
            wb_root = ET.fromstring(zf.read("xl/workbook.xml"))
        except ET.ParseError as exc:
            raise CorruptFileError(f"unparseable workbook.xml: {exc}") from exc

        pr = wb_root.find(_q("workbookPr"))
        date1904 = pr is not None and pr.get("date1904") in ("1", "true")

        rels = {}
        rels_part = "xl/_rels/workbook.xml.rels"
        if rels_part in names:
            for rel in ET.fromstring(zf.read(rels_part)).iter(f"{{{NS_REL_PKG}}}Relationship"):
                rels[rel.get("Id")] = rel.get("Target", "")

        sheets_el = wb_root.find(_q("sheets"))
        if sheets_el is None:
            raise CorruptFileError("workbook has no sheet list")

        styles = _read_styles(zf)
        shared = _read_shared_strings(zf)

        sheets = []
        for sheet_el in sheets_el.findall(_q("sheet")):
            name = sheet_el.get("name", "")
            rid = sheet_el.get(f"{{{NS_REL_DOC}}}id")
            target = rels.get(rid, "")
            if target.startswith("/"):
                part = target.lstrip("/")
            else:
                part = "xl/" + target
            part = part.replace("\\", "/").replace("xl/xl/", "xl/")
            if "worksheets/" not in part:
                continue  # chartsheets etc. are out of scope
            if part not in names:
                raise CorruptFileError(f"sheet part {part} missing for sheet {name!r}")
            sheets.append(_read_worksheet(zf.read(part), name, shared, styles, date1904))

        if not sheets:
            raise CorruptFileError(f"{path} contains no worksheets")
        return sheets


def _read_worksheet(data: bytes, name: str, shared: list[str],
                    styles: _Styles, date1904: bool) -> dict:
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise CorruptFileError(f"unparseable worksheet {name!r}: {exc}") from exc

    cells: dict[CellRef, dict] = {}
    shared_formulas: dict[str, str] = {}

    sheet_data = root.find(_q("sheetData"))
    if sheet_data is not None:
        row_idx = -1
        for row_el in sheet_data.findall(_q("row")):
            r_attr = row_el.get("r")
            row_idx = int(r_attr) - 1 if r_attr else row_idx + 1
            next_col = 0
            for c_el in row_el.findall(_q("c")):
                ref = _cell_ref_from_attr(c_el.get("r"), row_idx, next_col)
                next_col = ref.col + 1
                if ref.row >= MAX_ROWS or ref.col >= MAX_COLS:
                    raise CorruptFileError(f"cell {ref} exceeds sheet limits")
                cells[ref] = _read_cell(c_el, shared, styles, date1904, shared_formulas)

    merges = []
    merge_el = root.find(_q("mergeCells"))
    if merge_el is not None:
        for m in merge_el.findall(_q("mergeCell")):
            merges.append(parse_range_ref(m.get("ref", "")))

    return {"name": name, "cells": cells, "merges": merges}


def _read_cell(c_el, shared: list[str], styles: _Styles, date1904: bool,
               shared_formulas: dict[str, str]) -> dict:
    ctype = c_el.get("t", "n")
    s_attr = c_el.get("s")
    style_idx = int(s_attr) if s_attr is not None else None

    formula = None
    f_el = c_el.find(_q("f"))
    if f_el is not None:
        formula = f_el.text or ""
        si = f_el.get("si")
        if si is not None:
            if f_el.text:
                shared_formulas[si] = f_el.text
            else:
                formula = shared_formulas.get(si, "")

    v_el = c_el.find(_q("v"))
    raw = v_el.text if v_el is not None else None

    value = None
    if ctype == "s":
        if raw is not None:
            idx = int(raw)
            if not 0 <= idx < len(shared):
                raise CorruptFileError(f"shared string index {idx} out of range")
            value = shared[idx]
    elif ctype == "str":
        value = raw or ""
    elif ctype == "inlineStr":
        is_el = c_el.find(_q("is"))
        if is_el is not None:
            value = "".join(t.text or "" for t in is_el.iter(_q("t")))
    elif ctype == "b":
        if raw is not None:
            value = raw in ("1", "true")
    elif ctype == "e":
        value = ("error", raw or "#N/A")
    else:  # numeric
        if raw is not None:
            number = _parse_number(raw)
            if styles.is_date_style(style_idx):
                value = serial_to_iso(float(number), date1904)
            else:
                value = number

    return {
        "value": value,
        "formula": formula,
        "fill": styles.fill_of(style_idx),
        "font": styles.font_of(style_idx),
    }


# ---------------------------------------------------------------------------
# Writing
# ---------------------------------------------------------------------------

_XML_DECL = '<?xml version="1.0" encoding="UTF-8" standalone="yes"?>\n'


def write_xlsx(path, sheets: list[dict]) -> None:
    """Write sheets (same raw dict shape as read_xlsx returns) to an xlsx file."""
    shared: list[str] = []
    shared_index: dict[str, int] = {}

    def sst(text: str) -> int:
        idx = shared_index.get(text)
        if idx is None:
            idx = len(shared)
            shared_index[text] = idx
            shared.append(text)
        return idx

    fonts: list[tuple] = [(None, None, False, False, None)]  # default font slot
    font_index = {fonts[0]: 0}
    fills: list[str] = []  # solid fill colors; file slots start at 2
    fill_index: dict[str, int] = {}
    xfs: list[tuple[int, int]] = [(0, 0)]  # (fontId, fillId)
    xf_index = {(0, 0): 0}

    def style_for(cell: dict) -> int | None:
        font = cell.get("font")
        fill = cell.get("fill")
        if font is None and fill is None:
            return None
        font_key = (font or {}).get("name"), (font or {}).get("size"), \
            bool((font or {}).get("bold")), bool((font or {}).get("italic")), \
            (font or {}).get("color")
        if font_key not in font_index:
            font_index[font_key] = len(fonts)
            fonts.append(font_key)
        fill_id = 0
        if fill is not None:
            if fill not in fill_index:
                fill_index[fill] = len(fills) + 2
                fills.append(fill)
            fill_id = fill_index[fill]
        key = (font_index[font_key], fill_id)
        if key not in xf_index:
            xf_index[key] = len(xfs)
            xfs.append(key)
        return xf_index[key]

    sheet_xmls = []
    for sheet in sheets:
        sheet_xmls.append(_worksheet_xml(sheet, sst, style_for))

    parts = {
        "[Content_Types].xml": _content_types_xml(len(sheets)),
        "_rels/.rels": _root_rels_xml(),
        "xl/workbook.xml": _workbook_xml([s["name"] for s in sheets]),
        "xl/_rels/workbook.xml.rels": _workbook_rels_xml(len(sheets)),
        "xl/styles.xml": _styles_xml(fonts, fills, xfs),
        "xl/sharedStrings.xml": _shared_strings_xml(shared),
    }
    for i, xml in enumerate(sheet_xmls, start=1):
        parts[f"xl/worksheets/sheet{i}.xml"] = xml

    try:
        with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
            for part_name, content in parts.items():
                info = zipfile.ZipInfo(part_name, date_time=(1980, 1, 1, 0, 0, 0))
                info.compress_type = zipfile.ZIP_DEFLATED
                zf.writestr(info, content)
    except OSError as exc:
        raise WorkbookIOError(f"cannot write {path}: {exc}") from exc


def _worksheet_xml(sheet: dict, sst, style_for) -> str:
    by_row: dict[int, list[tuple[CellRef, dict]]] = {}
    for ref, cell in sheet["cells"].items():
        by_row.setdefault(ref.row, []).append((ref, cell))

    out = [_XML_DECL, f'<worksheet xmlns="{NS_MAIN}">', "<sheetData>"]
    for row in sorted(by_row):
        out.append(f'<row r="{row + 1}">')
        for ref, cell in sorted(by_row[row], key=lambda rc: rc[0].col):
            out.append(_cell_xml(ref, cell, sst, style_for))
        out.append("</row>")
    out.append("</sheetData>")
    if sheet["merges"]:
        out.append(f'<mergeCells count="{len(sheet["merges"])}">')
        for merge in sheet["merges"]:
            a1 = f"{merge.start.to_a1()}:{merge.end.to_a1()}"
            out.append(f'<mergeCell ref="{a1}"/>')
        out.append("</mergeCells>")
    out.append("</worksheet>")
    return "".join(out)


def _cell_xml(ref: CellRef, cell: dict, sst, style_for) -> str:
    attrs = [f'r="{ref.to_a1()}"']
    style = style_for(cell)
    if style is not None:
        attrs.append(f's="{style}"')

    value = cell.get("value")
    formula = cell.get("formula")
    body = ""
    if isinstance(value, tuple) and value and value[0] == "error":
        attrs.append('t="e"')
        body = f"<v>{escape(value[1])}</v>"
    elif isinstance(value, bool):
        attrs.append('t="b"')
        body = f"<v>{1 if value else 0}</v>"
    elif isinstance(value, (int, float)):
        attrs.append('t="n"')
        body = f"<v>{escape(repr(value) if isinstance(value, float) else str(value))}</v>"
    elif isinstance(value, str):
        if formula:
            attrs.append('t="str"')
            body = f"<v>{escape(value)}</v>"
        else:
            attrs.append('t="s"')
            body = f"<v>{sst(value)}</v>"
    if formula is not None:
        body = f"<f>{escape(formula)}</f>" + body
    if not body:
        return f'<c {" ".join(attrs)}/>'
    return f'<c {" ".join(attrs)}>{body}</c>'


def _content_types_xml(n_sheets: int) -> str:
    overrides = "".join(
        f'<Override PartName="/xl/worksheets/sheet{i}.xml" '
        f'ContentType="application/vnd.openxmlformats-officedocument.spreadsheetml.worksheet+xml"/>'
        for i in range(1, n_sheets + 1)
    )
    return (
        _XML_DECL
        + '<Types xmlns="http://schemas.openxmlformats.org/package/2006/content-types">'
        + '<Default Extension="rels" ContentType="application/vnd.openxmlformats-package.relationships+xml"/>'
        + '<Default Extension="xml" ContentType="application/xml"/>'
        + '<Override PartName="/xl/workbook.xml" ContentType="application/vnd.openxmlformats-officedocument.spreadsheetml.sheet.main+xml"/>'
        + overrides
        + '<Override PartName="/xl/styles.xml" ContentType="application/vnd.openxmlformats-officedocument.spreadsheetml.styles+xml"/>'
        + '<Override PartName="/xl/sharedStrings.xml" ContentType="application/vnd.openxmlformats-officedocument.spreadsheetml.sharedStrings+xml"/>'
        + "</Types>"
    )


def _root_rels_xml() -> str:
    return (
        _XML_DECL
        + f'<Relationships xmlns="{NS_REL_PKG}">'
        + '<Relationship Id="rId1" Type="http://schemas.openxmlformats.org/officeDocument/2006/relationships/officeDocument" Target="xl/workbook.xml"/>'
        + "</Relationships>"
    )


def _workbook_xml(names: list[str]) -> str:
    sheets = "".join(
        f"<sheet name={quoteattr(name)} sheetId=\"{i}\" r:id=\"rId{i}\"/>"
        for i, name in enumerate(names, start=1)
    )
    return (
        _XML_DECL
        + f'<workbook xmlns="{NS_MAIN}" xmlns:r="{NS_REL_DOC}">'
        + f"<sheets>{sheets}</sheets></workbook>"
    )


def _workbook_rels_xml(n_sheets: int) -> str:
    rels = "".join(
        f'<Relationship Id="rId{i}" Type="http://schemas.openxmlformats.org/officeDocument/2006/relationships/worksheet" Target="worksheets/sheet{i}.xml"/>'
        for i in range(1, n_sheets + 1)
    )
    rels += (
        f'<Relationship Id="rId{n_sheets + 1}" Type="http://schemas.openxmlformats.org/officeDocument/2006/relationships/styles" Target="styles.xml"/>'
        f'<Relationship Id="rId{n_sheets + 2}" Type="http://schemas.openxmlformats.org/officeDocument/2006/relationships/sharedStrings" Target="sharedStrings.xml"/>'
    )
    return _XML_DECL + f'<Relationships xmlns="{NS_REL_PKG}">' + rels + "</Relationships>"


def _styles_xml(fonts: list[tuple], fills: list[str], xfs: list[tuple[int, int]]) -> str:
    font_parts = []
    for name, size, bold, italic, color in fonts:
        bits = ""
        if bold:
            bits += "<b/>"
        if italic:
            bits += "<i/>"
        bits += f'<sz val="{size if size is not None else 11}"/>'
        if color:
            bits += f'<color rgb={quoteattr(color)}/>'
        bits += f"<name val={quoteattr(name or 'Calibri')}/>"
        font_parts.append(f"<font>{bits}</font>")

    fill_parts = [
        '<fill><patternFill patternType="none"/></fill>',
        '<fill><patternFill patternType="gray125"/></fill>',
    ]
    for rgb in fills:
        fill_parts.append(
            f'<fill><patternFill patternType="solid"><fgColor rgb={quoteattr(rgb)}/>'
            '<bgColor indexed="64"/></patternFill></fill>'
        )

    xf_parts = []
    for font_id, fill_id in xfs:
        apply_bits = ""
        if font_id:
            apply_bits += ' applyFont="1"'
        if fill_id:
            apply_bits += ' applyFill="1"'
        xf_parts.append(
            f'<xf numFmtId="0" fontId="{font_id}" fillId="{fill_id}" borderId="0"{apply_bits}/>'
        )

    return (
        _XML_DECL
        + f'<styleSheet xmlns="{NS_MAIN}">'
        + f'<fonts count="{len(font_parts)}">{"".join(font_parts)}</fonts>'
        + f'<fills count="{len(fill_parts)}">{"".join(fill_parts)}</fills>'
        + '<borders count="1"><border><left/><right/><top/><bottom/><diagonal/></border></borders>'
        + '<cellStyleXfs count="1"><xf numFmtId="0" fontId="0" fillId="0" borderId="0"/></cellStyleXfs>'
        + f'<cellXfs count="{len(xf_parts)}">{"".join(xf_parts)}</cellXfs>'
        + "</styleSheet>"
    )


def _shared_strings_xml(strings: list[str]) -> str:
    items = []
    for s in strings:
        preserve = ' xml:space="preserve"' if s != s.strip() or "\n" in s else ""
        items.append(f"<si><t{preserve}>{escape(s)}</t></si>")
    return (
        _XML_DECL
        + f'<sst xmlns="{NS_MAIN}" count="{len(strings)}" uniqueCount="{len(strings)}">'
        + "".join(items)
        + "</sst>"
    )
