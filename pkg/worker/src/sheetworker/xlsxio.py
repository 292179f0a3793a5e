"""Self-contained xlsx access for the worker.

Reads cell values (cached formula results included), formulas, merged
regions, fill color, and font from an Office Open XML file; writes values,
formulas, and merges back. Dates surface as ISO-8601 text. Error literals
stay as their literal codes (plain strings like "#DIV/0!"). Styling is not
preserved on save.
"""

from __future__ import annotations

import re
import zipfile
from datetime import datetime, timedelta
from xml.etree import ElementTree as ET
from xml.sax.saxutils import escape, quoteattr

NS = "http://schemas.openxmlformats.org/spreadsheetml/2006/main"
NS_R = "http://schemas.openxmlformats.org/officeDocument/2006/relationships"
NS_PKG = "http://schemas.openxmlformats.org/package/2006/relationships"

_CELL_RE = re.compile(r"^([A-Za-z]+)([0-9]+)$")


class XlsxError(Exception):
    pass


def a1_to_rc(ref: str) -> tuple[int, int]:
    """'K2' -> (1, 10), zero-based."""
    m = _CELL_RE.match(ref.strip())
    if not m or int(m.group(2)) < 1:
        raise XlsxError(f"bad cell reference {ref!r}")
    col = 0
    for ch in m.group(1).upper():
        col = col * 26 + (ord(ch) - ord("A") + 1)
    return int(m.group(2)) - 1, col - 1


def rc_to_a1(row: int, col: int) -> str:
    letters = ""
    n = col + 1
    while n > 0:
        n, rem = divmod(n - 1, 26)
        letters = chr(ord("A") + rem) + letters
    return f"{letters}{row + 1}"


def parse_range(text: str) -> tuple[tuple[int, int], tuple[int, int]]:
    """'A1:N20' or 'B6' -> ((row1, col1), (row2, col2)), normalized."""
    parts = text.strip().split(":")
    if len(parts) == 1:
        rc = a1_to_rc(parts[0])
        return rc, rc
    if len(parts) != 2:
        raise XlsxError(f"bad range {text!r}")
    a, b = a1_to_rc(parts[0]), a1_to_rc(parts[1])
    top = (min(a[0], b[0]), min(a[1], b[1]))
    bottom = (max(a[0], b[0]), max(a[1], b[1]))
    return top, bottom


_DATE_BUILTINS = frozenset(list(range(14, 23)) + list(range(27, 37))
                           + [45, 46, 47] + list(range(50, 59)))


def _is_date_code(code: str) -> bool:
    if re.search(r"\[(h+|m+|s+)\]", code, re.I):
        return True
    bare = re.sub(r"\[[^\]]*\]", "", re.sub(r'"[^"]*"|\\.', "", code))
    return any(ch in "dmyhsDMYHS" for ch in bare)


def _serial_to_iso(serial: float, date1904: bool) -> str:
    if date1904:
        epoch = datetime(1904, 1, 1)
    elif serial < 60:
        epoch = datetime(1899, 12, 31)
    else:
        epoch = datetime(1899, 12, 30)
    days = int(serial)
    seconds = int(round((serial - days) * 86400))
    if seconds >= 86400:
        days, seconds = days + 1, 0
    moment = epoch + timedelta(days=days, seconds=seconds)
    if 0 < serial < 1:
        return moment.strftime("%H:%M:%S")
    if seconds:
        return moment.strftime("%Y-%m-%dT%H:%M:%S")
    return moment.strftime("%Y-%m-%d")


def _number(text: str):
    if re.fullmatch(r"-?\d+", text):
        return int(text)
    return float(text)


class Workbook:
    """Sheets in file order; cells as {(row, col): cell-dict}."""

    def __init__(self, sheets: list[dict], path: str | None = None):
        self.sheets = sheets
        self.path = path

    def sheet_names(self) -> list[str]:
        return [s["name"] for s in self.sheets]

    def sheet(self, name: str) -> dict:
        for s in self.sheets:
            if s["name"] == name:
                return s
        raise XlsxError(f"no sheet named {name!r}")

    def used_bounds(self, name: str) -> tuple[tuple[int, int], tuple[int, int]]:
        sheet = self.sheet(name)
        points = list(sheet["cells"].keys())
        for (top, bottom) in sheet["merges"]:
            points.extend([top, bottom])
        if not points:
            return (0, 0), (0, 0)
        rows = [p[0] for p in points]
        cols = [p[1] for p in points]
        return (min(rows), min(cols)), (max(rows), max(cols))


def load(path: str) -> Workbook:
    try:
        zf = zipfile.ZipFile(path)
    except (OSError, zipfile.BadZipFile) as exc:
        raise XlsxError(f"cannot open workbook {path}: {exc}") from exc

    with zf:
        names = set(zf.namelist())
        if "xl/workbook.xml" not in names:
            raise XlsxError(f"{path}: not an xlsx workbook")
        wb_root = ET.fromstring(zf.read("xl/workbook.xml"))
        pr = wb_root.find(f"{{{NS}}}workbookPr")
        date1904 = pr is not None and pr.get("date1904") in ("1", "true")

        rels = {}
        if "xl/_rels/workbook.xml.rels" in names:
            rel_root = ET.fromstring(zf.read("xl/_rels/workbook.xml.rels"))
            for rel in rel_root.iter(f"{{{NS_PKG}}}Relationship"):
                rels[rel.get("Id")] = rel.get("Target", "")

        shared: list[str] = []
        if "xl/sharedStrings.xml" in names:
            sst = ET.fromstring(zf.read("xl/sharedStrings.xml"))
            for si in sst.findall(f"{{{NS}}}si"):
                shared.append("".join(t.text or "" for t in si.iter(f"{{{NS}}}t")))

        date_styles, fills, fonts = _read_styles(zf, names)

        sheets = []
        for sheet_el in wb_root.iter(f"{{{NS}}}sheet"):
            target = rels.get(sheet_el.get(f"{{{NS_R}}}id"), "")
            part = target.lstrip("/") if target.startswith("/") else "xl/" + target
            if "worksheets/" not in part or part not in names:
                continue
            sheets.append(_read_sheet(zf.read(part), sheet_el.get("name", ""),
                                      shared, date_styles, fills, fonts, date1904))
        if not sheets:
            raise XlsxError(f"{path}: workbook has no worksheets")
        return Workbook(sheets, path=str(path))


def _read_styles(zf, names):
    date_styles: set[int] = set()
    fills: list[str | None] = []
    fonts: list[dict | None] = []
    style_fill: list[int] = []
    style_font: list[int] = []
    if "xl/styles.xml" not in names:
        return date_styles, [], []
    root = ET.fromstring(zf.read("xl/styles.xml"))

    date_fmts = set(_DATE_BUILTINS)
    for nf in root.iter(f"{{{NS}}}numFmt"):
        if _is_date_code(nf.get("formatCode", "")):
            date_fmts.add(int(nf.get("numFmtId", "-1")))

    fills_el = root.find(f"{{{NS}}}fills")
    if fills_el is not None:
        for fill in fills_el.findall(f"{{{NS}}}fill"):
            rgb = None
            pattern = fill.find(f"{{{NS}}}patternFill")
            if pattern is not None and pattern.get("patternType") == "solid":
                fg = pattern.find(f"{{{NS}}}fgColor")
                rgb = fg.get("rgb") if fg is not None else None
            fills.append(rgb)

    fonts_el = root.find(f"{{{NS}}}fonts")
    if fonts_el is not None:
        for font in fonts_el.findall(f"{{{NS}}}font"):
            name_el = font.find(f"{{{NS}}}name")
            sz = font.find(f"{{{NS}}}sz")
            color = font.find(f"{{{NS}}}color")
            fonts.append({
                "name": name_el.get("val") if name_el is not None else None,
                "size": float(sz.get("val")) if sz is not None and sz.get("val") else None,
                "bold": font.find(f"{{{NS}}}b") is not None,
                "italic": font.find(f"{{{NS}}}i") is not None,
                "color": color.get("rgb") if color is not None else None,
            })

    xfs = root.find(f"{{{NS}}}cellXfs")
    if xfs is not None:
        for i, xf in enumerate(xfs.findall(f"{{{NS}}}xf")):
            if int(xf.get("numFmtId", "0")) in date_fmts:
                date_styles.add(i)
            style_fill.append(int(xf.get("fillId", "0")))
            style_font.append(int(xf.get("fontId", "0")))

    resolved_fills = [fills[i] if 2 <= i < len(fills) else None for i in style_fill]
    resolved_fonts = [fonts[i] if 0 < i < len(fonts) else None for i in style_font]
    return date_styles, resolved_fills, resolved_fonts


def _read_sheet(data, name, shared, date_styles, fills, fonts, date1904):
    root = ET.fromstring(data)
    cells: dict[tuple[int, int], dict] = {}
    shared_formulas: dict[str, str] = {}

    sheet_data = root.find(f"{{{NS}}}sheetData")
    if sheet_data is not None:
        row_idx = -1
        for row_el in sheet_data.findall(f"{{{NS}}}row"):
            row_idx = int(row_el.get("r")) - 1 if row_el.get("r") else row_idx + 1
            col_idx = 0
            for c_el in row_el.findall(f"{{{NS}}}c"):
                if c_el.get("r"):
                    row_idx, col_idx = a1_to_rc(c_el.get("r"))
                cells[(row_idx, col_idx)] = _read_cell(
                    c_el, shared, date_styles, fills, fonts, date1904, shared_formulas)
                col_idx += 1

    merges = []
    merge_el = root.find(f"{{{NS}}}mergeCells")
    if merge_el is not None:
        for m in merge_el.findall(f"{{{NS}}}mergeCell"):
            merges.append(parse_range(m.get("ref", "")))
    return {"name": name, "cells": cells, "merges": merges}


def _read_cell(c_el, shared, date_styles, fills, fonts, date1904, shared_formulas):
    ctype = c_el.get("t", "n")
    s_attr = c_el.get("s")
    style = int(s_attr) if s_attr is not None else None

    formula = None
    f_el = c_el.find(f"{{{NS}}}f")
    if f_el is not None:
        formula = f_el.text or ""
        si = f_el.get("si")
        if si is not None:
            if f_el.text:
                shared_formulas[si] = f_el.text
            else:
                formula = shared_formulas.get(si, "")

    v_el = c_el.find(f"{{{NS}}}v")
    raw = v_el.text if v_el is not None else None

    value = None
    if ctype == "s" and raw is not None:
        value = shared[int(raw)]
    elif ctype == "str":
        value = raw or ""
    elif ctype == "inlineStr":
        is_el = c_el.find(f"{{{NS}}}is")
        value = "".join(t.text or "" for t in is_el.iter(f"{{{NS}}}t")) \
            if is_el is not None else None
    elif ctype == "b" and raw is not None:
        value = raw in ("1", "true")
    elif ctype == "e":
        value = raw or "#N/A"  # error literals stay as their codes
    elif raw is not None:
        number = _number(raw)
        if style is not None and style in date_styles:
            value = _serial_to_iso(float(number), date1904)
        else:
            value = number

    return {
        "value": value,
        "formula": formula,
        "fill": fills[style] if style is not None and style < len(fills) else None,
        "font": fonts[style] if style is not None and style < len(fonts) else None,
    }


# --- writing (values, formulas, merges; styling dropped) ----------------------

_DECL = '<?xml version="1.0" encoding="UTF-8" standalone="yes"?>\n'


def save(wb: Workbook, path: str) -> None:
    shared: list[str] = []
    index: dict[str, int] = {}

    def sst(text: str) -> int:
        if text not in index:
            index[text] = len(shared)
            shared.append(text)
        return index[text]

    sheet_parts = []
    for sheet in wb.sheets:
        rows: dict[int, list] = {}
        for (r, c), cell in sheet["cells"].items():
            rows.setdefault(r, []).append((c, cell))
        body = ["<sheetData>"]
        for r in sorted(rows):
            body.append(f'<row r="{r + 1}">')
            for c, cell in sorted(rows[r]):
                body.append(_cell_xml(r, c, cell, sst))
            body.append("</row>")
        body.append("</sheetData>")
        if sheet["merges"]:
            body.append(f'<mergeCells count="{len(sheet["merges"])}">')
            for top, bottom in sheet["merges"]:
                body.append(f'<mergeCell ref="{rc_to_a1(*top)}:{rc_to_a1(*bottom)}"/>')
            body.append("</mergeCells>")
        sheet_parts.append(
            _DECL + f'<worksheet xmlns="{NS}">' + "".join(body) + "</worksheet>")

    n = len(wb.sheets)
    overrides = "".join(
        f'<Override PartName="/xl/worksheets/sheet{i}.xml" ContentType='
        '"application/vnd.openxmlformats-officedocument.spreadsheetml.worksheet+xml"/>'
        for i in range(1, n + 1))
    parts = {
        "[Content_Types].xml": _DECL + (
            '<Types xmlns="http://schemas.openxmlformats.org/package/2006/content-types">'
            '<Default Extension="rels" ContentType="application/vnd.openxmlformats-package.relationships+xml"/>'
            '<Default Extension="xml" ContentType="application/xml"/>'
            '<Override PartName="/xl/workbook.xml" ContentType="application/vnd.openxmlformats-officedocument.spreadsheetml.sheet.main+xml"/>'
            + overrides +
            '<Override PartName="/xl/sharedStrings.xml" ContentType="application/vnd.openxmlformats-officedocument.spreadsheetml.sharedStrings+xml"/>'
            "</Types>"),
        "_rels/.rels": _DECL + (
            f'<Relationships xmlns="{NS_PKG}">'
            '<Relationship Id="rId1" Type="http://schemas.openxmlformats.org/officeDocument/2006/relationships/officeDocument" Target="xl/workbook.xml"/>'
            "</Relationships>"),
        "xl/workbook.xml": _DECL + (
            f'<workbook xmlns="{NS}" xmlns:r="{NS_R}"><sheets>' + "".join(
                f"<sheet name={quoteattr(s['name'])} sheetId=\"{i}\" r:id=\"rId{i}\"/>"
                for i, s in enumerate(wb.sheets, start=1)) + "</sheets></workbook>"),
        "xl/_rels/workbook.xml.rels": _DECL + (
            f'<Relationships xmlns="{NS_PKG}">' + "".join(
                f'<Relationship Id="rId{i}" Type="http://schemas.openxmlformats.org/officeDocument/2006/relationships/worksheet" Target="worksheets/sheet{i}.xml"/>'
                for i in range(1, n + 1)) +
            f'<Relationship Id="rId{n + 1}" Type="http://schemas.openxmlformats.org/officeDocument/2006/relationships/sharedStrings" Target="sharedStrings.xml"/>'
            "</Relationships>"),
    }
    for i, xml in enumerate(sheet_parts, start=1):
        parts[f"xl/worksheets/sheet{i}.xml"] = xml
    items = []
    for s in shared:
        preserve = ' xml:space="preserve"' if s != s.strip() or "\n" in s else ""
        items.append(f"<si><t{preserve}>{escape(s)}</t></si>")
    parts["xl/sharedStrings.xml"] = _DECL + (
        f'<sst xmlns="{NS}" count="{len(shared)}" uniqueCount="{len(shared)}">'
        + "".join(items) + "</sst>")

    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        for part_name, content in parts.items():
            zf.writestr(part_name, content)


ERROR_LITERALS = frozenset({"#NULL!", "#DIV/0!", "#VALUE!", "#REF!", "#NAME?",
                            "#NUM!", "#N/A", "#GETTING_DATA", "#SPILL!", "#CALC!"})


def _cell_xml(r, c, cell, sst):
    ref = rc_to_a1(r, c)
    value = cell.get("value")
    formula = cell.get("formula")
    attrs = f'r="{ref}"'
    body = ""
    if isinstance(value, bool):
        attrs += ' t="b"'
        body = f"<v>{1 if value else 0}</v>"
    elif isinstance(value, (int, float)):
        body = f"<v>{escape(repr(value) if isinstance(value, float) else str(value))}</v>"
    elif isinstance(value, str):
        if value in ERROR_LITERALS:
            attrs += ' t="e"'
            body = f"<v>{escape(value)}</v>"
        elif formula:
            attrs += ' t="str"'
            body = f"<v>{escape(value)}</v>"
        else:
            attrs += ' t="s"'
            body = f"<v>{sst(value)}</v>"
    if formula:
        body = f"<f>{escape(formula)}</f>" + body
    if not body:
        return f"<c {attrs}/>"
    return f"<c {attrs}>{body}</c>"
