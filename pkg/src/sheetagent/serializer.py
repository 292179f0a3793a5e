"""Sheet-to-text encodings, token estimation, and budgeted previews.

Six encoding variants (markdown/HTML families, with and without cell
positions, colspan collapsing, row tags). Rendering rules that all variants
share:

- Each row covers the contiguous span from its first to its last populated
  cell inside the requested region (merge members count as populated), so
  unpopulated edges are trimmed while interior and trailing empty cells that
  exist in the file are rendered.
- Markdown variants right-pad the first rendered cell of every row to the
  widest first cell in the block, which keeps row labels aligned.
- HTML variants right-strip composed cell text (markup ignores trailing
  whitespace); markdown keeps it, so whitespace-only cells stay visible.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .cellref import CellRef, RangeRef
from .errors import RegionOutOfBoundsError
from .workbook import Sheet, Workbook, render_value

DEFAULT_PREVIEW_BUDGET = 10_000
PER_SHEET_FLOOR = 256
TRUNCATION_MARKER = "... [truncated: showing rows 1-{shown} of {total}]"


class EncodingVariant(enum.Enum):
    MARKDOWN_PLAIN = "markdown-plain"
    MARKDOWN_CELLPOS = "markdown-cellpos"
    HTML_PLAIN = "html-plain"
    HTML_MDLIKE_CELLPOS = "html-mdlike-cellpos"
    HTML_COLSPAN_CELLPOS = "html-colspan-cellpos"
    HTML_COLSPAN_ROWTAG = "html-colspan-rowtag"

    @classmethod
    def from_name(cls, name: str) -> "EncodingVariant":
        for variant in cls:
            if variant.value == name:
                return variant
        raise ValueError(f"unknown encoding variant {name!r}; "
                         f"choose from {[v.value for v in cls]}")

    @property
    def is_markdown(self) -> bool:
        return self in (EncodingVariant.MARKDOWN_PLAIN, EncodingVariant.MARKDOWN_CELLPOS)


DEFAULT_VARIANT = EncodingVariant.MARKDOWN_CELLPOS


def estimate_tokens(text: str) -> int:
    """Character-based token estimate: floor(len/4)."""
    return len(text) // 4


def _cellpos_text(ref: CellRef, rendered: str) -> str:
    # Whitespace-only values attach without the separator space so the cell
    # keeps exactly the stored width.
    if rendered == "":
        return f"{ref.to_a1()}:"
    if rendered.strip() == "":
        return f"{ref.to_a1()}:{rendered}"
    return f"{ref.to_a1()}: {rendered}"


@dataclass
class _RowCells:
    """One row's rendered cells: (text, colspan, rowspan) per emitted cell."""

    row: int
    cells: list[tuple[str, int, int]] = field(default_factory=list)


def _merge_maps(sheet: Sheet, region: RangeRef):
    anchors: dict[CellRef, RangeRef] = {}
    member_of: dict[CellRef, RangeRef] = {}
    for merge in sheet.merged:
        if not merge.region.intersects(region):
            continue
        anchors[merge.anchor] = merge.region
        for ref in merge.region.cells():
            if region.contains(ref):
                member_of[ref] = merge.region
    return anchors, member_of


def _encode_rows(sheet: Sheet, variant: EncodingVariant, region: RangeRef) -> list[_RowCells]:
    anchors, member_of = _merge_maps(sheet, region)
    collapse = variant in (EncodingVariant.HTML_COLSPAN_CELLPOS,
                           EncodingVariant.HTML_COLSPAN_ROWTAG)
    with_pos = variant in (EncodingVariant.MARKDOWN_CELLPOS,
                           EncodingVariant.HTML_MDLIKE_CELLPOS,
                           EncodingVariant.HTML_COLSPAN_CELLPOS)

    rows: list[_RowCells] = []
    for r in region.rows():
        populated = [c for c in region.cols()
                     if CellRef(r, c) in sheet.cells or CellRef(r, c) in member_of]
        row_cells = _RowCells(row=r)
        if populated:
            c = populated[0]
            last = populated[-1]
            while c <= last:
                ref = CellRef(r, c)
                merge = member_of.get(ref)
                rendered = render_value(sheet.cell(ref).value)
                if merge is not None and collapse:
                    if ref == merge.start:
                        text = _cellpos_text(ref, rendered) if with_pos else rendered
                        row_cells.cells.append((text, merge.width, merge.height))
                        c = min(merge.end.col, region.end.col) + 1
                        continue
                    # Continuation of a colspan/rowspan cell: skipped entirely.
                    c += 1
                    continue
                if merge is not None:
                    if ref == merge.start:
                        tag = f"[MERGED {merge.height}x{merge.width}]"
                        if with_pos:
                            text = f"{_cellpos_text(ref, rendered)} {tag}" \
                                if rendered else f"{ref.to_a1()}: {tag}"
                        else:
                            text = rendered
                    else:
                        text = f"{ref.to_a1()}: ~" if with_pos else ""
                else:
                    text = _cellpos_text(ref, rendered) if with_pos else rendered
                row_cells.cells.append((text, 1, 1))
                c += 1
        rows.append(row_cells)
    return rows


def _markdown_lines(rows: list[_RowCells]) -> list[str]:
    pad = 0
    for row in rows:
        if row.cells:
            pad = max(pad, len(row.cells[0][0]))
    lines = []
    for row in rows:
        cells = [text for text, _, _ in row.cells] or [""]
        cells[0] = cells[0].ljust(pad)
        lines.append("| " + " | ".join(cells) + " |")
    return lines


def _html_lines(rows: list[_RowCells], variant: EncodingVariant) -> list[str]:
    rowtag = variant is EncodingVariant.HTML_COLSPAN_ROWTAG
    lines = []
    for row in rows:
        lines.append(f"<tr rownum={row.row + 1}>" if rowtag else "<tr>")
        for text, colspan, rowspan in row.cells:
            attrs = ""
            if colspan > 1:
                attrs += f' colspan="{colspan}"'
            if rowspan > 1:
                attrs += f' rowspan="{rowspan}"'
            lines.append(f"  <td{attrs}>{text.rstrip()}</td>")
        lines.append("</tr>")
    return lines


def _render_lines(sheet: Sheet, variant: EncodingVariant, region: RangeRef) -> list[list[str]]:
    """Lines grouped per row (markdown: one line; HTML: tr/td/.../tr)."""
    rows = _encode_rows(sheet, variant, region)
    if variant.is_markdown:
        return [[line] for line in _markdown_lines(rows)]
    lines = _html_lines(rows, variant)
    groups: list[list[str]] = []
    current: list[str] = []
    for line in lines:
        current.append(line)
        if line == "</tr>":
            groups.append(current)
            current = []
    return groups


def encode(sheet: Sheet, variant: EncodingVariant, region: RangeRef | None = None) -> str:
    """Encode a region of a sheet as text in the given variant."""
    bounds = sheet.used_range()
    if region is None:
        region = bounds
    elif not (bounds.contains(region.start) and bounds.contains(region.end)):
        raise RegionOutOfBoundsError(
            f"region {region} outside populated area {bounds} of sheet {sheet.name!r}")
    return "\n".join(line for group in _render_lines(sheet, variant, region)
                     for line in group)


def encode_in(wb: Workbook, sheet_name: str, variant: EncodingVariant,
              region: RangeRef | None = None) -> str:
    return encode(wb.sheet(sheet_name), variant, region)


# ---------------------------------------------------------------------------
# Token budgets and previews
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TokenBudget:
    total: int
    per_sheet: dict[str, int]


def _sheet_header(sheet: Sheet) -> str:
    bounds = sheet.used_range()
    return f"## Sheet: {sheet.name} ({bounds.height} rows x {bounds.width} cols)"


def waterfill_allocation(needs: dict[str, int], total: int,
                         floor: int = PER_SHEET_FLOOR) -> dict[str, int]:
    """Clamp-then-redistribute split of a total over per-sheet needs.

    Sheets whose need fits their fair share get exactly their need; the
    freed-up remainder is redistributed across the rest until stable. When
    the total permits, every sheet receives at least `floor`. Deterministic
    in dict order.
    """
    if not needs:
        return {}
    if sum(needs.values()) <= total:
        return dict(needs)

    n = len(needs)
    alloc = dict.fromkeys(needs, 0)
    remaining = total
    if floor > 0 and total >= floor * n:
        for name in alloc:
            alloc[name] = floor
        remaining -= floor * n
    residual = {name: max(needs[name] - alloc[name], 0) for name in alloc}

    active = [name for name in alloc if residual[name] > 0]
    while active and remaining > 0:
        fair = remaining // len(active)
        capped = [name for name in active if residual[name] <= fair]
        if not capped:
            # Equal split of what's left, remainder to earlier sheets.
            base, extra = divmod(remaining, len(active))
            for i, name in enumerate(active):
                alloc[name] += base + (1 if i < extra else 0)
            remaining = 0
            break
        for name in capped:
            alloc[name] += residual[name]
            remaining -= residual[name]
            residual[name] = 0
        active = [name for name in active if residual[name] > 0]
    return alloc


def allocate_budget(wb: Workbook, total: int,
                    variant: EncodingVariant = DEFAULT_VARIANT,
                    floor: int = PER_SHEET_FLOOR) -> TokenBudget:
    """Split a total token budget across sheets, proportional to each
    sheet's full-encoding size, with small sheets clamped to their need."""
    if total <= 0:
        raise ValueError("token budget must be positive")
    needs = {}
    for sheet in wb.sheets:
        text = _sheet_header(sheet) + "\n" + encode(sheet, variant)
        needs[sheet.name] = estimate_tokens(text) + 1
    alloc = waterfill_allocation(needs, total, floor=floor)
    assert sum(alloc.values()) <= total
    return TokenBudget(total=total, per_sheet=alloc)


@dataclass
class PreviewSection:
    sheet_name: str
    text: str  # header + encoded rows (+ truncation marker when cut)
    rows_included: int
    truncated: bool


@dataclass
class SerializedPreview:
    sections: list[PreviewSection]
    variant: EncodingVariant
    budget: TokenBudget

    def render(self) -> str:
        return "\n\n".join(s.text for s in self.sections if s.text)

    @property
    def total_estimated_tokens(self) -> int:
        return estimate_tokens(self.render())


def _fit_section(header: str, row_groups: list[list[str]], char_budget: int) -> tuple[str, int, bool]:
    """Largest prefix of rows that fits char_budget, with marker when cut."""
    total_rows = len(row_groups)
    full = "\n".join([header] + [ln for grp in row_groups for ln in grp])
    if len(full) <= char_budget:
        return full, total_rows, False

    lines = [header]
    length = len(header)
    shown = 0
    for group in row_groups:
        group_len = sum(len(ln) + 1 for ln in group)  # +1 per joining newline
        marker = TRUNCATION_MARKER.format(shown=shown + 1, total=total_rows)
        if length + group_len + 1 + len(marker) > char_budget:
            break
        lines.extend(group)
        length += group_len
        shown += 1
    marker = TRUNCATION_MARKER.format(shown=shown, total=total_rows)
    candidate = "\n".join(lines + [marker])
    while shown and len(candidate) > char_budget:
        # Marker width can grow with the row count; back off if needed.
        drop = row_groups[shown - 1]
        lines = lines[: len(lines) - len(drop)]
        shown -= 1
        marker = TRUNCATION_MARKER.format(shown=shown, total=total_rows)
        candidate = "\n".join(lines + [marker])
    if len(candidate) <= char_budget:
        return candidate, shown, True
    if len(header) <= char_budget:
        return header, 0, True
    return "", 0, True


def build_preview(wb: Workbook, budget: int | TokenBudget = DEFAULT_PREVIEW_BUDGET,
                  variant: EncodingVariant = DEFAULT_VARIANT) -> SerializedPreview:
    """Encode every sheet top-down within the token budget.

    Truncation is row-granular and each truncated section ends with an
    explicit marker line. The rendered preview's token estimate never
    exceeds the total budget.
    """
    if isinstance(budget, int):
        budget = allocate_budget(wb, budget, variant=variant)

    sections = []
    global_chars_left = budget.total * 4
    for sheet in wb.sheets:
        per_sheet_tokens = budget.per_sheet.get(sheet.name, 0)
        char_budget = min(per_sheet_tokens * 4, global_chars_left)
        header = _sheet_header(sheet)
        row_groups = _render_lines(sheet, variant, sheet.used_range())
        text, shown, truncated = _fit_section(header, row_groups, max(char_budget, 0))
        if text:
            # Charge the inter-section separator to the global ledger.
            global_chars_left -= len(text) + 2
        sections.append(PreviewSection(sheet_name=sheet.name, text=text,
                                       rows_included=shown, truncated=truncated))

    preview = SerializedPreview(sections=sections, variant=variant, budget=budget)
    assert preview.total_estimated_tokens <= budget.total
    return preview
