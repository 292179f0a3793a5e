"""Spreadsheet QA/manipulation agent toolkit.

Workbook model with full structural fidelity, six preview encodings under a
token budget, an Excel tool protocol, a sandboxed execution client, and an
understand-execute-validate pipeline with LLM-as-judge evaluation.
"""

__version__ = "0.1.0"

from .cellref import CellRef, RangeRef, parse_cell_ref, parse_range_ref
from .workbook import (
    Cell,
    CellError,
    FontInfo,
    MergedRegion,
    Sheet,
    Workbook,
    cell_at,
    load_workbook,
    render_value,
    save_workbook,
    set_cell,
    used_range,
)
from .serializer import (
    EncodingVariant,
    SerializedPreview,
    TokenBudget,
    allocate_budget,
    build_preview,
    encode,
    estimate_tokens,
)

__all__ = [
    "CellRef", "RangeRef", "parse_cell_ref", "parse_range_ref",
    "Cell", "CellError", "FontInfo", "MergedRegion", "Sheet", "Workbook",
    "cell_at", "load_workbook", "render_value", "save_workbook", "set_cell",
    "used_range",
    "EncodingVariant", "SerializedPreview", "TokenBudget",
    "allocate_budget", "build_preview", "encode", "estimate_tokens",
]
