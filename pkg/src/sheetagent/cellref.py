"""A1-style cell and range references.

Columns use bijective base-26 letters (A=0, Z=25, AA=26, ...); rows are
1-based in text and 0-based in ``CellRef``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import MalformedReferenceError

_CELL_RE = re.compile(r"^([A-Za-z]+)([0-9]+)$")

# Office Open XML sheet limits.
MAX_ROWS = 1_048_576
MAX_COLS = 16_384


def col_to_letters(col: int) -> str:
    """0-based column index -> letters ('A', 'Z', 'AA', ...)."""
    if col < 0:
        raise MalformedReferenceError(f"negative column index {col}")
    letters = ""
    n = col + 1
    while n > 0:
        n, rem = divmod(n - 1, 26)
        letters = chr(ord("A") + rem) + letters
    return letters


def letters_to_col(letters: str) -> int:
    """Column letters -> 0-based index (bijective base-26 decode)."""
    n = 0
    for ch in letters.upper():
        if not "A" <= ch <= "Z":
            raise MalformedReferenceError(f"bad column letters {letters!r}")
        n = n * 26 + (ord(ch) - ord("A") + 1)
    return n - 1


@dataclass(frozen=True, order=True)
class CellRef:
    """Zero-based (row, column) cell coordinate."""

    row: int
    col: int

    def __post_init__(self):
        if self.row < 0 or self.col < 0:
            raise MalformedReferenceError(f"negative coordinate ({self.row}, {self.col})")

    def to_a1(self) -> str:
        return f"{col_to_letters(self.col)}{self.row + 1}"

    def offset(self, rows: int = 0, cols: int = 0) -> "CellRef":
        return CellRef(self.row + rows, self.col + cols)

    def __str__(self) -> str:
        return self.to_a1()


def parse_cell_ref(text: str) -> CellRef:
    """Parse an A1 reference ('K2' -> row 1, col 10). Case-insensitive."""
    m = _CELL_RE.match(text.strip()) if isinstance(text, str) else None
    if not m:
        raise MalformedReferenceError(f"not an A1 cell reference: {text!r}")
    letters, digits = m.groups()
    row = int(digits)
    if row < 1:
        raise MalformedReferenceError(f"row numbers start at 1: {text!r}")
    return CellRef(row - 1, letters_to_col(letters))


@dataclass(frozen=True)
class RangeRef:
    """Inclusive rectangular range, normalized so start <= end on both axes."""

    start: CellRef
    end: CellRef

    def __post_init__(self):
        if self.start.row > self.end.row or self.start.col > self.end.col:
            # Normalize rather than reject: parse_range_ref promises start <= end.
            sr, er = sorted((self.start.row, self.end.row))
            sc, ec = sorted((self.start.col, self.end.col))
            object.__setattr__(self, "start", CellRef(sr, sc))
            object.__setattr__(self, "end", CellRef(er, ec))

    @property
    def width(self) -> int:
        return self.end.col - self.start.col + 1

    @property
    def height(self) -> int:
        return self.end.row - self.start.row + 1

    def contains(self, ref: CellRef) -> bool:
        return (self.start.row <= ref.row <= self.end.row
                and self.start.col <= ref.col <= self.end.col)

    def intersects(self, other: "RangeRef") -> bool:
        return not (other.end.row < self.start.row or other.start.row > self.end.row
                    or other.end.col < self.start.col or other.start.col > self.end.col)

    def rows(self) -> range:
        return range(self.start.row, self.end.row + 1)

    def cols(self) -> range:
        return range(self.start.col, self.end.col + 1)

    def cells(self):
        for r in self.rows():
            for c in self.cols():
                yield CellRef(r, c)

    def to_a1(self) -> str:
        if self.start == self.end:
            return self.start.to_a1()
        return f"{self.start.to_a1()}:{self.end.to_a1()}"

    def __str__(self) -> str:
        return self.to_a1()


def parse_range_ref(text: str) -> RangeRef:
    """Parse 'A1:N20' or a bare 'B6' (degenerate 1x1 range)."""
    if not isinstance(text, str) or not text.strip():
        raise MalformedReferenceError(f"not a range reference: {text!r}")
    parts = text.strip().split(":")
    if len(parts) == 1:
        ref = parse_cell_ref(parts[0])
        return RangeRef(ref, ref)
    if len(parts) == 2:
        return RangeRef(parse_cell_ref(parts[0]), parse_cell_ref(parts[1]))
    raise MalformedReferenceError(f"not a range reference: {text!r}")
