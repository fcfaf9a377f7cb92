"""Span-aware grid model of a table.

A table is a dense ``n_rows x n_cols`` grid tiled exactly by rectangular
cells; merged cells cover more than one coordinate. Coordinates are 1-based
everywhere (row 1, column 1 is the top-left corner) and header rows count
toward the row total.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from .errors import GridRangeError, StructureError

FORMATS = ("html", "markdown", "latex", "canonical-json")


class GridIndex(NamedTuple):
    """1-based (row, col) coordinate into a table grid."""

    row: int
    col: int


@dataclass(frozen=True)
class Cell:
    """One rectangular cell anchored at its top-left coordinate.

    ``row_span``/``col_span`` give the rectangle extent; a plain cell has
    span 1 in both directions. Content is plain text (entities/escapes
    already resolved by the codecs) and may be empty.
    """

    anchor_row: int
    anchor_col: int
    content: str = ""
    row_span: int = 1
    col_span: int = 1
    is_header: bool = False

    def __post_init__(self) -> None:
        if self.anchor_row < 1 or self.anchor_col < 1:
            raise StructureError(
                f"cell anchor must be 1-based, got ({self.anchor_row}, {self.anchor_col})"
            )
        if self.row_span < 1 or self.col_span < 1:
            raise StructureError(
                f"cell at ({self.anchor_row}, {self.anchor_col}) has span "
                f"{self.row_span}x{self.col_span}; spans must be >= 1"
            )

    @property
    def anchor(self) -> GridIndex:
        return GridIndex(self.anchor_row, self.anchor_col)

    def covers(self, idx: GridIndex) -> bool:
        return (
            self.anchor_row <= idx.row < self.anchor_row + self.row_span
            and self.anchor_col <= idx.col < self.anchor_col + self.col_span
        )


@dataclass(frozen=True)
class Table:
    """Immutable span-aware table.

    Construction validates the tiling invariant: the cells' rectangles must
    cover every grid coordinate exactly once. Empty positions must therefore
    be explicit empty-content cells. Cells are normalized to row-major anchor
    order. ``caption`` and ``source_format`` are provenance and do not take
    part in equality.
    """

    n_rows: int
    n_cols: int
    cells: tuple[Cell, ...]
    caption: str | None = field(default=None, compare=False)
    source_format: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.n_rows < 1 or self.n_cols < 1:
            raise StructureError(f"table dimensions must be >= 1, got {self.n_rows}x{self.n_cols}")
        if self.source_format is not None and self.source_format not in FORMATS:
            raise StructureError(f"unknown source format {self.source_format!r}")
        ordered = tuple(sorted(self.cells, key=lambda c: (c.anchor_row, c.anchor_col)))
        object.__setattr__(self, "cells", ordered)
        object.__setattr__(self, "_grid", self._tile())

    def _tile(self) -> tuple[tuple[int, ...], ...]:
        """Materialize the coverage grid, rejecting overlaps and gaps."""
        grid = [[-1] * self.n_cols for _ in range(self.n_rows)]
        for ordinal, cell in enumerate(self.cells):
            if cell.anchor_row + cell.row_span - 1 > self.n_rows:
                raise StructureError(
                    f"cell at ({cell.anchor_row}, {cell.anchor_col}) spans past "
                    f"row {self.n_rows}"
                )
            if cell.anchor_col + cell.col_span - 1 > self.n_cols:
                raise StructureError(
                    f"cell at ({cell.anchor_row}, {cell.anchor_col}) spans past "
                    f"column {self.n_cols}"
                )
            for r in range(cell.anchor_row - 1, cell.anchor_row - 1 + cell.row_span):
                for c in range(cell.anchor_col - 1, cell.anchor_col - 1 + cell.col_span):
                    if grid[r][c] != -1:
                        raise StructureError(
                            f"cells {grid[r][c]} and {ordinal} overlap at ({r + 1}, {c + 1})"
                        )
                    grid[r][c] = ordinal
        for r in range(self.n_rows):
            for c in range(self.n_cols):
                if grid[r][c] == -1:
                    raise StructureError(f"no cell covers ({r + 1}, {c + 1})")
        return tuple(tuple(row) for row in grid)

    @property
    def dims(self) -> tuple[int, int]:
        """(n_rows, n_cols), header rows included."""
        return (self.n_rows, self.n_cols)

    def cell_at(self, idx: GridIndex | tuple[int, int]) -> Cell:
        """Return the cell whose span region covers ``idx``.

        A merged cell is returned for every coordinate it covers.
        """
        idx = GridIndex(*idx)
        if not (1 <= idx.row <= self.n_rows and 1 <= idx.col <= self.n_cols):
            raise GridRangeError(
                f"index ({idx.row}, {idx.col}) outside table of "
                f"{self.n_rows} rows x {self.n_cols} columns"
            )
        return self.cells[self._grid[idx.row - 1][idx.col - 1]]

    def coverage_grid(self) -> list[list[int]]:
        """n_rows x n_cols matrix of covering-cell ordinals (row-major)."""
        return [list(row) for row in self._grid]

    @property
    def is_span_free(self) -> bool:
        return all(c.row_span == 1 and c.col_span == 1 for c in self.cells)

    def header_row_count(self) -> int:
        """Number of leading rows whose anchored cells are all headers."""
        count = 0
        for r in range(1, self.n_rows + 1):
            anchored = [c for c in self.cells if c.anchor_row == r]
            if anchored and all(c.is_header for c in anchored):
                count += 1
            else:
                break
        return count


def grid_table(rows: list[list[str]], header_rows: int = 0, **kwargs) -> Table:
    """Build a span-free table from a rectangular list of content rows."""
    if not rows or not rows[0]:
        raise StructureError("grid_table needs at least one row and one column")
    n_cols = len(rows[0])
    cells = []
    for r, row in enumerate(rows, start=1):
        if len(row) != n_cols:
            raise StructureError(f"row {r} has {len(row)} cells, expected {n_cols}")
        for c, content in enumerate(row, start=1):
            cells.append(Cell(r, c, content=content, is_header=r <= header_rows))
    return Table(n_rows=len(rows), n_cols=n_cols, cells=tuple(cells), **kwargs)
