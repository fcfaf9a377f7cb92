import random

import pytest

from support import make_random_table
from tabgls.errors import GridRangeError, StructureError
from tabgls.grid import Cell, GridIndex, Table, grid_table


def test_dims_reads_back_stored_dimensions():
    table = grid_table([["a", "b"], ["c", "d"]])
    assert table.dims == (2, 2)


def test_dims_with_full_width_span_row():
    # One cell spanning all 4 columns of row 1, plus two body rows.
    cells = [Cell(1, 1, content="title", col_span=4)]
    for r in (2, 3):
        for c in range(1, 5):
            cells.append(Cell(r, c, content=f"{r}{c}"))
    table = Table(n_rows=3, n_cols=4, cells=tuple(cells))
    assert table.dims == (3, 4)


def test_dims_single_cell():
    assert grid_table([["x"]]).dims == (1, 1)


def test_cell_at_anchor_lookup():
    table = grid_table([["a", "b"], ["c", "d"]])
    assert table.cell_at(GridIndex(1, 1)).content == "a"
    assert table.cell_at((2, 2)).content == "d"


def test_cell_at_returns_spanning_cell_for_covered_coordinates():
    cells = [Cell(1, 1, content="wide", col_span=4)]
    cells += [Cell(2, c, content=str(c)) for c in range(1, 5)]
    table = Table(n_rows=2, n_cols=4, cells=tuple(cells))
    spanning = table.cell_at((1, 3))
    assert spanning.content == "wide"
    assert spanning.anchor == (1, 1)


def test_cell_at_out_of_range_names_coordinate_and_dims():
    table = grid_table([["a", "b"], ["c", "d"]])
    with pytest.raises(GridRangeError) as err:
        table.cell_at((3, 1))
    assert "(3, 1)" in str(err.value)
    assert "2 rows" in str(err.value) and "2 columns" in str(err.value)


def test_coverage_grid_row_major_ordinals():
    table = grid_table([["a", "b"], ["c", "d"]])
    assert table.coverage_grid() == [[0, 1], [2, 3]]


def test_coverage_grid_with_column_span():
    cells = (Cell(1, 1, content="h", col_span=2), Cell(2, 1, content="a"), Cell(2, 2, content="b"))
    table = Table(n_rows=2, n_cols=2, cells=cells)
    assert table.coverage_grid() == [[0, 0], [1, 2]]


def test_overlapping_cells_rejected():
    cells = (Cell(1, 1, content="x", col_span=2), Cell(1, 2, content="y"), Cell(2, 1), Cell(2, 2))
    with pytest.raises(StructureError, match="overlap"):
        Table(n_rows=2, n_cols=2, cells=cells)


def test_gap_rejected_with_first_missing_coordinate():
    with pytest.raises(StructureError, match=r"\(2, 2\)"):
        Table(n_rows=2, n_cols=2, cells=(Cell(1, 1), Cell(1, 2), Cell(2, 1)))


def test_span_past_table_edge_rejected():
    with pytest.raises(StructureError, match="spans past"):
        Table(n_rows=2, n_cols=2, cells=(Cell(1, 1, row_span=3), Cell(1, 2), Cell(2, 2)))


def test_cells_normalized_to_row_major_order():
    cells = (Cell(2, 2, content="d"), Cell(1, 1, content="a"), Cell(2, 1, content="c"),
             Cell(1, 2, content="b"))
    table = Table(n_rows=2, n_cols=2, cells=cells)
    assert [c.content for c in table.cells] == ["a", "b", "c", "d"]


def test_bad_spans_rejected_at_cell_level():
    with pytest.raises(StructureError):
        Cell(1, 1, row_span=0)
    with pytest.raises(StructureError):
        Cell(0, 1)


def test_cell_at_agrees_with_coverage_grid_exhaustively():
    rng = random.Random(404)
    for _ in range(25):
        table = make_random_table(rng, max_rows=6, max_cols=6)
        grid = table.coverage_grid()
        for r in range(1, table.n_rows + 1):
            for c in range(1, table.n_cols + 1):
                assert table.cell_at((r, c)) is table.cells[grid[r - 1][c - 1]]


def test_dims_consistent_with_max_span_extent():
    rng = random.Random(405)
    for _ in range(25):
        table = make_random_table(rng, max_rows=6, max_cols=6)
        assert table.n_rows == max(c.anchor_row + c.row_span - 1 for c in table.cells)
        assert table.n_cols == max(c.anchor_col + c.col_span - 1 for c in table.cells)


def test_every_random_table_tiles():
    rng = random.Random(406)
    for _ in range(50):
        table = make_random_table(rng)
        seen = sorted(ordinal for row in table.coverage_grid() for ordinal in row)
        assert set(seen) == set(range(len(table.cells)))
