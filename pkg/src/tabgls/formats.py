"""Parse/serialize tables in HTML, Markdown, LaTeX tabular, and canonical JSON.

All parsers normalize cell text the same way (trim, collapse internal
whitespace, decode entities/escapes) so content comparisons downstream are
representation-independent. ``anonymize`` rewrites a table text with every
cell content replaced by a placeholder while keeping every structural token.
"""

from __future__ import annotations

import html as _htmlmod
import json
import re
from dataclasses import dataclass
from html.parser import HTMLParser

from .errors import CapabilityError, ParseError, StructureError
from .grid import FORMATS, Cell, Table

DEFAULT_PLACEHOLDER = "[table content]"

_STRUCTURAL_CHARS = set("|<>&\\")


@dataclass(frozen=True)
class TableText:
    """A table serialized in one of the supported text formats."""

    format: str
    text: str

    def __post_init__(self) -> None:
        if self.format not in FORMATS:
            raise ValueError(f"unknown table format {self.format!r}; expected one of {FORMATS}")
        if not self.text:
            raise ValueError("table text must be non-empty")


@dataclass(frozen=True)
class PlaceholderToken:
    """Cell-content replacement token; must not collide with structural syntax."""

    token: str = DEFAULT_PLACEHOLDER

    def __post_init__(self) -> None:
        bad = _STRUCTURAL_CHARS.intersection(self.token)
        if bad:
            raise ValueError(
                f"placeholder {self.token!r} contains structural characters {sorted(bad)}"
            )
        if not self.token:
            raise ValueError("placeholder token must be non-empty")


def normalize_cell_text(text: str) -> str:
    """Trim and collapse internal whitespace runs to single spaces."""
    return " ".join(text.split())


def parse(source: TableText) -> Table:
    """Parse table text into a validated :class:`Table`."""
    if source.format == "html":
        return _parse_html(source.text)
    if source.format == "markdown":
        return _parse_markdown(source.text)
    if source.format == "latex":
        return _parse_latex(source.text)
    return _parse_canonical_json(source.text)


def serialize(table: Table, fmt: str) -> TableText:
    """Serialize a table; Markdown refuses span-bearing tables."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown table format {fmt!r}; expected one of {FORMATS}")
    if fmt == "html":
        text = _serialize_html(table)
    elif fmt == "markdown":
        text = _serialize_markdown(table)
    elif fmt == "latex":
        text = _serialize_latex(table)
    else:
        text = _serialize_canonical_json(table)
    return TableText(format=fmt, text=text)


def anonymize(source: TableText, placeholder: PlaceholderToken | None = None) -> TableText:
    """Replace every cell content with the placeholder, preserving structure.

    Implemented as parse -> replace contents -> serialize, so the output is
    guaranteed to re-parse with identical dims, spans, and header flags.
    """
    placeholder = placeholder or PlaceholderToken()
    table = parse(source)
    blanked = Table(
        n_rows=table.n_rows,
        n_cols=table.n_cols,
        cells=tuple(
            Cell(
                c.anchor_row,
                c.anchor_col,
                content=placeholder.token,
                row_span=c.row_span,
                col_span=c.col_span,
                is_header=c.is_header,
            )
            for c in table.cells
        ),
        caption=table.caption,
        source_format=table.source_format,
    )
    return serialize(blanked, source.format)


# ---------------------------------------------------------------------------
# Markdown
# ---------------------------------------------------------------------------

_MD_SEPARATOR_CELL = re.compile(r"^\s*:?-+:?\s*$")


def _split_md_row(line: str) -> list[str]:
    """Split a pipe row into raw cells, honouring backslash-escaped pipes."""
    stripped = line.strip()
    if stripped.startswith("|"):
        stripped = stripped[1:]
    if stripped.endswith("|") and not stripped.endswith("\\|"):
        stripped = stripped[:-1]
    cells: list[str] = []
    buf: list[str] = []
    escaped = False
    for ch in stripped:
        if escaped:
            buf.append(ch if ch == "|" else "\\" + ch)
            escaped = False
        elif ch == "\\":
            escaped = True
        elif ch == "|":
            cells.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    if escaped:
        buf.append("\\")
    cells.append("".join(buf))
    return cells


def _parse_markdown(text: str) -> Table:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 2:
        raise ParseError("markdown", "a table needs a header row and a separator row", line=1)
    if "|" not in lines[0]:
        raise ParseError("markdown", "header row has no '|' delimiter", line=1)
    header = _split_md_row(lines[0])
    sep = _split_md_row(lines[1])
    if not all(_MD_SEPARATOR_CELL.match(s) for s in sep):
        raise ParseError("markdown", "second line is not a separator row like |---|---|", line=2)
    if len(sep) != len(header):
        raise ParseError(
            "markdown",
            f"separator has {len(sep)} columns, header has {len(header)}",
            line=2,
        )
    rows = [header]
    for lineno, line in enumerate(lines[2:], start=3):
        if "|" not in line:
            raise ParseError("markdown", "body row has no '|' delimiter", line=lineno)
        row = _split_md_row(line)
        if len(row) != len(header):
            raise ParseError(
                "markdown",
                f"ragged row: {len(row)} cells, expected {len(header)}",
                line=lineno,
            )
        rows.append(row)
    cells = [
        Cell(r, c, content=normalize_cell_text(raw), is_header=(r == 1))
        for r, row in enumerate(rows, start=1)
        for c, raw in enumerate(row, start=1)
    ]
    return Table(
        n_rows=len(rows),
        n_cols=len(header),
        cells=tuple(cells),
        source_format="markdown",
    )


def _serialize_markdown(table: Table) -> str:
    for cell in table.cells:
        if cell.row_span != 1 or cell.col_span != 1:
            raise CapabilityError(
                f"markdown cannot express spans; cell at ({cell.anchor_row}, "
                f"{cell.anchor_col}) spans {cell.row_span}x{cell.col_span}"
            )
    # Markdown fixes the header to row 1; other header flags are not
    # representable and are dropped, like alignment markers on parse.
    grid = table.coverage_grid()
    lines = []
    for r in range(table.n_rows):
        row = [table.cells[grid[r][c]].content.replace("|", "\\|") for c in range(table.n_cols)]
        lines.append("| " + " | ".join(row) + " |")
        if r == 0:
            lines.append("|" + "|".join("---" for _ in range(table.n_cols)) + "|")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# HTML
# ---------------------------------------------------------------------------


class _HtmlTableReader(HTMLParser):
    """Collects rows of (content, rowspan, colspan, is_header) from the first table."""

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.rows: list[list[tuple[str, int, int, bool]]] = []
        self.caption: str | None = None
        self.done = False
        self._table_depth = 0
        self._in_thead = False
        self._in_caption = False
        self._caption_text: list[str] = []
        self._row: list[tuple[str, int, int, bool]] | None = None
        self._cell_text: list[str] | None = None
        self._cell_attrs: tuple[int, int, bool] | None = None

    def _span(self, attrs: dict[str, str | None], name: str) -> int:
        raw = attrs.get(name)
        if raw is None:
            return 1
        try:
            value = int(raw)
        except ValueError:
            raise ParseError("html", f"non-integer {name}={raw!r}", line=self.getpos()[0])
        if value < 1:
            raise ParseError("html", f"{name}={value} is not supported", line=self.getpos()[0])
        return value

    def handle_starttag(self, tag: str, attrs) -> None:
        tag = tag.lower()
        if self.done:
            return
        if tag == "table":
            if self._table_depth >= 1:
                raise ParseError("html", "nested tables are not supported", line=self.getpos()[0])
            self._table_depth += 1
            return
        if self._table_depth == 0:
            return
        attr_map = dict(attrs)
        if tag == "thead":
            self._in_thead = True
        elif tag == "caption":
            self._in_caption = True
        elif tag == "tr":
            self._flush_cell()
            self._flush_row()
            self._row = []
        elif tag in ("td", "th"):
            self._flush_cell()
            if self._row is None:
                self._row = []
            self._cell_text = []
            self._cell_attrs = (
                self._span(attr_map, "rowspan"),
                self._span(attr_map, "colspan"),
                tag == "th" or self._in_thead,
            )
        elif tag == "br" and self._cell_text is not None:
            self._cell_text.append(" ")

    def handle_endtag(self, tag: str) -> None:
        tag = tag.lower()
        if self.done or self._table_depth == 0:
            return
        if tag in ("td", "th"):
            self._flush_cell()
        elif tag == "tr":
            self._flush_cell()
            self._flush_row()
        elif tag == "thead":
            self._in_thead = False
        elif tag == "caption":
            self._in_caption = False
            self.caption = normalize_cell_text("".join(self._caption_text)) or None
        elif tag == "table":
            self._flush_cell()
            self._flush_row()
            self.done = True

    def handle_data(self, data: str) -> None:
        if self._in_caption:
            self._caption_text.append(data)
        elif self._cell_text is not None:
            self._cell_text.append(data)

    def _flush_cell(self) -> None:
        if self._cell_text is None:
            return
        rowspan, colspan, is_header = self._cell_attrs  # type: ignore[misc]
        self._row.append(  # type: ignore[union-attr]
            (normalize_cell_text("".join(self._cell_text)), rowspan, colspan, is_header)
        )
        self._cell_text = None
        self._cell_attrs = None

    def _flush_row(self) -> None:
        if self._row is not None:
            self.rows.append(self._row)
            self._row = None


def _parse_html(text: str) -> Table:
    reader = _HtmlTableReader()
    try:
        reader.feed(text)
        reader.close()
    except ParseError:
        raise
    except Exception as exc:  # html.parser raises odd things on bad markup
        raise ParseError("html", str(exc))
    if reader._table_depth == 0:
        raise ParseError("html", "no <table> element found")
    reader._flush_cell()
    reader._flush_row()
    rows = reader.rows
    if not rows or all(not r for r in rows):
        raise ParseError("html", "table has no cells")

    n_rows = len(rows)
    # First pass over HTML source rows: place cells left-to-right, flowing
    # around positions occupied by rowspans from earlier rows.
    occupied: dict[tuple[int, int], bool] = {}
    placed: list[Cell] = []
    n_cols = 0
    for r, source_row in enumerate(rows, start=1):
        col = 1
        for content, rowspan, colspan, is_header in source_row:
            while occupied.get((r, col)):
                col += 1
            rowspan = min(rowspan, n_rows - r + 1)  # clamp spans past the last row
            placed.append(
                Cell(r, col, content=content, row_span=rowspan, col_span=colspan, is_header=is_header)
            )
            for rr in range(r, r + rowspan):
                for cc in range(col, col + colspan):
                    occupied[(rr, cc)] = True
            col += colspan
        n_cols = max(n_cols, max((c for (rr, c) in occupied if rr == r), default=0))
    # Second pass: pad ragged rows with explicit empty cells so the grid tiles.
    for r in range(1, n_rows + 1):
        for c in range(1, n_cols + 1):
            if not occupied.get((r, c)):
                placed.append(Cell(r, c, content=""))
    try:
        return Table(
            n_rows=n_rows,
            n_cols=n_cols,
            cells=tuple(placed),
            caption=reader.caption,
            source_format="html",
        )
    except StructureError as exc:
        raise ParseError("html", str(exc))


def _serialize_html(table: Table) -> str:
    lines = ["<table>"]
    if table.caption:
        lines.append(f"<caption>{_htmlmod.escape(table.caption)}</caption>")
    by_row: dict[int, list[Cell]] = {}
    for cell in table.cells:
        by_row.setdefault(cell.anchor_row, []).append(cell)
    for r in range(1, table.n_rows + 1):
        parts = ["<tr>"]
        for cell in by_row.get(r, []):
            tag = "th" if cell.is_header else "td"
            attrs = ""
            if cell.row_span > 1:
                attrs += f' rowspan="{cell.row_span}"'
            if cell.col_span > 1:
                attrs += f' colspan="{cell.col_span}"'
            parts.append(f"<{tag}{attrs}>{_htmlmod.escape(cell.content)}</{tag}>")
        parts.append("</tr>")
        lines.append("".join(parts))
    lines.append("</table>")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# LaTeX tabular
# ---------------------------------------------------------------------------

_LATEX_ESCAPES = [
    ("\\textbackslash{}", "\\"),
    ("\\&", "&"),
    ("\\%", "%"),
    ("\\$", "$"),
    ("\\#", "#"),
    ("\\_", "_"),
    ("\\{", "{"),
    ("\\}", "}"),
]

_TABULAR_RE = re.compile(r"\\begin\{tabular\}", re.DOTALL)
_RULE_RE = re.compile(r"\\(?:hline|toprule|midrule|bottomrule)\b")
# Only \hline delimits the header block; booktabs rules are decorative.
_HLINE_RE = re.compile(r"\\hline\b")


def _latex_unescape(text: str) -> str:
    out = text
    for src, dst in _LATEX_ESCAPES:
        out = out.replace(src, dst)
    return out


def _latex_escape(text: str) -> str:
    out = text.replace("\\", "\\textbackslash{}")
    for src, dst in _LATEX_ESCAPES[1:]:
        out = out.replace(dst, src)
    return out


def _read_braced(text: str, start: int) -> tuple[str, int]:
    """Read a {...} group starting at ``start``; returns (body, index past '}')."""
    if start >= len(text) or text[start] != "{":
        raise ParseError("latex", f"expected '{{' at offset {start}", offset=start)
    depth = 0
    for i in range(start, len(text)):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            continue
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start + 1 : i], i + 1
    raise ParseError("latex", "unbalanced braces", offset=start)


def _count_latex_columns(colspec: str) -> int:
    count = 0
    i = 0
    while i < len(colspec):
        ch = colspec[i]
        if ch in "clr":
            count += 1
            i += 1
        elif ch in "pmb":
            count += 1
            _, i = _read_braced(colspec, i + 1)
        elif ch in "@!>":  # glue/decoration argument, not a column
            _, i = _read_braced(colspec, i + 1)
        elif ch == "*":
            raise ParseError("latex", "column spec repetition *{..}{..} is not supported")
        else:
            i += 1  # | and spaces
    return count


def _split_latex_cells(row: str) -> list[str]:
    cells: list[str] = []
    buf: list[str] = []
    depth = 0
    i = 0
    while i < len(row):
        ch = row[i]
        if ch == "\\" and i + 1 < len(row):
            buf.append(row[i : i + 2])
            i += 2
            continue
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
        if ch == "&" and depth == 0:
            cells.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
        i += 1
    cells.append("".join(buf))
    return cells


_SPAN_CMD_RE = re.compile(r"\\(multicolumn|multirow)\s*\{")


def _parse_latex_cell(raw: str) -> tuple[str, int, int]:
    """Resolve \\multicolumn/\\multirow nesting into (content, row_span, col_span)."""
    text = raw.strip()
    row_span = col_span = 1
    while True:
        m = _SPAN_CMD_RE.match(text)
        if not m:
            break
        count_body, i = _read_braced(text, m.end() - 1)
        try:
            count = int(count_body.strip())
        except ValueError:
            raise ParseError("latex", f"non-integer span count in \\{m.group(1)}")
        if count < 1:
            raise ParseError("latex", f"\\{m.group(1)} span count must be >= 1, got {count}")
        _, i = _read_braced(text, _skip_ws(text, i))  # alignment / width argument
        body, i = _read_braced(text, _skip_ws(text, i))
        if text[i:].strip():
            raise ParseError("latex", f"trailing text after \\{m.group(1)}: {text[i:].strip()!r}")
        if m.group(1) == "multicolumn":
            col_span *= count
        else:
            row_span *= count
        text = body.strip()
    if "\\multi" in text:
        raise ParseError("latex", f"unsupported span command in cell: {text!r}")
    return normalize_cell_text(_latex_unescape(text)), row_span, col_span


def _skip_ws(text: str, i: int) -> int:
    while i < len(text) and text[i].isspace():
        i += 1
    return i


def _strip_latex_comments(text: str) -> str:
    out_lines = []
    for line in text.splitlines():
        buf = []
        i = 0
        while i < len(line):
            ch = line[i]
            if ch == "\\" and i + 1 < len(line):
                buf.append(line[i : i + 2])
                i += 2
                continue
            if ch == "%":
                break
            buf.append(ch)
            i += 1
        out_lines.append("".join(buf))
    return "\n".join(out_lines)


def _parse_latex(text: str) -> Table:
    m = _TABULAR_RE.search(text)
    if not m:
        raise ParseError("latex", "no \\begin{tabular} environment found")
    colspec, body_start = _read_braced(text, _skip_ws(text, m.end()))
    end = text.find("\\end{tabular}", body_start)
    if end == -1:
        raise ParseError("latex", "missing \\end{tabular}")
    body = _strip_latex_comments(text[body_start:end])
    n_cols = _count_latex_columns(colspec)
    if n_cols == 0:
        raise ParseError("latex", f"column spec {colspec!r} declares no columns")

    # Split on \\ row terminators, tolerating a \\[len] spacing argument. The
    # bracket group must look like a length, or a row starting with literal
    # [...] text would be swallowed.
    raw_rows = re.split(
        r"\\\\(?:[ \t]*\[\s*-?(?:\d+\.?\d*|\.\d+)\s*(?:pt|mm|cm|in|ex|em|mu|sp|bp|dd|pc)\s*\])?",
        body,
    )
    rows: list[list[str]] = []
    header_boundary: int | None = None
    for pos, chunk in enumerate(raw_rows):
        if _HLINE_RE.search(chunk) and rows and header_boundary is None:
            header_boundary = len(rows)
        cleaned = _RULE_RE.sub("", chunk)
        # Only the tail after the final \\ may be dropped when blank; a blank
        # interior chunk is a genuine all-empty row.
        if not cleaned.strip() and pos == len(raw_rows) - 1:
            continue
        rows.append(_split_latex_cells(cleaned))
    if not rows:
        raise ParseError("latex", "tabular body has no rows")
    n_header_rows = header_boundary or 0

    n_rows = len(rows)
    occupied: dict[tuple[int, int], Cell] = {}
    placed: list[Cell] = []
    for r, source_cells in enumerate(rows, start=1):
        col = 1
        queue = list(source_cells)
        while queue:
            raw = queue.pop(0)
            content, row_span, col_span = _parse_latex_cell(raw)
            covering = occupied.get((r, col))
            if covering is not None and not content:
                # Continuation placeholder under a multirow: consume and skip.
                col += max(col_span, 1)
                continue
            while occupied.get((r, col)) is not None:
                col += 1
            if col > n_cols and not content:
                continue  # trailing empty cell beyond declared columns
            row_span = min(row_span, n_rows - r + 1)
            cell = Cell(
                r,
                col,
                content=content,
                row_span=row_span,
                col_span=col_span,
                is_header=r <= n_header_rows,
            )
            placed.append(cell)
            for rr in range(r, r + row_span):
                for cc in range(col, col + col_span):
                    occupied[(rr, cc)] = cell
            col += col_span
    n_cols = max(n_cols, max(c for (_, c) in occupied))
    for r in range(1, n_rows + 1):
        for c in range(1, n_cols + 1):
            if (r, c) not in occupied:
                placed.append(Cell(r, c, content="", is_header=r <= n_header_rows))
    try:
        return Table(n_rows=n_rows, n_cols=n_cols, cells=tuple(placed), source_format="latex")
    except StructureError as exc:
        raise ParseError("latex", str(exc))


def _serialize_latex(table: Table) -> str:
    n_header = table.header_row_count()
    grid = table.coverage_grid()
    lines = ["\\begin{tabular}{" + "c" * table.n_cols + "}"]
    for r in range(1, table.n_rows + 1):
        parts: list[str] = []
        c = 1
        while c <= table.n_cols:
            cell = table.cells[grid[r - 1][c - 1]]
            if cell.anchor_row == r and cell.anchor_col == c:
                body = _latex_escape(cell.content)
                if cell.row_span > 1:
                    body = f"\\multirow{{{cell.row_span}}}{{*}}{{{body}}}"
                if cell.col_span > 1:
                    body = f"\\multicolumn{{{cell.col_span}}}{{c}}{{{body}}}"
                parts.append(body)
                c += cell.col_span
            else:
                # Position covered by a multirow from above: emit a placeholder
                # that keeps the column alignment.
                width = cell.col_span
                parts.append(f"\\multicolumn{{{width}}}{{c}}{{}}" if width > 1 else "")
                c += width
        lines.append(" & ".join(parts) + " \\\\")
        if r == n_header:
            lines.append("\\hline")
    lines.append("\\end{tabular}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Canonical JSON (the interchange schema used across the toolkit)
# ---------------------------------------------------------------------------


def _parse_canonical_json(text: str) -> Table:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError("canonical-json", exc.msg, line=exc.lineno, offset=exc.colno)
    if not isinstance(data, dict):
        raise ParseError("canonical-json", "top-level value must be an object")
    try:
        cells = tuple(
            Cell(
                int(c["row"]),
                int(c["col"]),
                content=normalize_cell_text(str(c.get("content", ""))),
                row_span=int(c.get("row_span", 1)),
                col_span=int(c.get("col_span", 1)),
                is_header=bool(c.get("is_header", False)),
            )
            for c in data["cells"]
        )
        return Table(
            n_rows=int(data["n_rows"]),
            n_cols=int(data["n_cols"]),
            cells=cells,
            caption=data.get("caption"),
            source_format="canonical-json",
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError("canonical-json", f"bad table schema: {exc}")
    except StructureError as exc:
        raise ParseError("canonical-json", str(exc))


def _serialize_canonical_json(table: Table) -> str:
    doc = {
        "n_rows": table.n_rows,
        "n_cols": table.n_cols,
        "caption": table.caption,
        "cells": [
            {
                "row": c.anchor_row,
                "col": c.anchor_col,
                "row_span": c.row_span,
                "col_span": c.col_span,
                "content": c.content,
                "is_header": c.is_header,
            }
            for c in table.cells
        ],
    }
    return json.dumps(doc, ensure_ascii=False)
