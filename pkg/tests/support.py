"""Shared generators for randomized tables and the synthetic oracle suite."""

from __future__ import annotations

import json
import random
from pathlib import Path

from tabgls.datagen import CorpusEntry
from tabgls.formats import TableText, serialize
from tabgls.gateway import GoldDerivation
from tabgls.grid import Cell, Table


def make_random_table(
    rng: random.Random,
    max_rows: int = 8,
    max_cols: int = 8,
    allow_spans: bool = True,
    header_style: str = "row1",
    empty_cells: bool = True,
) -> Table:
    """Random valid table; contents are distinctive alphanumeric tokens."""
    n_rows = rng.randint(1, max_rows)
    n_cols = rng.randint(1, max_cols)
    owner: list[list[tuple[int, int] | None]] = [[None] * n_cols for _ in range(n_rows)]
    merge_spans: dict[tuple[int, int], tuple[int, int]] = {}
    if allow_spans and n_rows * n_cols >= 4:
        for _ in range(rng.randint(0, max(1, (n_rows * n_cols) // 4))):
            r = rng.randint(1, n_rows)
            c = rng.randint(1, n_cols)
            rs = rng.randint(1, min(3, n_rows - r + 1))
            cs = rng.randint(1, min(3, n_cols - c + 1))
            if rs == 1 and cs == 1:
                continue
            region = [(rr, cc) for rr in range(r, r + rs) for cc in range(c, c + cs)]
            if any(owner[rr - 1][cc - 1] is not None for rr, cc in region):
                continue
            for rr, cc in region:
                owner[rr - 1][cc - 1] = (r, c)
            merge_spans[(r, c)] = (rs, cs)
    cells = []
    for r in range(1, n_rows + 1):
        for c in range(1, n_cols + 1):
            anchor = owner[r - 1][c - 1]
            if anchor is not None and anchor != (r, c):
                continue
            rs, cs = merge_spans.get((r, c), (1, 1))
            if header_style == "row1":
                is_header = r == 1
            elif header_style == "cells":
                is_header = rng.random() < 0.3
            else:
                is_header = False
            if empty_cells and rng.random() < 0.08:
                content = ""
            else:
                content = f"v{r}x{c}n{rng.randint(0, 9999)}"
            cells.append(
                Cell(r, c, content=content, row_span=rs, col_span=cs, is_header=is_header)
            )
    caption = f"cap{rng.randint(0, 99)}" if rng.random() < 0.3 else None
    return Table(n_rows=n_rows, n_cols=n_cols, cells=tuple(cells), caption=caption)


def table_for_format(rng: random.Random, fmt: str, **kwargs) -> Table:
    """Random table constrained to what ``fmt`` can express."""
    if fmt == "markdown":
        kwargs["allow_spans"] = False
        kwargs["header_style"] = "row1"
    elif fmt == "latex":
        kwargs.setdefault("header_style", rng.choice(["row1", "none"]))
    else:
        kwargs.setdefault("header_style", rng.choice(["row1", "cells", "none"]))
    return make_random_table(rng, **kwargs)


def make_mixed_corpus(n: int, seed: int = 11) -> list[tuple[TableText, Table]]:
    """n tables cycling through all four formats, with their parsed source."""
    rng = random.Random(seed)
    formats = ("html", "markdown", "latex", "canonical-json")
    out = []
    for i in range(n):
        fmt = formats[i % len(formats)]
        table = table_for_format(rng, fmt, max_rows=6, max_cols=6)
        out.append((serialize(table, fmt), table))
    return out


def corpus_entries(pairs, image_prefix: str = "images/t") -> list[CorpusEntry]:
    return [
        CorpusEntry(
            table=text,
            image_ref=f"{image_prefix}{i}.png",
            base_query="Recognize the table in the image.",
            source=f"src{i % 3}",
        )
        for i, (text, _) in enumerate(pairs)
    ]


def build_synthetic_suite(image_dir: Path, n: int = 60, seed: int = 7):
    """Questions over small tables with full gold derivations for the oracle.

    Returns (eval_records, gold_records, derivations); writes one tiny image
    file per question so requests stay hermetic and cacheable.
    """
    rng = random.Random(seed)
    image_dir.mkdir(parents=True, exist_ok=True)
    eval_records, gold_records, derivations = [], [], []
    for i in range(n):
        n_rows = rng.randint(2, 6)
        n_cols = rng.randint(2, 6)
        headers = [f"hdr{i}c{c}" for c in range(1, n_cols + 1)]
        labels = [f"row{i}r{r}" for r in range(2, n_rows + 1)]
        cells = []
        values = {}
        for c, h in enumerate(headers, start=1):
            cells.append(Cell(1, c, content=h, is_header=True))
        for r, label in enumerate(labels, start=2):
            cells.append(Cell(r, 1, content=label))
            for c in range(2, n_cols + 1):
                value = f"val{i}r{r}c{c}"
                values[(r, c)] = value
                cells.append(Cell(r, c, content=value))
        Table(n_rows=n_rows, n_cols=n_cols, cells=tuple(cells))  # validity check
        r = rng.randint(2, n_rows)
        c = rng.randint(2, n_cols)
        question = f"In table {i}, what is the {headers[c - 1]} value for {labels[r - 2]}?"
        answer = values[(r, c)]
        image = image_dir / f"table{i}.png"
        image.write_bytes(b"PNGSTUB" + str(i).encode())
        qid = f"q{i:03d}"
        eval_records.append(
            {"id": qid, "image": str(image), "question": question, "task": "tqa"}
        )
        gold_records.append({"id": qid, "task": "tqa", "gold": {"answer": answer}})
        derivations.append(
            GoldDerivation(
                question=question,
                answer=answer,
                target_columns=(headers[c - 1],),
                target_rows=(labels[r - 2],),
                evidence=((r, 1, labels[r - 2]), (r, c, answer)),
            )
        )
    return eval_records, gold_records, derivations


def write_jsonl(path: Path, records) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def derivation_records(derivations) -> list[dict]:
    return [
        {
            "question": d.question,
            "answer": d.answer,
            "target_columns": list(d.target_columns),
            "target_rows": d.target_rows if isinstance(d.target_rows, str) else list(d.target_rows),
            "evidence": [{"row": r, "col": c, "content": content} for r, c, content in d.evidence],
        }
        for d in derivations
    ]
