"""Builds structure/content-disentangled alignment instances from table text.

Every source table yields three kinds of training triples:

* ``structure``       -- reproduce the table text with all contents replaced
                         by a placeholder token (layout-only supervision);
* ``content_global``  -- a semi-structured description: the row/column count
                         line followed by one "Row i Column j: ..." line per
                         anchor cell in row-major order;
* ``content_local``   -- a single randomly chosen cell lookup.

Generation is a pure function of (corpus order, seed): each table's RNG is
derived from the run seed and the table ordinal, so output files are
byte-identical across runs and safe to parallelize.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from . import templates
from .errors import DatasetError, InputError, TabglsError, TemplateError
from .formats import PlaceholderToken, TableText, anonymize, parse
from .grid import Table

log = logging.getLogger(__name__)

KINDS = ("structure", "content_global", "content_local")


@dataclass(frozen=True)
class AlignmentInstance:
    """One (instruction, image reference, target text) training triple."""

    kind: str
    instruction: str
    image_ref: str
    target: str
    meta: dict = field(default_factory=dict, compare=False)

    def to_record(self) -> dict:
        return {
            "kind": self.kind,
            "instruction": self.instruction,
            "image": self.image_ref,
            "target": self.target,
            "meta": self.meta,
        }


@dataclass(frozen=True)
class TemplateBank:
    """Instruction templates; defaults are the fixed ten-per-kind banks."""

    global_templates: tuple[str, ...] = templates.GLOBAL_INSTRUCTION_TEMPLATES
    local_templates: tuple[str, ...] = templates.LOCAL_INSTRUCTION_TEMPLATES
    structure_suffix: str = templates.STRUCTURE_SUFFIX_TEMPLATE

    def __post_init__(self) -> None:
        if len(self.global_templates) != 10:
            raise TemplateError(f"expected 10 global templates, got {len(self.global_templates)}")
        if len(self.local_templates) != 10:
            raise TemplateError(f"expected 10 local templates, got {len(self.local_templates)}")
        for i, t in enumerate(self.local_templates):
            if "{R}" not in t or "{C}" not in t:
                raise TemplateError(f"local template {i} is missing a {{R}} or {{C}} slot")


DEFAULT_BANK = TemplateBank()


@dataclass(frozen=True)
class CorpusEntry:
    """One line of the input corpus manifest."""

    table: TableText
    image_ref: str
    base_query: str
    source: str = ""

    def __post_init__(self) -> None:
        if not self.image_ref:
            raise InputError("corpus entry has an empty image reference")

    @classmethod
    def from_record(cls, record: dict) -> "CorpusEntry":
        table = record["table"]
        return cls(
            table=TableText(format=table["format"], text=table["text"]),
            image_ref=record["image"],
            base_query=record.get("base_query", ""),
            source=record.get("source", ""),
        )


def global_description(table: Table) -> str:
    """Row/column count line plus one line per anchor cell, row-major.

    Merged cells contribute a single line at their anchor coordinate.
    """
    lines = [f"The table has {table.n_rows} rows and {table.n_cols} columns"]
    for cell in table.cells:
        lines.append(f"Row {cell.anchor_row} Column {cell.anchor_col}: {cell.content}")
    return "\n".join(lines)


def gen_structure(
    table_text: TableText,
    base_query: str,
    image_ref: str,
    placeholder: PlaceholderToken | None = None,
    bank: TemplateBank = DEFAULT_BANK,
    meta: dict | None = None,
) -> AlignmentInstance:
    """Structure-alignment instance: anonymized table text as the target."""
    placeholder = placeholder or PlaceholderToken()
    suffix = templates.fill(bank.structure_suffix, placeholder=placeholder.token)
    instruction = (base_query + " " + suffix).strip()
    target = anonymize(table_text, placeholder).text
    return AlignmentInstance(
        kind="structure",
        instruction=instruction,
        image_ref=image_ref,
        target=target,
        meta={**(meta or {}), "format": table_text.format},
    )


def gen_global(
    table: Table,
    image_ref: str,
    rng: random.Random,
    bank: TemplateBank = DEFAULT_BANK,
    meta: dict | None = None,
) -> AlignmentInstance:
    """Global content-alignment instance with a seeded template choice."""
    instruction = rng.choice(bank.global_templates)
    return AlignmentInstance(
        kind="content_global",
        instruction=instruction,
        image_ref=image_ref,
        target=global_description(table),
        meta=dict(meta or {}),
    )


def gen_local(
    table: Table,
    image_ref: str,
    rng: random.Random,
    bank: TemplateBank = DEFAULT_BANK,
    meta: dict | None = None,
) -> AlignmentInstance:
    """Local content-alignment instance for one uniformly chosen anchor cell.

    Spanned non-anchor coordinates are excluded so the answer is unambiguous.
    """
    cell = rng.choice(table.cells)
    template = rng.choice(bank.local_templates)
    instruction = templates.fill(template, R=str(cell.anchor_row), C=str(cell.anchor_col))
    return AlignmentInstance(
        kind="content_local",
        instruction=instruction,
        image_ref=image_ref,
        target=f"Row {cell.anchor_row} Column {cell.anchor_col}: {cell.content}",
        meta={**(meta or {}), "cell": [cell.anchor_row, cell.anchor_col]},
    )


def _table_rng(seed: int, ordinal: int) -> random.Random:
    """Per-table RNG stable across runs and processes."""
    digest = hashlib.sha256(f"{seed}:{ordinal}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def generate_for_table(
    entry: CorpusEntry,
    ordinal: int,
    seed: int,
    placeholder: PlaceholderToken | None = None,
    bank: TemplateBank = DEFAULT_BANK,
    local_per_table: int = 1,
) -> list[AlignmentInstance]:
    """All alignment instances for one corpus entry (parses the table once)."""
    table = parse(entry.table)
    rng = _table_rng(seed, ordinal)
    meta = {"source": entry.source, "table_ordinal": ordinal, "format": entry.table.format}
    out = [
        gen_structure(entry.table, entry.base_query, entry.image_ref, placeholder, bank, meta),
        gen_global(table, entry.image_ref, rng, bank, meta),
    ]
    for _ in range(local_per_table):
        out.append(gen_local(table, entry.image_ref, rng, bank, meta))
    return out


@dataclass
class DatasetManifest:
    """Counts summary written next to each generated dataset."""

    total_tables: int = 0
    total_instances: int = 0
    skipped: int = 0
    per_kind: dict = field(default_factory=lambda: {k: 0 for k in KINDS})
    per_source: dict = field(default_factory=dict)

    def record(self, source: str, instances: list[AlignmentInstance]) -> None:
        self.total_tables += 1
        self.total_instances += len(instances)
        for inst in instances:
            self.per_kind[inst.kind] = self.per_kind.get(inst.kind, 0) + 1
        bucket = self.per_source.setdefault(source or "unknown", {"tables": 0, "samples": 0})
        bucket["tables"] += 1
        bucket["samples"] += len(instances)

    def to_dict(self) -> dict:
        return {
            "total_tables": self.total_tables,
            "total_instances": self.total_instances,
            "skipped": self.skipped,
            "per_kind": dict(self.per_kind),
            "per_source": {k: dict(v) for k, v in sorted(self.per_source.items())},
        }


def build_dataset(
    corpus: Iterable[CorpusEntry | None],
    out_path: str | Path,
    seed: int,
    placeholder: PlaceholderToken | None = None,
    bank: TemplateBank = DEFAULT_BANK,
    local_per_table: int = 1,
    skip_threshold: float = 0.01,
    strict_images: bool = False,
) -> DatasetManifest:
    """Generate alignment instances for a corpus and write them as JSONL.

    Unparseable entries are logged and skipped; the run fails if the skip
    rate exceeds ``skip_threshold``. Output lines follow corpus order.
    """
    out_path = Path(out_path)
    manifest = DatasetManifest()
    seen = 0
    with out_path.open("w", encoding="utf-8") as fh:
        for ordinal, entry in enumerate(corpus):
            seen += 1
            if entry is None:  # undecodable manifest line, already logged
                manifest.skipped += 1
                continue
            try:
                if strict_images and not Path(entry.image_ref).exists():
                    raise InputError(f"image not found: {entry.image_ref}")
                instances = generate_for_table(
                    entry, ordinal, seed, placeholder, bank, local_per_table
                )
            except TabglsError as exc:
                manifest.skipped += 1
                log.warning("skipping corpus entry %d (%s): %s", ordinal, entry.source, exc)
                continue
            for inst in instances:
                fh.write(json.dumps(inst.to_record(), ensure_ascii=False) + "\n")
            manifest.record(entry.source, instances)
    if seen and manifest.skipped / seen > skip_threshold:
        raise DatasetError(
            f"skipped {manifest.skipped} of {seen} corpus entries "
            f"({manifest.skipped / seen:.1%} > threshold {skip_threshold:.1%})"
        )
    return manifest


def iter_corpus_entries(path: str | Path) -> Iterator[CorpusEntry | None]:
    """Corpus entries in manifest order; ``None`` marks an undecodable line."""
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield CorpusEntry.from_record(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError, InputError) as exc:
                log.warning("corrupt corpus line %d: %s", lineno, exc)
                yield None
