"""Scoring for table-understanding and table-reasoning predictions.

Dimension detection is exact-match accuracy per axis; cell extraction and
location are accuracy over queried positions; merged-cell detection and
row/column extraction are cell-level F1; question answering and fact
verification are normalized exact match. Scores are computed as exact
``Fraction`` values and only converted to floats when a report is written.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import ReconciliationError

TASKS = ("tsd", "tce", "tcl", "mcd", "rce_row", "rce_col", "tqa", "tfv")

# Tasks whose headline score is F1 rather than accuracy.
F1_TASKS = frozenset({"mcd", "rce_row", "rce_col"})

# Common label synonyms for fact verification, mapped to a canonical class.
DEFAULT_TFV_SYNONYMS = {
    "entailed": "supported",
    "entailment": "supported",
    "true": "supported",
    "yes": "supported",
    "supports": "supported",
    "supported": "supported",
    "refuted": "refuted",
    "refutes": "refuted",
    "contradiction": "refuted",
    "false": "refuted",
    "no": "refuted",
}

_NUMERIC_RE = re.compile(r"[+-]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?")
_WS_RE = re.compile(r"\s+")


def normalize_answer(raw: str) -> str:
    """Canonical comparison form of an answer string.

    Lowercases, trims, collapses whitespace, strips surrounding quotes and a
    trailing period, and canonicalizes numbers (thousands separators dropped,
    trailing fractional zeros removed, leading currency/percent signs
    stripped). Idempotent.
    """
    text = raw
    while True:  # quote and period stripping repeat until stable (idempotence)
        previous = text
        text = text.strip()
        if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
            text = text[1:-1]
        if text.endswith("."):
            text = text[:-1]
        if text == previous:
            break
    text = _WS_RE.sub(" ", text).lower()
    stripped = text
    if stripped[:1] in ("$", "%"):
        stripped = stripped[1:].strip()
    if _NUMERIC_RE.fullmatch(stripped):
        number = stripped.replace(",", "")
        if "." in number:
            number = number.rstrip("0").rstrip(".")
        if number.startswith("+"):
            number = number[1:]
        if number in ("", "-"):
            number = "0"
        return number
    return text


def _canon_item(item) -> object:
    """Hashable canonical form for set/list comparisons."""
    if isinstance(item, str):
        return normalize_answer(item)
    if isinstance(item, (list, tuple)):
        return tuple(int(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else _canon_item(v) for v in item)
    if isinstance(item, dict):  # merged-cell region objects
        return (
            int(item.get("row", 0)),
            int(item.get("col", 0)),
            int(item.get("row_span", 1)),
            int(item.get("col_span", 1)),
        )
    return item


def eval_tsd(pred: tuple[int, int] | None, gold: tuple[int, int]) -> tuple[int, int]:
    """Per-axis exact match for (row count, column count); 0/1 each."""
    if pred is None:
        return (0, 0)
    return (int(pred[0] == gold[0]), int(pred[1] == gold[1]))


def eval_cell_accuracy(pred: list, gold: list) -> Fraction:
    """Fraction of queried positions matched; missing positions are wrong."""
    if not gold:
        return Fraction(1)
    hits = 0
    for i, g in enumerate(gold):
        if i < len(pred) and _canon_item(pred[i]) == _canon_item(g):
            hits += 1
    return Fraction(hits, len(gold))


def eval_cell_f1(pred, gold) -> tuple[Fraction, Fraction, Fraction]:
    """Set-level (precision, recall, F1) over canonicalized items."""
    pred_set = {_canon_item(x) for x in pred}
    gold_set = {_canon_item(x) for x in gold}
    hits = len(pred_set & gold_set)
    precision = Fraction(hits, len(pred_set)) if pred_set else Fraction(0)
    recall = Fraction(hits, len(gold_set)) if gold_set else Fraction(0)
    if precision + recall == 0:
        return (precision, recall, Fraction(0))
    f1 = 2 * precision * recall / (precision + recall)
    return (precision, recall, f1)


def eval_qa(pred: str, gold, synonyms: dict | None = None) -> int:
    """Normalized exact match; multi-answer golds compare as sets."""
    mapping = synonyms or {}

    def canon(value: str) -> str:
        n = normalize_answer(value)
        return mapping.get(n, n)

    if isinstance(gold, (set, frozenset, list, tuple)):
        gold_set = {canon(str(g)) for g in gold}
        if isinstance(pred, (set, frozenset, list, tuple)):
            pred_set = {canon(str(p)) for p in pred}
        else:
            pred_set = {canon(p) for p in _split_listish(pred)}
        return int(pred_set == gold_set)
    return int(canon(pred) == canon(str(gold)))


# ---------------------------------------------------------------------------
# Prediction-string parsing per task
# ---------------------------------------------------------------------------

_ROWS_RE = re.compile(r"(\d+)\s*rows?", re.IGNORECASE)
_COLS_RE = re.compile(r"(\d+)\s*columns?", re.IGNORECASE)
_INT_RE = re.compile(r"\d+")
_PAIR_RE = re.compile(r"row\s*(\d+)\s*(?:,|and)?\s*column\s*(\d+)", re.IGNORECASE)
_TUPLE_RE = re.compile(r"\(\s*(\d+)\s*,\s*(\d+)\s*\)")
_QUAD_RE = re.compile(r"\(\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*\)")


def parse_dims(answer: str) -> tuple[int, int] | None:
    """Pull (rows, cols) out of a free-text size answer."""
    rows = _ROWS_RE.search(answer)
    cols = _COLS_RE.search(answer)
    if rows and cols:
        return (int(rows.group(1)), int(cols.group(1)))
    ints = _INT_RE.findall(answer)
    if len(ints) >= 2:
        return (int(ints[0]), int(ints[1]))
    return None


def _split_listish(answer: str) -> list[str]:
    """Interpret an answer string as a list of items."""
    text = answer.strip()
    if text.startswith("["):
        try:
            data = json.loads(text)
            if isinstance(data, list):
                return [str(x) for x in data]
        except json.JSONDecodeError:
            pass
    if "\n" in text:
        return [line for line in (l.strip() for l in text.splitlines()) if line]
    if not text:
        return []
    return [part.strip() for part in text.split(",")]


def parse_index_pairs(answer: str) -> list[tuple[int, int]]:
    pairs = [(int(r), int(c)) for r, c in _PAIR_RE.findall(answer)]
    if pairs:
        return pairs
    return [(int(r), int(c)) for r, c in _TUPLE_RE.findall(answer)]


def parse_regions(answer: str) -> list[tuple[int, int, int, int]]:
    text = answer.strip()
    if text.startswith("["):
        try:
            data = json.loads(text)
            if isinstance(data, list):
                return [_canon_item(x) for x in data]  # type: ignore[return-value]
        except json.JSONDecodeError:
            pass
    return [tuple(int(v) for v in quad) for quad in _QUAD_RE.findall(answer)]


# ---------------------------------------------------------------------------
# Records and aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GoldRecord:
    """Gold target for one example; ``gold`` payload shape depends on task."""

    id: str
    task: str
    gold: object

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")

    @classmethod
    def from_record(cls, record: dict) -> "GoldRecord":
        return cls(id=str(record["id"]), task=record["task"], gold=record["gold"])


@dataclass
class TaskScores:
    """Sample-weighted scores for one task."""

    n: int = 0
    sums: dict = field(default_factory=dict)

    def add(self, **values: Fraction | int) -> None:
        self.n += 1
        for name, value in values.items():
            self.sums[name] = self.sums.get(name, Fraction(0)) + Fraction(value)

    def mean(self, name: str) -> Fraction:
        if self.n == 0:
            return Fraction(0)
        return self.sums.get(name, Fraction(0)) / self.n

    def as_means(self) -> dict[str, Fraction]:
        return {name: self.mean(name) for name in self.sums}


@dataclass
class MetricReport:
    per_task: dict[str, TaskScores]
    overall: Fraction | None
    token_stats: dict[str, Fraction]

    def primary_score(self, task: str) -> Fraction:
        scores = self.per_task[task]
        if task in F1_TASKS:
            return scores.mean("f1")
        if task == "tsd":
            return (scores.mean("row_accuracy") + scores.mean("col_accuracy")) / 2
        return scores.mean("accuracy")

    def to_dict(self) -> dict:
        return {
            "per_task": {
                task: {
                    "n": scores.n,
                    **{name: float(v) for name, v in sorted(scores.as_means().items())},
                }
                for task, scores in sorted(self.per_task.items())
            },
            "overall": float(self.overall) if self.overall is not None else None,
            "token_stats": {
                mode: float(v) for mode, v in sorted(self.token_stats.items())
            },
        }

    def to_text(self) -> str:
        lines = [f"{'task':<10} {'metric':<14} {'score':>8} {'n':>6}"]
        for task, scores in sorted(self.per_task.items()):
            for name, value in sorted(scores.as_means().items()):
                lines.append(f"{task:<10} {name:<14} {float(value):>8.4f} {scores.n:>6}")
        if self.overall is not None:
            lines.append(f"{'overall':<10} {'':<14} {float(self.overall):>8.4f} {'':>6}")
        for mode, value in sorted(self.token_stats.items()):
            lines.append(f"{'tokens':<10} {mode:<14} {float(value):>8.2f} {'':>6}")
        return "\n".join(lines)


def _score_one(task: str, answer, gold, synonyms: dict) -> dict:
    if task == "tsd":
        dims = answer if isinstance(answer, (tuple, list)) and len(answer) == 2 else parse_dims(str(answer))
        row_ok, col_ok = eval_tsd(tuple(dims) if dims else None, (int(gold["rows"]), int(gold["cols"])))
        return {"row_accuracy": row_ok, "col_accuracy": col_ok}
    if task in ("tce", "tcl"):
        if task == "tce":
            pred_items = answer if isinstance(answer, list) else _split_listish(str(answer))
        else:
            pred_items = answer if isinstance(answer, list) else parse_index_pairs(str(answer))
        return {"accuracy": eval_cell_accuracy(pred_items, gold["cells"])}
    if task in ("rce_row", "rce_col"):
        pred_items = answer if isinstance(answer, list) else _split_listish(str(answer))
        p, r, f1 = eval_cell_f1(pred_items, gold["cells"])
        return {"precision": p, "recall": r, "f1": f1}
    if task == "mcd":
        pred_items = answer if isinstance(answer, list) else parse_regions(str(answer))
        p, r, f1 = eval_cell_f1(pred_items, gold["regions"])
        return {"precision": p, "recall": r, "f1": f1}
    if task == "tfv":
        return {"accuracy": eval_qa(str(answer), gold["label"], synonyms)}
    # tqa
    target = gold.get("answers", gold.get("answer"))
    return {"accuracy": eval_qa(answer if isinstance(answer, list) else str(answer), target)}


_ZEROES = {
    "tsd": {"row_accuracy": 0, "col_accuracy": 0},
    "tce": {"accuracy": 0},
    "tcl": {"accuracy": 0},
    "mcd": {"precision": 0, "recall": 0, "f1": 0},
    "rce_row": {"precision": 0, "recall": 0, "f1": 0},
    "rce_col": {"precision": 0, "recall": 0, "f1": 0},
    "tqa": {"accuracy": 0},
    "tfv": {"accuracy": 0},
}


def aggregate(
    predictions: list[dict],
    golds: list[GoldRecord],
    tfv_synonyms: dict | None = None,
) -> MetricReport:
    """Score a prediction batch against its gold records.

    Every gold id must be predicted and vice versa; failed predictions score
    zero but stay in the denominators. Order of input records does not
    matter.
    """
    synonyms = DEFAULT_TFV_SYNONYMS if tfv_synonyms is None else tfv_synonyms
    gold_by_id = {g.id: g for g in golds}
    pred_ids = [str(p["id"]) for p in predictions]
    missing = set(gold_by_id) - set(pred_ids)
    extra = set(pred_ids) - set(gold_by_id)
    if missing or extra:
        raise ReconciliationError(sorted(missing), sorted(extra))

    per_task: dict[str, TaskScores] = {}
    token_sums: dict[str, list] = {}
    for pred in sorted(predictions, key=lambda p: str(p["id"])):
        gold = gold_by_id[str(pred["id"])]
        scores = per_task.setdefault(gold.task, TaskScores())
        if pred.get("failed"):
            scores.add(**_ZEROES[gold.task])
        else:
            scores.add(**_score_one(gold.task, pred.get("answer", ""), gold.gold, synonyms))
        usage = pred.get("usage") or {}
        completion = usage.get("completion_tokens") if isinstance(usage, dict) else None
        if completion is not None:
            bucket = token_sums.setdefault(str(pred.get("mode", "unknown")), [Fraction(0), 0])
            bucket[0] += Fraction(int(completion))
            bucket[1] += 1

    report = MetricReport(per_task=per_task, overall=None, token_stats={})
    if per_task:
        report.overall = sum(
            (report.primary_score(t) for t in per_task), Fraction(0)
        ) / len(per_task)
    report.token_stats = {
        mode: total / count for mode, (total, count) in token_sums.items() if count
    }
    return report
