"""Three-stage global-to-local table reasoning over a chat-model gateway.

Stage one (``gse``) asks the model where to look: a JSON plan naming target
columns and rows. Stage two (``sse``) has the model verify or revise that
plan and extract the minimal evidence cells. Stage three (``egr``) answers
from the evidence lines, with the original image still attached. Ablation
modes skip a stage or fall back to single-call answering.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field

from . import templates
from .errors import (
    EmptyEvidenceError,
    ExtractionError,
    PipelineError,
    SchemaError,
    StageError,
)
from .gateway import Gateway, Usage
from .grid import GridIndex

log = logging.getLogger(__name__)

MODES = ("gls", "gls_minus_gse", "gls_minus_sse", "cot", "direct")

# Re-asks after the first failed parse of a stage response.
DEFAULT_RETRIES = 2


@dataclass(frozen=True)
class ReasoningPlan:
    """Where-to-look decision: free-text thought plus target columns/rows.

    ``target_rows`` is either a list of row labels or a single filter
    condition string; ``rows_are_condition`` records which variant was
    parsed. ``source_text`` keeps the model's original JSON region so the
    next stage can quote it verbatim.
    """

    thought: str = ""
    target_columns: tuple[str, ...] = ()
    target_rows: tuple[str, ...] | str = ()
    source_text: str | None = field(default=None, compare=False)

    @property
    def rows_are_condition(self) -> bool:
        return isinstance(self.target_rows, str)

    def to_json(self) -> str:
        rows = self.target_rows if self.rows_are_condition else list(self.target_rows)
        return json.dumps(
            {
                "thought": self.thought,
                "target_columns": list(self.target_columns),
                "target_rows": rows,
            },
            ensure_ascii=False,
        )

    def render(self) -> str:
        return self.source_text if self.source_text is not None else self.to_json()


@dataclass(frozen=True)
class SubTable:
    """Verified plan evaluation plus the extracted evidence cells."""

    plan_evaluation: str
    cells: tuple[tuple[GridIndex, str], ...]

    def render(self) -> str:
        return "\n".join(f"Row {idx.row} Column {idx.col}: {content}" for idx, content in self.cells)


@dataclass(frozen=True)
class FinalAnswer:
    reasoning: str
    answer: str


@dataclass(frozen=True)
class StageTranscript:
    """Audit record of one model call."""

    stage: str
    prompt: str
    raw_response: str
    parsed: object | None = None
    usage: Usage | None = None

    def to_record(self) -> dict:
        return {
            "stage": self.stage,
            "prompt": self.prompt,
            "raw_response": self.raw_response,
            "usage": list(self.usage) if self.usage else None,
        }


@dataclass
class PipelineResult:
    answer: FinalAnswer
    transcripts: list[StageTranscript]
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Response parsing
# ---------------------------------------------------------------------------

_FENCE_RE = re.compile(r"^```[\w-]*\s*$", re.MULTILINE)
_TRAILING_COMMA_RE = re.compile(r",(\s*[}\]])")


def _object_regions(text: str) -> list[tuple[object, str]]:
    """Parseable top-level JSON objects with their source slices, in order.

    Decoding is attempted from each ``{``; a successful match is skipped over
    so nested objects do not register separately, while unbalanced braces in
    surrounding prose are simply stepped past.
    """
    decoder = json.JSONDecoder()
    regions: list[tuple[object, str]] = []
    i = text.find("{")
    while i != -1:
        try:
            value, end = decoder.raw_decode(text, i)
        except json.JSONDecodeError:
            i = text.find("{", i + 1)
            continue
        if isinstance(value, dict):
            regions.append((value, text[i:end]))
        i = text.find("{", end)
    return regions


def extract_json_region(text: str) -> tuple[object, str]:
    """Last parseable top-level JSON object in ``text`` and its source slice.

    Code fences are stripped first; a cleanup pass tolerates trailing commas
    (the plan schema in the prompt shows one).
    """
    cleaned = _FENCE_RE.sub("", text)
    regions = _object_regions(cleaned)
    if not regions:
        regions = _object_regions(_TRAILING_COMMA_RE.sub(r"\1", cleaned))
    if not regions:
        raise ExtractionError(f"no parseable JSON object in response: {text[:200]!r}")
    return regions[-1]


def extract_json(text: str):
    """Last parseable top-level JSON object in ``text``."""
    return extract_json_region(text)[0]


_CELL_LINE_RE = re.compile(
    r"^\s*row\s+(\d+)\s+column\s+(\d+)\s*:\s*(.*?)\s*$", re.IGNORECASE
)
_PLAN_EVAL_RE = re.compile(r"plan\s+evaluation\s*:", re.IGNORECASE)
_SUBTABLE_RE = re.compile(r"sub-?table\s*:", re.IGNORECASE)


def parse_subtable(text: str) -> SubTable:
    """Parse an extraction response into plan evaluation plus cell lines.

    Cell lines follow ``Row <int> Column <int>: <content>`` with
    case-insensitive keywords; anything else between them is ignored.
    Duplicate coordinates are rejected.
    """
    marker = _SUBTABLE_RE.search(text)
    if not marker:
        raise StageError("sse", 'response has no "Sub-table:" marker', raw_response=text)
    eval_match = _PLAN_EVAL_RE.search(text[: marker.start()])
    eval_start = eval_match.end() if eval_match else 0
    plan_evaluation = text[eval_start : marker.start()].strip().strip('"')

    cells: list[tuple[GridIndex, str]] = []
    seen: set[GridIndex] = set()
    for line in text[marker.end() :].splitlines():
        m = _CELL_LINE_RE.match(line)
        if not m:
            continue
        row, col = int(m.group(1)), int(m.group(2))
        if row < 1 or col < 1:
            continue
        idx = GridIndex(row, col)
        if idx in seen:
            raise StageError(
                "sse",
                f"duplicate sub-table coordinate Row {row} Column {col}",
                raw_response=text,
            )
        seen.add(idx)
        cells.append((idx, m.group(3)))
    return SubTable(plan_evaluation=plan_evaluation, cells=tuple(cells))


def _answer_to_text(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return str(value)
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    return json.dumps(value, ensure_ascii=False)


_REASONING_RE = re.compile(r"reasoning\s*:", re.IGNORECASE)


def parse_final_answer(text: str, stage: str = "egr") -> FinalAnswer:
    """Reasoning text plus the ``answer`` value of the last JSON object."""
    try:
        obj, region = extract_json_region(text)
    except ExtractionError as exc:
        raise StageError(stage, str(exc), raw_response=text)
    if not isinstance(obj, dict) or "answer" not in obj:
        raise StageError(stage, 'no JSON object with an "answer" key', raw_response=text)
    cleaned = _FENCE_RE.sub("", text)
    idx = cleaned.rfind(region)
    before = cleaned[:idx] if idx != -1 else cleaned
    m = _REASONING_RE.search(before)
    if m:
        reasoning = before[m.end() :].strip().strip('"')
    else:
        log.warning("%s response has no 'Reasoning:' marker", stage)
        reasoning = before.strip()
    return FinalAnswer(reasoning=reasoning, answer=_answer_to_text(obj["answer"]))


# ---------------------------------------------------------------------------
# Prompt rendering
# ---------------------------------------------------------------------------


def render_gse_prompt(question: str) -> str:
    if not question:
        raise ValueError("question must be non-empty")
    return templates.fill(templates.GSE_PROMPT, question=question)


def render_sse_prompt(question: str, plan: ReasoningPlan) -> str:
    if not question:
        raise ValueError("question must be non-empty")
    return templates.fill(templates.SSE_PROMPT, reasoning_plan=plan.render(), question=question)


def render_egr_prompt(question: str, subtable: SubTable) -> str:
    if not question:
        raise ValueError("question must be non-empty")
    return templates.fill(templates.EGR_PROMPT, subtable=subtable.render(), question=question)


def render_answer_prompt(question: str, mode: str) -> str:
    suffix = templates.CHAIN_OF_THOUGHT_SUFFIX if mode == "cot" else templates.DIRECT_ANSWER_SUFFIX
    return question + " " + suffix


# ---------------------------------------------------------------------------
# Stage execution
# ---------------------------------------------------------------------------


def _ask(gateway: Gateway, prompt: str, image_ref: str | None, stage: str, parser, retries: int):
    """Send a prompt, parse the reply, re-ask the same prompt on parse failure."""
    last_exc: StageError | None = None
    for _ in range(retries + 1):
        response = gateway.complete_text(prompt, image_ref)
        try:
            parsed = parser(response.text)
        except EmptyEvidenceError:
            raise
        except StageError as exc:
            last_exc = exc
            continue
        return parsed, StageTranscript(stage, prompt, response.text, parsed, response.usage)
    raise last_exc  # type: ignore[misc]


def _parse_plan(text: str) -> ReasoningPlan:
    try:
        obj, region = extract_json_region(text)
    except ExtractionError as exc:
        raise StageError("gse", str(exc), raw_response=text)
    if not isinstance(obj, dict):
        raise StageError("gse", "plan response is not a JSON object", raw_response=text)
    for key in ("thought", "target_columns", "target_rows"):
        if key not in obj:
            raise SchemaError("gse", f"plan is missing required key {key!r}", raw_response=text)
    columns = obj["target_columns"]
    if columns is None:
        columns = []
    if not isinstance(columns, list):
        raise SchemaError("gse", "target_columns must be a list", raw_response=text)
    rows = obj["target_rows"]
    if isinstance(rows, str):
        target_rows: tuple[str, ...] | str = rows
    elif rows is None:
        target_rows = ()
    elif isinstance(rows, list):
        target_rows = tuple(str(r) for r in rows)
    else:
        raise SchemaError("gse", "target_rows must be a list or a string", raw_response=text)
    return ReasoningPlan(
        thought=str(obj["thought"]),
        target_columns=tuple(str(c) for c in columns),
        target_rows=target_rows,
        source_text=region,
    )


def run_gse(
    gateway: Gateway, image_ref: str | None, question: str, retries: int = DEFAULT_RETRIES
) -> tuple[ReasoningPlan, StageTranscript]:
    prompt = render_gse_prompt(question)
    return _ask(gateway, prompt, image_ref, "gse", _parse_plan, retries)


def _parse_subtable_nonempty(text: str) -> SubTable:
    subtable = parse_subtable(text)
    if not subtable.cells:
        raise EmptyEvidenceError("sse", "sub-table has zero evidence cells", raw_response=text)
    return subtable


def run_sse(
    gateway: Gateway,
    image_ref: str | None,
    question: str,
    plan: ReasoningPlan,
    retries: int = DEFAULT_RETRIES,
) -> tuple[SubTable, StageTranscript]:
    prompt = render_sse_prompt(question, plan)
    return _ask(gateway, prompt, image_ref, "sse", _parse_subtable_nonempty, retries)


def run_egr(
    gateway: Gateway,
    image_ref: str | None,
    question: str,
    subtable: SubTable,
    retries: int = DEFAULT_RETRIES,
) -> tuple[FinalAnswer, StageTranscript]:
    prompt = render_egr_prompt(question, subtable)
    return _ask(
        gateway, prompt, image_ref, "egr", lambda t: parse_final_answer(t, "egr"), retries
    )


def run_answer(
    gateway: Gateway,
    image_ref: str | None,
    question: str,
    mode: str,
    retries: int = DEFAULT_RETRIES,
) -> tuple[FinalAnswer, StageTranscript]:
    """Single-call direct or chain-of-thought answering."""
    prompt = render_answer_prompt(question, mode)
    return _ask(
        gateway, prompt, image_ref, "answer", lambda t: parse_final_answer(t, "answer"), retries
    )


def plan_as_subtable(plan: ReasoningPlan) -> SubTable:
    """Pseudo-evidence for the no-extraction ablation.

    Column headers become cells along row 1; row labels run down column 1
    starting at row 2 (a condition string becomes a single row-2 pseudo-cell).
    """
    cells: list[tuple[GridIndex, str]] = []
    for j, col in enumerate(plan.target_columns, start=1):
        cells.append((GridIndex(1, j), col))
    rows = [plan.target_rows] if plan.rows_are_condition else list(plan.target_rows)
    for i, row in enumerate(rows, start=2):
        cells.append((GridIndex(i, 1), row))
    return SubTable(plan_evaluation="", cells=tuple(cells))


def run_pipeline(
    gateway: Gateway,
    image_ref: str | None,
    question: str,
    mode: str = "gls",
    retries: int = DEFAULT_RETRIES,
    empty_evidence_fallback: str | None = "cot",
) -> PipelineResult:
    """Run one example end to end in the requested mode.

    Any stage failure raises :class:`PipelineError` carrying the transcripts
    gathered so far; batch drivers record it and continue. When extraction
    yields no evidence and a fallback mode is configured, the example is
    re-answered in that mode and the switch is recorded in ``meta``.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    transcripts: list[StageTranscript] = []
    meta: dict = {}
    try:
        if mode in ("cot", "direct"):
            answer, t = run_answer(gateway, image_ref, question, mode, retries)
            transcripts.append(t)
            return PipelineResult(answer, transcripts, meta)

        if mode == "gls_minus_gse":
            plan = ReasoningPlan()
        else:
            plan, t = run_gse(gateway, image_ref, question, retries)
            transcripts.append(t)

        if mode == "gls_minus_sse":
            subtable = plan_as_subtable(plan)
        else:
            try:
                subtable, t = run_sse(gateway, image_ref, question, plan, retries)
                transcripts.append(t)
            except EmptyEvidenceError as exc:
                if not empty_evidence_fallback:
                    raise
                transcripts.append(StageTranscript("sse", render_sse_prompt(question, plan),
                                                   exc.raw_response))
                meta["fallback"] = empty_evidence_fallback
                answer, t = run_answer(
                    gateway, image_ref, question, empty_evidence_fallback, retries
                )
                transcripts.append(t)
                return PipelineResult(answer, transcripts, meta)

        answer, t = run_egr(gateway, image_ref, question, subtable, retries)
        transcripts.append(t)
        return PipelineResult(answer, transcripts, meta)
    except StageError as exc:
        raise PipelineError(str(exc), transcripts) from exc


def total_usage(transcripts: list[StageTranscript]) -> Usage | None:
    """Summed token usage across transcripts, or None if none reported it."""
    reported = [t.usage for t in transcripts if t.usage is not None]
    if not reported:
        return None
    return Usage(
        prompt_tokens=sum(u.prompt_tokens for u in reported),
        completion_tokens=sum(u.completion_tokens for u in reported),
    )
