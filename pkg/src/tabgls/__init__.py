"""Table alignment-data construction, staged reasoning, and scoring toolkit."""

from .datagen import AlignmentInstance, TemplateBank, build_dataset
from .formats import PlaceholderToken, TableText, anonymize, parse, serialize
from .gateway import ChatRequest, ChatResponse, Gateway, OracleBackend, ScriptedBackend
from .grid import Cell, GridIndex, Table
from .metrics import GoldRecord, MetricReport, aggregate, normalize_answer
from .pipeline import FinalAnswer, ReasoningPlan, SubTable, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "AlignmentInstance",
    "Cell",
    "ChatRequest",
    "ChatResponse",
    "FinalAnswer",
    "Gateway",
    "GoldRecord",
    "GridIndex",
    "MetricReport",
    "OracleBackend",
    "PlaceholderToken",
    "ReasoningPlan",
    "ScriptedBackend",
    "SubTable",
    "Table",
    "TableText",
    "TemplateBank",
    "aggregate",
    "anonymize",
    "build_dataset",
    "normalize_answer",
    "parse",
    "run_pipeline",
    "serialize",
]
