"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class TabglsError(Exception):
    """Base class for all errors raised by this package."""


class StructureError(TabglsError):
    """A table's cells fail to tile its grid (overlap, gap, or bad span)."""


class GridRangeError(TabglsError, IndexError):
    """A grid coordinate falls outside the table's dimensions."""


class ParseError(TabglsError):
    """Table text could not be parsed.

    Carries the source format plus a line/offset where known.
    """

    def __init__(self, fmt: str, reason: str, line: int | None = None, offset: int | None = None):
        self.format = fmt
        self.reason = reason
        self.line = line
        self.offset = offset
        where = ""
        if line is not None:
            where = f" at line {line}" + (f", offset {offset}" if offset is not None else "")
        super().__init__(f"{fmt} parse error{where}: {reason}")


class CapabilityError(TabglsError):
    """The target format cannot represent the table (e.g. spans in Markdown)."""


class TemplateError(TabglsError):
    """Instruction template bank violates its contract."""


class StageError(TabglsError):
    """A pipeline stage failed to produce a usable response.

    ``raw_response`` keeps the last model output for auditing.
    """

    def __init__(self, stage: str, reason: str, raw_response: str = ""):
        self.stage = stage
        self.reason = reason
        self.raw_response = raw_response
        super().__init__(f"{stage} stage failed: {reason}")


class SchemaError(StageError):
    """Stage response parsed but is missing a required key."""


class ExtractionError(TabglsError):
    """No parseable JSON region was found in a response."""


class EmptyEvidenceError(StageError):
    """Sub-table extraction produced zero evidence cells."""


class PipelineError(TabglsError):
    """A whole pipeline run aborted; carries transcripts gathered so far."""

    def __init__(self, message: str, transcripts=None):
        self.transcripts = list(transcripts or [])
        super().__init__(message)


class ConfigurationError(TabglsError):
    """Non-retryable setup problem (bad credentials, HTTP 4xx, bad config)."""


class TransportError(TabglsError):
    """Retryable transport-level failure when talking to a remote backend."""


class RateLimitError(TransportError):
    """Remote backend asked us to slow down; may carry a suggested delay."""

    def __init__(self, message: str, retry_after: float | None = None):
        self.retry_after = retry_after
        super().__init__(message)


class BackendError(TabglsError):
    """Backend could not serve a request (after retries, or queue exhausted)."""


class InputError(TabglsError):
    """A referenced input (e.g. an image file) could not be read."""


class ReconciliationError(TabglsError):
    """Prediction ids and gold ids do not line up."""

    def __init__(self, missing: list[str], extra: list[str]):
        self.missing = sorted(missing)
        self.extra = sorted(extra)
        parts = []
        if self.missing:
            parts.append(f"missing predictions for {self.missing}")
        if self.extra:
            parts.append(f"predictions without gold record: {self.extra}")
        super().__init__("; ".join(parts) or "id mismatch")


class DatasetError(TabglsError):
    """Dataset construction failed (e.g. skip rate over threshold)."""
