"""Command-line entry point: datagen / infer / eval / report workflows.

Configuration comes from an optional TOML file plus flag overrides (flags
win). Exit codes: 0 success, 1 usage or configuration problem, 2 data
problem, 3 backend problem.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import click

try:
    import tomllib  # Python 3.11+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import datagen as dg
from . import metrics as mx
from . import pipeline as pl
from .errors import (
    BackendError,
    ConfigurationError,
    DatasetError,
    InputError,
    ParseError,
    PipelineError,
    ReconciliationError,
    TabglsError,
)
from .formats import PlaceholderToken
from .gateway import Gateway, GoldDerivation, OracleBackend, RemoteBackend, ScriptedBackend

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3


@dataclass
class RunConfig:
    """Backend and run settings shared by the subcommands."""

    backend: str = "remote"
    endpoint: str = ""
    model_id: str = "default-model"
    api_key_env: str = "TABGLS_API_KEY"
    temperature: float = 0.0
    max_tokens: int = 1024
    concurrency: int = 8
    cache_dir: str = ""
    mode: str = "gls"
    retries: int = pl.DEFAULT_RETRIES
    empty_evidence_fallback: str = "cot"

    def __post_init__(self) -> None:
        if self.mode not in pl.MODES:
            raise ConfigurationError(f"mode must be one of {pl.MODES}, got {self.mode!r}")
        if self.concurrency < 1:
            raise ConfigurationError("concurrency must be >= 1")
        if self.backend not in ("remote", "scripted", "oracle"):
            raise ConfigurationError(f"unknown backend {self.backend!r}")
        if self.empty_evidence_fallback not in ("cot", "direct", ""):
            raise ConfigurationError(
                "empty_evidence_fallback must be 'cot', 'direct', or '' (hard fail)"
            )

    @classmethod
    def load(cls, config_path: str | None, **overrides) -> "RunConfig":
        values: dict = {}
        if config_path:
            with open(config_path, "rb") as fh:
                data = tomllib.load(fh)
            known = {f.name for f in dataclasses.fields(cls)}
            unknown = set(data) - known
            if unknown:
                raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
            values.update(data)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def _read_jsonl(path: str | Path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ParseError("jsonl", f"{path}:{lineno}: {exc.msg}", line=lineno)
    return records


def _build_gateway(config: RunConfig, scripted_path: str | None, golds_path: str | None) -> Gateway:
    if config.backend == "remote":
        if not config.endpoint:
            raise ConfigurationError("remote backend needs an endpoint URL")
        backend = RemoteBackend(config.endpoint, api_key_env=config.api_key_env)
    elif config.backend == "scripted":
        if not scripted_path:
            raise ConfigurationError("scripted backend needs --scripted <responses.jsonl>")
        items = []
        for record in _read_jsonl(scripted_path):
            usage = record.get("usage")
            if usage:
                items.append((record["text"], (usage.get("prompt_tokens", 0), usage["completion_tokens"])))
            else:
                items.append(record["text"])
        backend = ScriptedBackend(items)
    else:
        if not golds_path:
            raise ConfigurationError("oracle backend needs --golds <derivations.jsonl>")
        derivations = [GoldDerivation.from_record(r) for r in _read_jsonl(golds_path)]
        backend = OracleBackend(derivations)
    return Gateway(
        backend,
        model_id=config.model_id,
        temperature=config.temperature,
        max_tokens=config.max_tokens,
        cache_dir=config.cache_dir or None,
        concurrency=config.concurrency,
    )


@click.group()
def cli() -> None:
    """Alignment-data construction, staged table reasoning, and scoring."""


@cli.command("datagen")
@click.option("--corpus", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", required=True, type=int)
@click.option("--local-per-table", default=1, show_default=True, type=int)
@click.option("--placeholder", default=None, help="Override the anonymization token.")
@click.option("--strict-images", is_flag=True, help="Require referenced images to exist.")
@click.option("--skip-threshold", default=0.01, show_default=True, type=float)
def cmd_datagen(corpus, out, seed, local_per_table, placeholder, strict_images, skip_threshold):
    """Build alignment instances (3 kinds per table) from a corpus manifest."""
    try:
        token = PlaceholderToken(placeholder) if placeholder else None
    except ValueError as exc:
        raise ConfigurationError(str(exc))
    manifest = dg.build_dataset(
        dg.iter_corpus_entries(corpus),
        out,
        seed=seed,
        placeholder=token,
        local_per_table=local_per_table,
        skip_threshold=skip_threshold,
        strict_images=strict_images,
    )
    manifest_path = Path(out).with_suffix(Path(out).suffix + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest.to_dict(), indent=2) + "\n", encoding="utf-8")
    for kind in dg.KINDS:
        click.echo(f"{kind}: {manifest.per_kind.get(kind, 0)}")
    click.echo(
        f"tables: {manifest.total_tables}  instances: {manifest.total_instances}  "
        f"skipped: {manifest.skipped}"
    )


def _predict_one(gateway: Gateway, config: RunConfig, record: dict) -> dict:
    base = {"id": record["id"], "mode": config.mode}
    try:
        result = pl.run_pipeline(
            gateway,
            record.get("image"),
            record["question"],
            mode=config.mode,
            retries=config.retries,
            empty_evidence_fallback=config.empty_evidence_fallback or None,
        )
    except PipelineError as exc:
        usage = pl.total_usage(exc.transcripts)
        return {
            **base,
            "answer": "",
            "failed": True,
            "error": str(exc),
            "transcripts": [t.to_record() for t in exc.transcripts],
            "usage": dict(usage._asdict()) if usage else None,
        }
    usage = pl.total_usage(result.transcripts)
    out = {
        **base,
        "answer": result.answer.answer,
        "failed": False,
        "transcripts": [t.to_record() for t in result.transcripts],
        "usage": dict(usage._asdict()) if usage else None,
    }
    if result.meta:
        out["meta"] = result.meta
    return out


@cli.command("infer")
@click.option("--dataset", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--config", "config_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", default=None, type=click.Choice(pl.MODES))
@click.option("--backend", default=None, type=click.Choice(["remote", "scripted", "oracle"]))
@click.option("--golds", "golds_path", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Gold derivations for the oracle backend.")
@click.option("--scripted", "scripted_path", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Queued responses for the scripted backend.")
@click.option("--concurrency", default=None, type=int)
@click.option("--cache-dir", default=None, type=click.Path(file_okay=False))
def cmd_infer(dataset, out, config_path, mode, backend, golds_path, scripted_path, concurrency, cache_dir):
    """Run the reasoning pipeline over an eval dataset, writing predictions."""
    config = RunConfig.load(
        config_path, mode=mode, backend=backend, concurrency=concurrency, cache_dir=cache_dir
    )
    records = _read_jsonl(dataset)
    for lineno, record in enumerate(records, start=1):
        missing = {"id", "question"} - set(record)
        if missing:
            raise ParseError("jsonl", f"{dataset}:{lineno}: record lacks {sorted(missing)}")
    gateway = _build_gateway(config, scripted_path, golds_path)
    failures = 0
    with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
        results = list(pool.map(lambda r: _predict_one(gateway, config, r), records))
    with open(out, "w", encoding="utf-8") as fh:
        for result in results:  # input order, regardless of completion order
            failures += int(result["failed"])
            fh.write(json.dumps(result, ensure_ascii=False) + "\n")
    click.echo(f"predictions: {len(results)}  failures: {failures}")


@cli.command("eval")
@click.option("--preds", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--golds", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Report base path; writes <out>.json and <out>.txt.")
def cmd_eval(preds, golds, out):
    """Score a prediction file against gold records."""
    predictions = _read_jsonl(preds)
    gold_records = [mx.GoldRecord.from_record(r) for r in _read_jsonl(golds)]
    report = mx.aggregate(predictions, gold_records)
    Path(out + ".json").write_text(
        json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    Path(out + ".txt").write_text(report.to_text() + "\n", encoding="utf-8")
    click.echo(report.to_text())


@cli.command("report")
@click.option("--report", "report_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="A report JSON produced by `tabgls eval`.")
def cmd_report(report_path):
    """Render a stored report JSON as an aligned text table."""
    data = json.loads(Path(report_path).read_text(encoding="utf-8"))
    lines = [f"{'task':<10} {'metric':<14} {'score':>8} {'n':>6}"]
    for task, scores in sorted(data.get("per_task", {}).items()):
        n = scores.get("n", 0)
        for name, value in sorted(scores.items()):
            if name == "n":
                continue
            lines.append(f"{task:<10} {name:<14} {value:>8.4f} {n:>6}")
    if data.get("overall") is not None:
        lines.append(f"{'overall':<10} {'':<14} {data['overall']:>8.4f} {'':>6}")
    for mode, value in sorted(data.get("token_stats", {}).items()):
        lines.append(f"{'tokens':<10} {mode:<14} {value:>8.2f} {'':>6}")
    click.echo("\n".join(lines))


def main(argv: list[str] | None = None) -> int:
    """Entry point with documented exit codes."""
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cli.main(args=argv, standalone_mode=False)
        return EXIT_OK
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except ConfigurationError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        return EXIT_USAGE
    except (ParseError, DatasetError, ReconciliationError, InputError, OSError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return EXIT_DATA
    except BackendError as exc:
        click.echo(f"backend error: {exc}", err=True)
        return EXIT_BACKEND
    except TabglsError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
