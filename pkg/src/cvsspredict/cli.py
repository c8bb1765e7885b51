"""Command-line pipeline driver.

Each subcommand is one pipeline stage that reads and writes plain JSONL/JSON
artifacts, so stages can be rerun, diffed, and composed from the shell. An
optional JSON config file supplies defaults and flags win over it. Logs go
to stderr, artifacts to their configured paths. Run-varying metadata such as
fetch timestamps lives in sidecar files, so re-running a stage over unchanged
inputs rewrites every primary artifact byte for byte.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import sys
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping

import click

from . import classify, dataset, evaluate, nvd, refs
from .dataset import SOURCE_FILTERS
from .errors import EmptyInput
from .jsonl import read_json, read_jsonl, write_json, write_jsonl
from .scraper.crawl import ScrapedText, plan_crawl, run_crawl, yield_report
from .scraper.extract import load_scraper_config
from .scraper.fetch import (
    DEFAULT_AGENT,
    BrowserFetcher,
    FetchError,
    FixtureFetcher,
    LiveHttpFetcher,
)

log = logging.getLogger(__name__)

STAGES = (
    "ingest",
    "analyze-refs",
    "scrape",
    "build-dataset",
    "train",
    "predict",
    "evaluate",
)

_SIDES = ("train", "test", "all")


class MissingArtifact(click.ClickException):
    """An input artifact required by the stage does not exist."""

    exit_code = 2


class ConfigError(click.ClickException):
    """Bad config file contents or an out-of-range knob."""

    exit_code = 2


@dataclasses.dataclass
class PipelineConfig:
    """Paths and knobs shared by the pipeline stages.

    Path defaults are relative to the working directory; a config file can
    relocate everything while individual flags override single values.
    """

    feeds: tuple[str, ...] = ()
    v3_only: bool = False
    entries: str = "entries.jsonl"

    taxonomy: str | None = None
    refs_report: str = "refs-report.json"
    top_domains: int = 30
    by_year: bool = False

    extractors: str | None = None
    fixtures_dir: str | None = None
    domains: tuple[str, ...] = ()
    scraped: str = "scraped.jsonl"
    workers: int = 5
    timeout: float = 20.0
    agent: str = DEFAULT_AGENT

    sources: str = "all"
    ratio: float = 0.75
    seed: int = 0
    corpus: str = "corpus.jsonl"
    manifest: str = "split.json"

    min_token_count: int = 2
    models_dir: str = "models"
    side: str = "test"
    predictions: str = "predictions.jsonl"
    eval_report: str = "eval-report.json"

    def validate(self) -> None:
        def require_int(name: str, value: object, minimum: int) -> None:
            if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
                raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}")

        require_int("workers", self.workers, 1)
        require_int("top_domains", self.top_domains, 1)
        require_int("min_token_count", self.min_token_count, 1)
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        if not isinstance(self.timeout, (int, float)) or isinstance(self.timeout, bool) \
                or self.timeout <= 0:
            raise ConfigError(f"timeout must be a positive number, got {self.timeout!r}")
        if not isinstance(self.ratio, (int, float)) or isinstance(self.ratio, bool) \
                or not 0 < self.ratio < 1:
            raise ConfigError(f"ratio must be in (0, 1), got {self.ratio!r}")
        if self.sources not in SOURCE_FILTERS:
            raise ConfigError(
                f"sources must be one of {', '.join(SOURCE_FILTERS)}, got {self.sources!r}"
            )
        if self.side not in _SIDES:
            raise ConfigError(f"side must be one of {', '.join(_SIDES)}, got {self.side!r}")


_FIELD_NAMES = {field.name for field in dataclasses.fields(PipelineConfig)}
_TUPLE_FIELDS = {"feeds", "domains"}


def build_config(
    file_values: Mapping[str, object],
    overrides: Mapping[str, object] | None = None,
) -> PipelineConfig:
    """Merge config-file values with flag overrides; flags win."""
    unknown = sorted(set(file_values) - _FIELD_NAMES)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    merged: dict = dict(file_values)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in _TUPLE_FIELDS and value == ():
            continue
        merged[key] = value
    for key in _TUPLE_FIELDS & set(merged):
        raw = merged[key]
        if isinstance(raw, str):
            raw = [raw]
        merged[key] = tuple(
            part.strip() for item in raw for part in str(item).split(",") if part.strip()
        )
    try:
        config = PipelineConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    config.validate()
    return config


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    file_path = Path(path)
    if not file_path.exists():
        raise MissingArtifact(f"config file not found: {file_path}")
    try:
        doc = read_json(file_path)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {file_path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {file_path} must hold a JSON object")
    return doc


def _require(path: str | Path | None, what: str) -> Path:
    if path is None:
        raise ConfigError(f"no {what} configured")
    resolved = Path(path)
    if not resolved.exists():
        raise MissingArtifact(f"{what} not found: {resolved}")
    return resolved


def _derived_path(primary: str, tag: str, ext: str) -> str:
    base = Path(primary)
    return str(base.with_name(f"{base.stem}-{tag}{ext}"))


def stage_ingest(config: PipelineConfig) -> dict:
    if not config.feeds:
        raise ConfigError("no feed files configured; pass --feed or set 'feeds'")
    paths = [_require(p, "feed file") for p in config.feeds]
    entries = nvd.load_feed_files(paths)
    if config.v3_only:
        entries = nvd.filter_v3(entries)
    count = nvd.write_entries(config.entries, entries)
    scored = sum(1 for entry in entries if entry.gt_vector is not None)
    log.info(
        "ingest: wrote %d entries (%d with ground-truth vectors) to %s",
        count, scored, config.entries,
    )
    return {"path": config.entries, "entries": count, "with_ground_truth": scored}


def stage_analyze_refs(config: PipelineConfig) -> dict:
    entries = list(nvd.read_entries(_require(config.entries, "entries file")))
    if config.taxonomy is not None:
        _require(config.taxonomy, "taxonomy file")
    taxonomy = refs.load_taxonomy(config.taxonomy)
    report = refs.build_report(
        entries, taxonomy, top_n=config.top_domains, by_year=config.by_year
    )
    write_json(config.refs_report, report)
    log.info(
        "analyze-refs: %d references over %d distinct domains; report at %s",
        report["stats"]["total_refs"],
        report["stats"]["distinct_domains"],
        config.refs_report,
    )
    return {"path": config.refs_report, "report": report}


def stage_scrape(config: PipelineConfig) -> dict:
    entries = list(nvd.read_entries(_require(config.entries, "entries file")))
    if config.extractors is not None:
        _require(config.extractors, "extractor config")
    scraper_config = load_scraper_config(config.extractors)
    jobs = plan_crawl(entries, config.domains or None, scraper_config.registry)
    if config.fixtures_dir is not None:
        root = _require(config.fixtures_dir, "fixtures directory")
        fetchers: object = FixtureFetcher(root)
    else:
        fetchers = {
            "http": LiveHttpFetcher(config.agent),
            "browser": BrowserFetcher(),
        }
    outcome = run_crawl(
        jobs,
        fetchers,
        scraper_config,
        workers=config.workers,
        timeout=config.timeout,
        agent=config.agent,
    ).sorted()

    texts_path = config.scraped
    failures_path = _derived_path(texts_path, "failures", ".jsonl")
    report_path = _derived_path(texts_path, "report", ".json")
    meta_path = _derived_path(texts_path, "meta", ".json")
    write_jsonl(texts_path, (text.to_record() for text in outcome.texts))
    write_jsonl(failures_path, (failure.to_record() for failure in outcome.failures))
    report = yield_report([*outcome.texts, *outcome.failures], jobs)
    write_json(report_path, report)
    # Sidecar: the one artifact allowed to vary between identical runs.
    write_json(meta_path, {
        "agent": config.agent,
        "generated_at": datetime.now(timezone.utc).isoformat(),
        "pages": {
            text.url: {"fetched_at": text.fetched_at, "via_rewrite": text.via_rewrite}
            for text in outcome.texts
        },
        "workers": config.workers,
    })
    log.info(
        "scrape: crawled %d/%d pages (%d failures); texts at %s",
        len(outcome.texts), len(jobs), len(outcome.failures), texts_path,
    )
    return {
        "path": texts_path,
        "failures_path": failures_path,
        "report_path": report_path,
        "meta_path": meta_path,
        "texts": len(outcome.texts),
        "failures": len(outcome.failures),
        "report": report,
    }


def stage_build_dataset(config: PipelineConfig) -> dict:
    entries = list(nvd.read_entries(_require(config.entries, "entries file")))
    scraped: list[ScrapedText] = []
    if config.sources == "all":
        scraped_path = _require(config.scraped, "scraped texts file")
        scraped = [ScrapedText.from_record(r) for r in read_jsonl(scraped_path)]
    build = dataset.build_corpus(entries, scraped, sources=config.sources)
    count = dataset.write_corpus(config.corpus, build.examples)
    manifest = dataset.grouped_split(build.examples, ratio=config.ratio, seed=config.seed)
    dataset.write_manifest(config.manifest, manifest)
    log.info(
        "build-dataset: %d examples (%d scraped texts lacked ground truth); "
        "%d train / %d test groups",
        count, build.orphan_count, len(manifest.train), len(manifest.test),
    )
    return {
        "path": config.corpus,
        "manifest_path": config.manifest,
        "examples": count,
        "orphaned": build.orphan_count,
        "train_groups": len(manifest.train),
        "test_groups": len(manifest.test),
    }


def stage_train(config: PipelineConfig) -> dict:
    corpus = dataset.read_corpus(_require(config.corpus, "corpus file"))
    manifest = dataset.read_manifest(_require(config.manifest, "split manifest"))
    train, _ = dataset.split_examples(corpus, manifest)
    if not train:
        raise classify.EmptyTrainingSet("the manifest assigns no examples to the train side")
    models = classify.fit_all(
        train, classify.FitConfig(min_token_count=config.min_token_count)
    )
    classify.save_models(config.models_dir, models)
    log.info(
        "train: fit %d component models on %d examples; saved to %s",
        len(models), len(train), config.models_dir,
    )
    return {
        "path": config.models_dir,
        "train_examples": len(train),
        "vocabulary_sizes": {c: m.vocabulary_size for c, m in models.items()},
    }


def stage_predict(config: PipelineConfig) -> dict:
    corpus = dataset.read_corpus(_require(config.corpus, "corpus file"))
    manifest = dataset.read_manifest(_require(config.manifest, "split manifest"))
    models = classify.load_models(_require(config.models_dir, "models directory"))
    train, test = dataset.split_examples(corpus, manifest)
    selected = {"train": train, "test": test, "all": list(corpus)}[config.side]
    if not selected:
        raise EmptyInput(f"no examples on the {config.side!r} side to predict")
    records = classify.predict_records(models, selected)
    count = classify.write_predictions(config.predictions, records)
    log.info(
        "predict: wrote %d rows for %d examples to %s",
        count, len(selected), config.predictions,
    )
    return {"path": config.predictions, "rows": count, "examples": len(selected)}


def stage_evaluate(config: PipelineConfig) -> dict:
    corpus = dataset.read_corpus(_require(config.corpus, "corpus file"))
    manifest = dataset.read_manifest(_require(config.manifest, "split manifest"))
    predictions = classify.read_predictions(_require(config.predictions, "predictions file"))
    report = evaluate.evaluate_run(manifest, corpus, predictions)
    write_json(config.eval_report, report.to_record())
    log.info(
        "evaluate: %d test examples scored; report at %s",
        report.test_examples, config.eval_report,
    )
    return {"path": config.eval_report, "report": report}


_STAGE_FUNCS = {
    "ingest": stage_ingest,
    "analyze-refs": stage_analyze_refs,
    "scrape": stage_scrape,
    "build-dataset": stage_build_dataset,
    "train": stage_train,
    "predict": stage_predict,
    "evaluate": stage_evaluate,
}


def run_stage(stage: str, config: PipelineConfig) -> dict:
    """Programmatic entry point: run one stage under a prebuilt config."""
    try:
        func = _STAGE_FUNCS[stage]
    except KeyError:
        raise ConfigError(
            f"unknown stage {stage!r}; expected one of: {', '.join(STAGES)}"
        ) from None
    config.validate()
    return func(config)


@contextmanager
def _stage_errors(stage: str):
    """Present domain errors as clean CLI failures with the stage named."""
    try:
        yield
    except click.ClickException:
        raise
    except (EmptyInput, ValueError, KeyError, ArithmeticError, FetchError, OSError,
            evaluate.MissingPrediction, evaluate.UnknownExample) as exc:
        detail = exc.args[0] if exc.args else str(exc)
        raise click.ClickException(f"{stage}: {detail}") from exc


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_path", type=str, default=None,
              help="JSON file with default option values; flags win over it.")
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
@click.option("-q", "--quiet", is_flag=True, help="Log warnings only.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None, verbose: bool, quiet: bool) -> None:
    """Vulnerability-text pipeline: feeds to scraped corpus to scored predictions."""
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        stream=sys.stderr, level=level, force=True,
        format="%(levelname)s %(name)s: %(message)s",
    )
    ctx.obj = {"file_config": _load_config_file(config_path)}


def _config(ctx: click.Context, **overrides) -> PipelineConfig:
    file_values = (ctx.obj or {}).get("file_config", {})
    return build_config(file_values, overrides)


@main.command("ingest")
@click.option("--feed", "feeds", multiple=True,
              help="NVD JSON feed file (.json or .json.gz); repeatable.")
@click.option("--out", "entries", default=None, help="Entries JSONL to write.")
@click.option("--v3-only", "v3_only", is_flag=True, default=None,
              help="Keep only entries carrying a ground-truth vector.")
@click.pass_context
def ingest_cmd(ctx: click.Context, **flags) -> None:
    """Parse NVD feed files into one entries JSONL."""
    config = _config(ctx, **flags)
    with _stage_errors("ingest"):
        stage_ingest(config)


@main.command("analyze-refs")
@click.option("--entries", default=None, help="Entries JSONL to read.")
@click.option("--taxonomy", default=None, help="Domain taxonomy JSON (bundled default).")
@click.option("--out", "refs_report", default=None, help="Report JSON to write.")
@click.option("--top", "top_domains", type=int, default=None,
              help="How many domains to rank.")
@click.option("--by-year", "by_year", is_flag=True, default=None,
              help="Add a per-year stats breakdown.")
@click.pass_context
def analyze_refs_cmd(ctx: click.Context, **flags) -> None:
    """Rank referenced domains and summarize reference statistics."""
    config = _config(ctx, **flags)
    with _stage_errors("analyze-refs"):
        result = stage_analyze_refs(config)
    click.echo(refs.render_table(result["report"]))


@main.command("scrape")
@click.option("--entries", default=None, help="Entries JSONL to read.")
@click.option("--out", "scraped", default=None,
              help="Scraped texts JSONL; failures/report/meta land next to it.")
@click.option("--extractors", default=None, help="Extractor config JSON (bundled default).")
@click.option("--fixtures-dir", "fixtures_dir", default=None,
              help="Serve pages from this archive instead of the network.")
@click.option("--domains", multiple=True,
              help="Restrict to these domains (repeatable or comma-separated).")
@click.option("--workers", type=int, default=None, help="Worker pool size.")
@click.option("--timeout-secs", "timeout", type=float, default=None,
              help="Per-request timeout in seconds.")
@click.option("--agent", default=None, help="User-agent string to present.")
@click.pass_context
def scrape_cmd(ctx: click.Context, **flags) -> None:
    """Crawl advisory pages for the configured domains and extract texts."""
    config = _config(ctx, **flags)
    with _stage_errors("scrape"):
        stage_scrape(config)


@main.command("build-dataset")
@click.option("--entries", default=None, help="Entries JSONL to read.")
@click.option("--scraped", default=None, help="Scraped texts JSONL to join in.")
@click.option("--sources", type=click.Choice(SOURCE_FILTERS), default=None,
              help="Which texts become examples.")
@click.option("--ratio", type=float, default=None, help="Train fraction target.")
@click.option("--seed", type=int, default=None, help="Split shuffle seed.")
@click.option("--corpus-out", "corpus", default=None, help="Corpus JSONL to write.")
@click.option("--manifest-out", "manifest", default=None, help="Split manifest JSON to write.")
@click.pass_context
def build_dataset_cmd(ctx: click.Context, **flags) -> None:
    """Assemble the labeled corpus and a grouped train/test manifest."""
    config = _config(ctx, **flags)
    with _stage_errors("build-dataset"):
        stage_build_dataset(config)


@main.command("train")
@click.option("--corpus", default=None, help="Corpus JSONL to read.")
@click.option("--manifest", default=None, help="Split manifest JSON to read.")
@click.option("--models-dir", "models_dir", default=None, help="Directory for model files.")
@click.option("--min-token-count", "min_token_count", type=int, default=None,
              help="Prune tokens seen fewer times than this.")
@click.pass_context
def train_cmd(ctx: click.Context, **flags) -> None:
    """Fit the per-component baseline models on the train side."""
    config = _config(ctx, **flags)
    with _stage_errors("train"):
        stage_train(config)


@main.command("predict")
@click.option("--corpus", default=None, help="Corpus JSONL to read.")
@click.option("--manifest", default=None, help="Split manifest JSON to read.")
@click.option("--models-dir", "models_dir", default=None, help="Directory holding model files.")
@click.option("--side", type=click.Choice(_SIDES), default=None,
              help="Which split side to predict.")
@click.option("--out", "predictions", default=None, help="Prediction JSONL to write.")
@click.pass_context
def predict_cmd(ctx: click.Context, **flags) -> None:
    """Write per-component prediction rows for the selected split side."""
    config = _config(ctx, **flags)
    with _stage_errors("predict"):
        stage_predict(config)


@main.command("evaluate")
@click.option("--corpus", default=None, help="Corpus JSONL to read.")
@click.option("--manifest", default=None, help="Split manifest JSON to read.")
@click.option("--predictions", default=None, help="Prediction JSONL to read.")
@click.option("--out", "eval_report", default=None, help="Report JSON to write.")
@click.pass_context
def evaluate_cmd(ctx: click.Context, **flags) -> None:
    """Score predictions against the test side and print the report."""
    config = _config(ctx, **flags)
    with _stage_errors("evaluate"):
        result = stage_evaluate(config)
    click.echo(evaluate.render_report(result["report"]))


if __name__ == "__main__":
    main()
