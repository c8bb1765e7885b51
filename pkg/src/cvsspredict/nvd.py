"""NVD JSON feed ingestion.

Loads the yearly CVE feeds (JSON schema 1.1, optionally gzipped) into plain
entry records, keeps only base-metric ground truth we can score against, and
computes descriptive length statistics over description texts.

This module is the only place that knows the feed layout; everything
downstream works on :class:`VulnEntry`.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .cvss import CvssVector, VectorError, compute_base_score, parse_vector
from .errors import EmptyInput
from .jsonl import dump_line, open_maybe_gzip, read_jsonl

log = logging.getLogger(__name__)

CVE_ID_RE = re.compile(r"^CVE-\d{4}-\d{4,}$")

# NVD marks withdrawn entries by prefixing the description instead of a flag.
REJECT_MARKER = "** REJECT **"


class SchemaError(ValueError):
    """Feed document does not look like NVD JSON schema 1.1."""


class EncodingError(ValueError):
    """Feed file is not valid UTF-8."""


@dataclass(frozen=True)
class Reference:
    url: str
    tags: tuple[str, ...] = ()


@dataclass(frozen=True)
class VulnEntry:
    """One CVE entry reduced to what the pipeline needs."""

    cve_id: str
    description: str
    references: tuple[Reference, ...] = ()
    gt_vector: CvssVector | None = None
    gt_score: float | None = None
    published: date | None = None

    def __post_init__(self) -> None:
        if not CVE_ID_RE.match(self.cve_id):
            raise SchemaError(f"bad CVE id {self.cve_id!r}")

    @property
    def has_ground_truth(self) -> bool:
        return self.gt_vector is not None


def _first_english_description(cve_obj: dict) -> str:
    try:
        data = cve_obj["description"]["description_data"]
    except (KeyError, TypeError) as exc:
        raise SchemaError("entry missing description block") from exc
    if not data:
        raise SchemaError("entry has empty description list")
    for item in data:
        if item.get("lang") == "en":
            return item.get("value", "")
    # No English text at all; fall back to the first entry rather than drop.
    return data[0].get("value", "")


def _parse_references(cve_obj: dict) -> tuple[Reference, ...]:
    data = cve_obj.get("references", {}).get("reference_data", [])
    refs = []
    for item in data:
        url = item.get("url")
        if not url:
            continue
        refs.append(Reference(url=url, tags=tuple(item.get("tags", []))))
    return tuple(refs)


def _parse_published(item: dict) -> date | None:
    raw = item.get("publishedDate")
    if not raw:
        return None
    # Feed format is "YYYY-MM-DDTHH:MMZ"; only the day matters here.
    try:
        return date.fromisoformat(raw[:10])
    except ValueError as exc:
        raise SchemaError(f"bad publishedDate {raw!r}") from exc


def _parse_ground_truth(item: dict, cve_id: str) -> tuple[CvssVector | None, float | None]:
    metric = item.get("impact", {}).get("baseMetricV3")
    if not metric:
        return None, None
    cvss = metric.get("cvssV3", {})
    raw_vector = cvss.get("vectorString")
    if not raw_vector:
        return None, None
    try:
        vector = parse_vector(raw_vector)
    except VectorError as exc:
        log.warning("%s: unparseable vector %r (%s); treating as unscored", cve_id, raw_vector, exc)
        return None, None
    score = cvss.get("baseScore")
    if score is not None:
        computed = compute_base_score(vector).base_score
        if abs(computed - float(score)) > 0.1:
            log.warning(
                "%s: feed score %s disagrees with recomputed %s for %s",
                cve_id, score, computed, vector.serialize(),
            )
    return vector, None if score is None else float(score)


def load_feed(doc: dict) -> list[VulnEntry]:
    """Convert one parsed feed document into entries.

    Entries flagged as rejected/withdrawn are dropped. Ground-truth metrics are
    kept only when the vector string parses as CVSS v3.x base metrics.
    """
    if not isinstance(doc, dict) or "CVE_Items" not in doc:
        raise SchemaError("document has no CVE_Items")
    entries: list[VulnEntry] = []
    for item in doc["CVE_Items"]:
        try:
            cve_obj = item["cve"]
            cve_id = cve_obj["CVE_data_meta"]["ID"]
        except (KeyError, TypeError) as exc:
            raise SchemaError("item missing cve.CVE_data_meta.ID") from exc
        description = _first_english_description(cve_obj)
        if description.startswith(REJECT_MARKER):
            continue
        vector, score = _parse_ground_truth(item, cve_id)
        entries.append(
            VulnEntry(
                cve_id=cve_id,
                description=description,
                references=_parse_references(cve_obj),
                gt_vector=vector,
                gt_score=score,
                published=_parse_published(item),
            )
        )
    return entries


def load_feed_file(path: str | Path) -> list[VulnEntry]:
    """Load one ``nvdcve-1.1-*.json`` file, gzipped or plain."""
    try:
        with open_maybe_gzip(path) as fh:
            doc = json.load(fh)
    except UnicodeDecodeError as exc:
        raise EncodingError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    return load_feed(doc)


def load_feed_files(paths: Iterable[str | Path]) -> list[VulnEntry]:
    entries: list[VulnEntry] = []
    for path in paths:
        entries.extend(load_feed_file(path))
    return entries


def filter_v3(entries: Iterable[VulnEntry]) -> list[VulnEntry]:
    """Keep only entries that carry v3 ground truth, preserving order."""
    return [e for e in entries if e.has_ground_truth]


# --------------------------------------------------------------------------
# Length statistics


@dataclass(frozen=True)
class CorpusStats:
    """Descriptive statistics over a set of text lengths (Unicode scalars)."""

    count: int
    mean_len: float
    median_len: int
    min_len: int
    max_len: int
    p95_len: int
    histogram: tuple[tuple[int, int], ...] = field(default=())

    def to_record(self) -> dict:
        return {
            "count": self.count,
            "mean_len": round(self.mean_len, 2),
            "median_len": self.median_len,
            "min_len": self.min_len,
            "max_len": self.max_len,
            "p95_len": self.p95_len,
            "histogram": [list(pair) for pair in self.histogram],
        }


def nearest_rank(sorted_vals: Sequence[int], q: float) -> int:
    """Nearest-rank percentile; returns an observed value, never interpolated."""
    rank = max(1, math.ceil(q * len(sorted_vals)))
    return sorted_vals[rank - 1]


def lower_median(sorted_vals: Sequence[int]) -> int:
    """Median as the lower middle element for even-sized inputs."""
    return sorted_vals[(len(sorted_vals) - 1) // 2]


def length_stats(lengths: Sequence[int], bucket_width: int = 100) -> CorpusStats:
    """Stats over raw lengths. Median is the lower middle for even counts."""
    if not lengths:
        raise EmptyInput("no lengths to summarize")
    ordered = sorted(lengths)
    n = len(ordered)
    buckets: dict[int, int] = {}
    for value in ordered:
        start = (value // bucket_width) * bucket_width
        buckets[start] = buckets.get(start, 0) + 1
    return CorpusStats(
        count=n,
        mean_len=sum(ordered) / n,
        median_len=lower_median(ordered),
        min_len=ordered[0],
        max_len=ordered[-1],
        p95_len=nearest_rank(ordered, 0.95),
        histogram=tuple(sorted(buckets.items())),
    )


def description_stats(entries: Sequence[VulnEntry], bucket_width: int = 100) -> CorpusStats:
    if not entries:
        raise EmptyInput("no entries to summarize")
    return length_stats([len(e.description) for e in entries], bucket_width)


# --------------------------------------------------------------------------
# JSONL persistence


def entry_to_record(entry: VulnEntry) -> dict:
    return {
        "cve_id": entry.cve_id,
        "description": entry.description,
        "vector": entry.gt_vector.serialize() if entry.gt_vector else None,
        "score": entry.gt_score,
        "references": [{"url": r.url, "tags": list(r.tags)} for r in entry.references],
        "published": entry.published.isoformat() if entry.published else None,
    }


def entry_from_record(record: dict) -> VulnEntry:
    try:
        vector = parse_vector(record["vector"]) if record.get("vector") else None
        return VulnEntry(
            cve_id=record["cve_id"],
            description=record["description"],
            references=tuple(
                Reference(url=r["url"], tags=tuple(r.get("tags", ())))
                for r in record.get("references", ())
            ),
            gt_vector=vector,
            gt_score=record.get("score"),
            published=date.fromisoformat(record["published"]) if record.get("published") else None,
        )
    except (KeyError, TypeError, ValueError, VectorError) as exc:
        raise SchemaError(f"bad entry record: {exc}") from exc


def write_entries(path: str | Path, entries: Iterable[VulnEntry]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with path.open("w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(dump_line(entry_to_record(entry)) + "\n")
            n += 1
    return n


def read_entries(path: str | Path) -> Iterator[VulnEntry]:
    for record in read_jsonl(path):
        yield entry_from_record(record)
