"""Reference analysis over NVD entries.

Ranks referenced domains by frequency, classifies them into a six-group
taxonomy (version control and bug trackers, mailing lists, patchnotes,
vendor advisories, third-party databases, blogs and social media), and
computes summary statistics used to pick scraping targets.

The taxonomy is config data, not code: see ``data/taxonomy.json``.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence
from urllib.parse import urlsplit

from .errors import EmptyInput
from .nvd import VulnEntry, lower_median, nearest_rank

log = logging.getLogger(__name__)

GROUP_NAMES = (
    "VcsBugTracker",
    "MailingList",
    "Patchnotes",
    "Advisory",
    "ThirdParty",
    "BlogSocial",
)
ORIGINS = ("User", "Vendor", "ThirdParty")


class InvalidUrl(ValueError):
    pass


class TaxonomyError(ValueError):
    """Taxonomy config file fails validation."""


@dataclass(frozen=True)
class DomainGroup:
    id: int
    name: str
    origin: str
    unique_rating: int
    uniform_rating: int
    abstract_text_rating: int

    def __post_init__(self) -> None:
        if not 1 <= self.id <= 6:
            raise TaxonomyError(f"group id {self.id} outside 1..6")
        if self.name not in GROUP_NAMES:
            raise TaxonomyError(f"unknown group name {self.name!r}")
        if self.origin not in ORIGINS:
            raise TaxonomyError(f"unknown origin {self.origin!r}")
        for label in ("unique_rating", "uniform_rating", "abstract_text_rating"):
            value = getattr(self, label)
            if not 1 <= value <= 5:
                raise TaxonomyError(f"{self.name}.{label}={value} outside 1..5")


@dataclass(frozen=True)
class DomainRecord:
    """One row of the frequency ranking.

    ``groups`` is None when the domain is not in the taxonomy (unclassified);
    classified records always carry a non-empty group set.
    """

    domain: str
    count: int
    groups: frozenset[int] | None = None
    available: bool | None = None

    def to_record(self) -> dict:
        return {
            "domain": self.domain,
            "count": self.count,
            "groups": sorted(self.groups) if self.groups is not None else None,
            "available": self.available,
        }


@dataclass(frozen=True)
class Taxonomy:
    groups: dict[int, DomainGroup]
    domains: dict[str, tuple[frozenset[int], bool]]

    def classify(self, domain: str) -> frozenset[int] | None:
        entry = self.domains.get(domain.lower())
        return entry[0] if entry else None

    def available(self, domain: str) -> bool | None:
        entry = self.domains.get(domain.lower())
        return entry[1] if entry else None


def load_taxonomy(path: str | Path | None = None) -> Taxonomy:
    """Load and validate the taxonomy config; defaults to the packaged table."""
    if path is None:
        raw = resources.files("cvsspredict.data").joinpath("taxonomy.json").read_text("utf-8")
    else:
        raw = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise TaxonomyError(f"invalid JSON: {exc}") from exc

    groups: dict[int, DomainGroup] = {}
    names_seen: set[str] = set()
    for item in doc.get("groups", []):
        group = DomainGroup(**item)
        if group.id in groups or group.name in names_seen:
            raise TaxonomyError(f"duplicate group {group.id}/{group.name}")
        groups[group.id] = group
        names_seen.add(group.name)

    domains: dict[str, tuple[frozenset[int], bool]] = {}
    for item in doc.get("domains", []):
        domain = item["domain"].lower()
        ids = frozenset(item["groups"])
        if not ids:
            raise TaxonomyError(f"{domain}: empty group set")
        if not ids <= groups.keys():
            raise TaxonomyError(f"{domain}: unknown group ids {sorted(ids - groups.keys())}")
        if domain in domains:
            raise TaxonomyError(f"duplicate domain {domain}")
        domains[domain] = (ids, bool(item.get("available", True)))
    return Taxonomy(groups=groups, domains=domains)


def extract_domain(url: str) -> str:
    """Hostname of an absolute URL, lowercased, port stripped.

    Subdomains are kept as-is: lists.debian.org and www.debian.org are
    different sources. Scheme-relative or bare paths are rejected.
    """
    try:
        parts = urlsplit(url)
        host = parts.hostname
    except ValueError as exc:
        raise InvalidUrl(f"{url!r}: {exc}") from exc
    if not parts.scheme or host is None or not host:
        raise InvalidUrl(f"{url!r} is not an absolute URL")
    return host


def classify_domain(domain: str, taxonomy: Taxonomy) -> frozenset[int] | None:
    """Group ids for a known domain, None when unclassified. Never empty."""
    return taxonomy.classify(domain)


def _domain_counter(entries: Iterable[VulnEntry]) -> Counter[str]:
    counts: Counter[str] = Counter()
    for entry in entries:
        for ref in entry.references:
            try:
                counts[extract_domain(ref.url)] += 1
            except InvalidUrl:
                log.warning("%s: skipping unattributable reference %r", entry.cve_id, ref.url)
    return counts


def rank_domains(
    entries: Sequence[VulnEntry],
    top_n: int,
    taxonomy: Taxonomy | None = None,
) -> list[DomainRecord]:
    """Top domains by reference count, ties broken lexicographically."""
    if not entries:
        raise EmptyInput("no entries to rank")
    if top_n < 1:
        raise ValueError(f"top_n must be >= 1, got {top_n}")
    counts = _domain_counter(entries)
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]
    return [
        DomainRecord(
            domain=domain,
            count=count,
            groups=taxonomy.classify(domain) if taxonomy else None,
            available=taxonomy.available(domain) if taxonomy else None,
        )
        for domain, count in ordered
    ]


@dataclass(frozen=True)
class RefStats:
    total_refs: int
    per_cve_median: int
    per_cve_p95: int
    distinct_domains: int
    top50_share: float

    def to_record(self) -> dict:
        return {
            "total_refs": self.total_refs,
            "per_cve_median": self.per_cve_median,
            "per_cve_p95": self.per_cve_p95,
            "distinct_domains": self.distinct_domains,
            "top50_share": round(self.top50_share, 4),
        }


def _stats_for(entries: Sequence[VulnEntry]) -> RefStats:
    per_cve = sorted(len(e.references) for e in entries)
    total = sum(per_cve)
    counts = _domain_counter(entries)
    top50 = sum(count for _, count in counts.most_common(50))
    return RefStats(
        total_refs=total,
        per_cve_median=lower_median(per_cve),
        per_cve_p95=nearest_rank(per_cve, 0.95),
        distinct_domains=len(counts),
        # Degenerate zero-reference inputs get share 0 by convention.
        top50_share=top50 / total if total else 0.0,
    )


def reference_stats(
    entries: Sequence[VulnEntry],
    by_year: bool = False,
) -> RefStats | dict[int, RefStats]:
    """Aggregate reference statistics, optionally grouped by published year.

    With ``by_year`` set, entries without a published date are left out of the
    breakdown.
    """
    if not entries:
        raise EmptyInput("no entries to summarize")
    if not by_year:
        return _stats_for(entries)
    buckets: dict[int, list[VulnEntry]] = {}
    for entry in entries:
        if entry.published is not None:
            buckets.setdefault(entry.published.year, []).append(entry)
    return {year: _stats_for(group) for year, group in sorted(buckets.items())}


def build_report(
    entries: Sequence[VulnEntry],
    taxonomy: Taxonomy,
    top_n: int = 30,
    by_year: bool = False,
) -> dict:
    """JSON-ready report: overall stats, domain ranking, per-group totals."""
    stats = reference_stats(entries)
    ranking = rank_domains(entries, top_n, taxonomy)

    per_group: Counter[int] = Counter()
    unclassified = 0
    for domain, count in _domain_counter(entries).items():
        ids = taxonomy.classify(domain)
        if ids is None:
            unclassified += count
        else:
            for gid in ids:
                per_group[gid] += count

    report = {
        "stats": stats.to_record(),
        "ranking": [record.to_record() for record in ranking],
        "group_totals": {
            str(gid): {"name": taxonomy.groups[gid].name, "refs": per_group.get(gid, 0)}
            for gid in sorted(taxonomy.groups)
        },
        "unclassified_refs": unclassified,
    }
    if by_year:
        yearly = reference_stats(entries, by_year=True)
        report["by_year"] = {str(year): s.to_record() for year, s in yearly.items()}
    return report


def render_table(report: dict) -> str:
    """Human-readable ranking table for stdout."""
    lines = ["  #  domain                             refs  groups      avail"]
    for pos, row in enumerate(report["ranking"], start=1):
        groups = "/".join(str(g) for g in row["groups"]) if row["groups"] else "-"
        avail = {True: "yes", False: "no", None: "?"}[row["available"]]
        lines.append(f"{pos:>3}  {row['domain']:<33} {row['count']:>5}  {groups:<10}  {avail}")
    stats = report["stats"]
    lines.append(
        f"total refs {stats['total_refs']}, distinct domains {stats['distinct_domains']}, "
        f"median/cve {stats['per_cve_median']}, p95/cve {stats['per_cve_p95']}, "
        f"top-50 share {stats['top50_share']:.2f}"
    )
    return "\n".join(lines)
