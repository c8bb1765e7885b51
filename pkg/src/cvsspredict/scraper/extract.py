"""Declarative per-domain text extraction.

Each target domain ships a small config describing where the
vulnerability-specific text lives, instead of code: selectors for the content,
selectors for boilerplate to strip, denylist phrases that must never survive
into output, and an anchoring mode. ``single`` pages carry one vulnerability;
``anchored`` pages (monthly bulletins and similar) carry many, and text is
taken only from the row anchored to the requested CVE id. A page that cannot
be anchored to the job's CVE yields ExtractorMiss, never mixed-CVE text.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from urllib.parse import urlsplit

from .htmlsel import Element, parse_html, select

DEFAULT_MIN_LEN = 32

# Tags treated as one output line each during text assembly.
BLOCK_TAGS = frozenset(
    ["p", "li", "dt", "dd", "td", "th", "pre", "blockquote",
     "h1", "h2", "h3", "h4", "h5", "h6"]
)


class ExtractorMiss(Exception):
    """Page fetched fine but no usable anchored text for this CVE."""


class UnknownExtractor(KeyError):
    pass


class ConfigError(ValueError):
    """Extractor config file fails validation."""


def _leaf_blocks(el: Element) -> list[Element]:
    blocks = [
        b for b in el.iter_elements()
        if b.tag in BLOCK_TAGS and not any(d.tag in BLOCK_TAGS for d in b.iter_elements())
    ]
    return blocks or [el]


def _lines_of(el: Element) -> list[str]:
    lines = []
    for block in _leaf_blocks(el):
        text = block.text()
        if text:
            lines.append(text)
    return lines


@dataclass(frozen=True)
class DomainExtractor:
    id: str
    domains: tuple[str, ...]
    mode: str = "single"  # single | anchored
    render: str = "http"  # http | browser
    text_selectors: tuple[str, ...] = ()
    strip_selectors: tuple[str, ...] = ()
    deny_markers: tuple[str, ...] = ()  # stored lowercased
    row_selector: str = ""
    row_text_selector: str = ""
    min_len: int = DEFAULT_MIN_LEN

    def __post_init__(self) -> None:
        if self.mode not in ("single", "anchored"):
            raise ConfigError(f"{self.id}: unknown mode {self.mode!r}")
        if self.render not in ("http", "browser"):
            raise ConfigError(f"{self.id}: unknown render {self.render!r}")
        if not self.domains:
            raise ConfigError(f"{self.id}: no domains")
        if self.mode == "single" and not self.text_selectors:
            raise ConfigError(f"{self.id}: single mode needs text_selectors")
        if self.mode == "anchored" and not self.row_selector:
            raise ConfigError(f"{self.id}: anchored mode needs row_selector")
        if self.min_len < 1:
            raise ConfigError(f"{self.id}: min_len must be >= 1")

    def extract(self, html: str, cve_id: str) -> str:
        tree = parse_html(html)
        for selector in self.strip_selectors:
            for el in select(tree, selector):
                el.detach()
        if self.mode == "single":
            lines = self._extract_single(tree, cve_id)
        else:
            lines = self._extract_anchored(tree, cve_id)
        lines = self._apply_denylist(lines)
        text = "\n".join(lines)
        if len(text) < self.min_len:
            raise ExtractorMiss(
                f"{cve_id}: extracted text below minimum length "
                f"({len(text)} < {self.min_len})"
            )
        return text

    def _extract_single(self, tree: Element, cve_id: str) -> list[str]:
        if cve_id not in tree.text():
            raise ExtractorMiss(f"{cve_id} not found on page")
        for selector in self.text_selectors:
            nodes = select(tree, selector)
            lines = [line for node in nodes for line in _lines_of(node)]
            if lines:
                return lines
        raise ExtractorMiss(f"{cve_id}: no selector matched any content")

    def _extract_anchored(self, tree: Element, cve_id: str) -> list[str]:
        rows = [row for row in select(tree, self.row_selector) if cve_id in row.text()]
        if not rows:
            raise ExtractorMiss(f"{cve_id} not found in any anchored row")
        lines: list[str] = []
        for row in rows:
            cells = select(row, self.row_text_selector) if self.row_text_selector else [row]
            for cell in cells:
                lines.extend(_lines_of(cell))
        if not lines:
            raise ExtractorMiss(f"{cve_id}: anchored row has no text")
        return lines

    def _apply_denylist(self, lines: list[str]) -> list[str]:
        if not self.deny_markers:
            return lines
        kept = []
        for line in lines:
            low = line.lower()
            if any(marker in low for marker in self.deny_markers):
                continue
            kept.append(line)
        # The line filter must have removed every occurrence; a marker inside
        # a surviving line means the config is wrong for this page shape.
        for line in kept:
            low = line.lower()
            for marker in self.deny_markers:
                if marker in low:  # pragma: no cover - guarded above per line
                    raise ExtractorMiss(f"boilerplate marker {marker!r} survived extraction")
        return kept


@dataclass(frozen=True)
class RewriteRule:
    """URL correction for domains that changed their scheme over time."""

    domain: str
    pattern: str
    replacement: str

    def apply(self, url: str) -> str | None:
        if (urlsplit(url).hostname or "") != self.domain:
            return None
        rewritten = re.sub(self.pattern, self.replacement, url)
        if rewritten == url:
            return None
        parts = urlsplit(rewritten)
        if not parts.scheme or not parts.hostname:
            raise ConfigError(f"rewrite of {url!r} produced invalid URL {rewritten!r}")
        return rewritten


class ExtractorRegistry:
    def __init__(self, extractors: list[DomainExtractor]):
        self.by_id: dict[str, DomainExtractor] = {}
        self.by_domain: dict[str, DomainExtractor] = {}
        for extractor in extractors:
            if extractor.id in self.by_id:
                raise ConfigError(f"duplicate extractor id {extractor.id}")
            self.by_id[extractor.id] = extractor
            for domain in extractor.domains:
                domain = domain.lower()
                if domain in self.by_domain:
                    raise ConfigError(f"domain {domain} claimed twice")
                self.by_domain[domain] = extractor

    @property
    def domains(self) -> frozenset[str]:
        return frozenset(self.by_domain)

    def get(self, extractor_id: str) -> DomainExtractor:
        try:
            return self.by_id[extractor_id]
        except KeyError:
            raise UnknownExtractor(extractor_id) from None

    def for_domain(self, domain: str) -> DomainExtractor:
        try:
            return self.by_domain[domain.lower()]
        except KeyError:
            raise UnknownExtractor(domain) from None


@dataclass(frozen=True)
class ScraperConfig:
    registry: ExtractorRegistry
    rewrite_rules: tuple[RewriteRule, ...] = ()
    breaker_threshold: int = 5
    default_delay: float = 0.0


def load_scraper_config(path: str | Path | None = None) -> ScraperConfig:
    """Load extractor definitions; defaults to the packaged nine-domain set."""
    if path is None:
        raw = resources.files("cvsspredict.data").joinpath("extractors.json").read_text("utf-8")
    else:
        raw = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc

    defaults = doc.get("defaults", {})
    extractors = []
    for item in doc.get("extractors", []):
        merged = {**defaults, **item}
        merged["domains"] = tuple(merged.get("domains", ()))
        for key in ("text_selectors", "strip_selectors"):
            merged[key] = tuple(merged.get(key, ()))
        merged["deny_markers"] = tuple(m.lower() for m in merged.get("deny_markers", ()))
        extractors.append(DomainExtractor(**merged))
    rules = tuple(
        RewriteRule(domain=r["domain"], pattern=r["pattern"], replacement=r["replacement"])
        for r in doc.get("rewrite_rules", [])
    )
    return ScraperConfig(
        registry=ExtractorRegistry(extractors),
        rewrite_rules=rules,
        breaker_threshold=int(doc.get("breaker_threshold", 5)),
        default_delay=float(doc.get("default_delay", 0.0)),
    )
