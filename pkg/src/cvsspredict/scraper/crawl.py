"""Crawl planning, execution, and reporting.

Planning collects and deduplicates reference URLs for the selected domains.
Execution is producer-consumer: jobs sit in a queue, a fixed worker pool
consumes them, and a shared scheduler serializes each domain while enforcing
its crawl delay. Robots denial is checked before a URL ever reaches the
fetcher; one rewrite retry per job is allowed for domains with known URL
scheme changes.
"""

from __future__ import annotations

import logging
import queue
import threading
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

from ..nvd import VulnEntry
from ..refs import InvalidUrl, extract_domain
from .extract import (
    DomainExtractor,
    ExtractorMiss,
    ExtractorRegistry,
    RewriteRule,
    ScraperConfig,
    UnknownExtractor,
)
from .fetch import DEFAULT_AGENT, FetchError, FetchResponse, FetchTimeout, PageSource
from .robots import RobotsPolicy, check_robots, parse_robots
from .schedule import CircuitBreaker, Clock, DomainScheduler, SystemClock

log = logging.getLogger(__name__)

# Statuses that mean "the server is refusing us", not "the page is broken".
BLOCKED_STATUSES = frozenset({403, 429})


@dataclass(frozen=True)
class CrawlJob:
    cve_id: str
    url: str
    domain: str
    extractor_id: str
    rewrite_attempted: bool = False


@dataclass(frozen=True)
class ScrapedText:
    cve_id: str
    url: str
    domain: str
    text: str
    fetched_at: float = 0.0
    via_rewrite: bool = False

    def to_record(self) -> dict:
        # fetched_at and retry provenance go to sidecar metadata so the
        # primary artifact is byte-stable across re-runs.
        return {
            "cve_id": self.cve_id,
            "url": self.url,
            "domain": self.domain,
            "text": self.text,
        }

    @classmethod
    def from_record(cls, record: dict) -> "ScrapedText":
        return cls(
            cve_id=record["cve_id"],
            url=record["url"],
            domain=record["domain"],
            text=record["text"],
        )


FAILURE_KINDS = ("http_error", "timeout", "blocked", "extractor_miss", "robots_denied")


@dataclass(frozen=True)
class FetchFailure:
    cve_id: str
    url: str
    domain: str
    kind: str
    detail: str = ""
    status: int | None = None
    rewrite_attempted: bool = False

    def __post_init__(self) -> None:
        if self.kind not in FAILURE_KINDS:
            raise ValueError(f"unknown failure kind {self.kind!r}")

    def to_record(self) -> dict:
        return {
            "cve_id": self.cve_id,
            "url": self.url,
            "domain": self.domain,
            "kind": self.kind,
            "detail": self.detail,
            "status": self.status,
            "rewrite_attempted": self.rewrite_attempted,
        }


def plan_crawl(
    entries: Iterable[VulnEntry],
    selection: Iterable[str] | None,
    registry: ExtractorRegistry,
) -> list[CrawlJob]:
    """One job per (cve_id, url) on a selected domain, deduplicated on URL.

    Jobs are interleaved round-robin across domains so a worker pool does not
    start by hammering a single host.
    """
    if selection is None:
        selected = set(registry.domains)
    else:
        selected = {d.lower() for d in selection}
        unknown = selected - registry.domains
        if unknown:
            raise UnknownExtractor(
                f"no extractor registered for: {', '.join(sorted(unknown))}"
            )
    seen: dict[str, str] = {}
    per_domain: dict[str, list[CrawlJob]] = {}
    for entry in entries:
        for ref in entry.references:
            try:
                domain = extract_domain(ref.url)
            except InvalidUrl:
                continue
            if domain not in selected:
                continue
            if ref.url in seen:
                log.info(
                    "duplicate reference %s shared by %s and %s; keeping first",
                    ref.url, seen[ref.url], entry.cve_id,
                )
                continue
            seen[ref.url] = entry.cve_id
            job = CrawlJob(
                cve_id=entry.cve_id,
                url=ref.url,
                domain=domain,
                extractor_id=registry.for_domain(domain).id,
            )
            per_domain.setdefault(domain, []).append(job)

    jobs: list[CrawlJob] = []
    buckets = [per_domain[d] for d in sorted(per_domain)]
    cursor = 0
    while buckets:
        cursor %= len(buckets)
        jobs.append(buckets[cursor].pop(0))
        if buckets[cursor]:
            cursor += 1
        else:
            del buckets[cursor]
    return jobs


class RobotsCache:
    """Per-domain robots policy, fetched lazily or preloaded for tests."""

    def __init__(
        self,
        fetcher: PageSource | None = None,
        policies: Mapping[str, RobotsPolicy] | None = None,
        timeout: float = 10.0,
    ):
        self._fetcher = fetcher
        self._policies: dict[str, RobotsPolicy] = dict(policies or {})
        self._timeout = timeout
        self._lock = threading.Lock()

    def policy_for(self, domain: str) -> RobotsPolicy:
        with self._lock:
            if domain in self._policies:
                return self._policies[domain]
        policy = RobotsPolicy()
        if self._fetcher is not None:
            try:
                response = self._fetcher.fetch(f"https://{domain}/robots.txt", self._timeout)
            except FetchError:
                log.info("%s: robots.txt unreachable; assuming permissive", domain)
            else:
                if response.ok:
                    policy = parse_robots(response.text)
        with self._lock:
            self._policies.setdefault(domain, policy)
            return self._policies[domain]

    def check(self, url: str, agent: str):
        return check_robots(self.policy_for(extract_domain(url)), url, agent)


def _first_applicable_rule(rules: Sequence[RewriteRule], url: str) -> str | None:
    for rule in rules:
        rewritten = rule.apply(url)
        if rewritten is not None:
            return rewritten
    return None


def fetch_and_extract(
    job: CrawlJob,
    fetcher: PageSource,
    registry: ExtractorRegistry,
    rules: Sequence[RewriteRule] = (),
    timeout: float = 20.0,
    *,
    scheduler: DomainScheduler | None = None,
    robots: RobotsCache | None = None,
    agent: str = DEFAULT_AGENT,
    clock: Clock | None = None,
    extra_delay: float = 0.0,
) -> ScrapedText | FetchFailure:
    """Fetch one job's page and extract its anchored text.

    Every fetch (including the rewrite retry) passes the robots check and
    takes a scheduler slot, so politeness holds per request, not per job.
    """
    clock = clock or (scheduler.clock if scheduler else SystemClock())
    extractor = registry.get(job.extractor_id)

    def failure(kind: str, detail: str = "", status: int | None = None) -> FetchFailure:
        return FetchFailure(
            cve_id=job.cve_id, url=current.url, domain=job.domain, kind=kind,
            detail=detail, status=status, rewrite_attempted=current.rewrite_attempted,
        )

    def attempt() -> FetchResponse | FetchFailure:
        delay = extra_delay
        if robots is not None:
            decision = robots.check(current.url, agent)
            if not decision.allowed:
                return failure("robots_denied", detail="disallowed by robots.txt")
            delay = max(delay, decision.crawl_delay)
        slot = scheduler.slot(job.domain, delay) if scheduler else None
        try:
            if slot is not None:
                slot.__enter__()
            response = fetcher.fetch(current.url, timeout)
        except FetchTimeout as exc:
            if exc.partial:
                # Rendering was cut off; extraction proceeds on what loaded.
                response = FetchResponse(
                    url=current.url, status=200, text=exc.partial, timed_out=True
                )
            else:
                return failure("timeout", detail=str(exc))
        except FetchError as exc:
            return failure("http_error", detail=str(exc))
        finally:
            if slot is not None:
                slot.__exit__(None, None, None)
        if response.status in BLOCKED_STATUSES:
            return failure("blocked", status=response.status)
        if not response.ok:
            return failure("http_error", status=response.status)
        return response

    current = job
    outcome = attempt()
    if isinstance(outcome, FetchFailure) and outcome.kind in ("http_error", "timeout", "blocked"):
        if not current.rewrite_attempted:
            rewritten = _first_applicable_rule(rules, current.url)
            if rewritten is not None:
                log.info("%s: retrying %s as %s", job.cve_id, current.url, rewritten)
                current = replace(current, url=rewritten, rewrite_attempted=True)
                outcome = attempt()
    if isinstance(outcome, FetchFailure):
        return outcome

    try:
        text = extractor.extract(outcome.text, job.cve_id)
    except ExtractorMiss as exc:
        return failure("extractor_miss", detail=str(exc))
    return ScrapedText(
        cve_id=job.cve_id,
        url=current.url,
        domain=job.domain,
        text=text,
        fetched_at=clock.now(),
        via_rewrite=current.rewrite_attempted,
    )


@dataclass
class CrawlOutcome:
    texts: list[ScrapedText]
    failures: list[FetchFailure]

    def sorted(self) -> "CrawlOutcome":
        return CrawlOutcome(
            texts=sorted(self.texts, key=lambda t: (t.cve_id, t.url)),
            failures=sorted(self.failures, key=lambda f: (f.cve_id, f.url)),
        )


def run_crawl(
    jobs: Sequence[CrawlJob],
    fetchers: PageSource | Mapping[str, PageSource],
    config: ScraperConfig,
    *,
    workers: int = 5,
    timeout: float = 20.0,
    agent: str = DEFAULT_AGENT,
    clock: Clock | None = None,
    robots: RobotsCache | None = None,
    breaker: CircuitBreaker | None = None,
) -> CrawlOutcome:
    """Run the worker pool over planned jobs and collect all outcomes."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    clock = clock or SystemClock()
    scheduler = DomainScheduler(clock)
    breaker = breaker or CircuitBreaker(config.breaker_threshold)
    registry = config.registry

    def fetcher_for(job: CrawlJob) -> PageSource:
        if isinstance(fetchers, Mapping):
            render = registry.get(job.extractor_id).render
            return fetchers[render]
        return fetchers

    if robots is None:
        # Robots lookups go through any available fetcher (offline fixtures
        # serve robots files too); absence degrades to permissive.
        probe = fetchers if not isinstance(fetchers, Mapping) else next(iter(fetchers.values()))
        robots = RobotsCache(probe)

    job_queue: "queue.Queue[CrawlJob]" = queue.Queue()
    for job in jobs:
        job_queue.put(job)
    outcome = CrawlOutcome(texts=[], failures=[])
    sink_lock = threading.Lock()

    def record(result: ScrapedText | FetchFailure) -> None:
        with sink_lock:
            if isinstance(result, ScrapedText):
                outcome.texts.append(result)
            else:
                outcome.failures.append(result)

    def worker() -> None:
        while True:
            try:
                job = job_queue.get_nowait()
            except queue.Empty:
                return
            if breaker.is_open(job.domain):
                record(FetchFailure(
                    cve_id=job.cve_id, url=job.url, domain=job.domain,
                    kind="blocked", detail="circuit breaker open",
                ))
                continue
            result = fetch_and_extract(
                job, fetcher_for(job), registry, config.rewrite_rules, timeout,
                scheduler=scheduler, robots=robots, agent=agent, clock=clock,
                extra_delay=config.default_delay,
            )
            if isinstance(result, FetchFailure) and result.kind == "blocked":
                breaker.record_blocked(job.domain)
            elif not (isinstance(result, FetchFailure) and result.kind == "robots_denied"):
                breaker.record_ok(job.domain)
            record(result)

    threads = [threading.Thread(target=worker, name=f"crawl-{i}") for i in range(workers)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    open_domains = breaker.open_domains()
    if open_domains:
        log.warning("circuit breaker opened for: %s", ", ".join(sorted(open_domains)))
    return outcome


def yield_report(
    results: Sequence[ScrapedText | FetchFailure],
    jobs: Sequence[CrawlJob],
) -> dict:
    """Per-domain crawled/attempted ratios plus a total row."""
    attempted: dict[str, int] = {}
    for job in jobs:
        attempted[job.domain] = attempted.get(job.domain, 0) + 1
    crawled: dict[str, int] = {}
    for result in results:
        if isinstance(result, ScrapedText):
            crawled[result.domain] = crawled.get(result.domain, 0) + 1
    domains = {
        domain: {
            "attempted": count,
            "crawled": crawled.get(domain, 0),
            "ratio": round(crawled.get(domain, 0) / count, 4),
        }
        for domain, count in sorted(attempted.items())
    }
    total_attempted = sum(attempted.values())
    total_crawled = sum(crawled.values())
    return {
        "domains": domains,
        "total": {
            "attempted": total_attempted,
            "crawled": total_crawled,
            "ratio": round(total_crawled / total_attempted, 4) if total_attempted else 0.0,
        },
    }
