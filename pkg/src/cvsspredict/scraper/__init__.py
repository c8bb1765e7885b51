"""Polite reference scraping: robots handling, scheduling, fetching, extraction."""

from .crawl import (
    CrawlJob,
    FetchFailure,
    ScrapedText,
    UnknownExtractor,
    fetch_and_extract,
    plan_crawl,
    run_crawl,
    yield_report,
)
from .extract import ExtractorMiss, ExtractorRegistry, load_scraper_config
from .fetch import FetchError, FetchResponse, FetchTimeout, FixtureFetcher, LiveHttpFetcher
from .robots import RobotsDecision, RobotsPolicy, check_robots, parse_robots
from .schedule import CircuitBreaker, DomainScheduler, SystemClock, VirtualClock

__all__ = [
    "CircuitBreaker",
    "CrawlJob",
    "DomainScheduler",
    "ExtractorMiss",
    "ExtractorRegistry",
    "FetchError",
    "FetchFailure",
    "FetchResponse",
    "FetchTimeout",
    "FixtureFetcher",
    "LiveHttpFetcher",
    "RobotsDecision",
    "RobotsPolicy",
    "ScrapedText",
    "SystemClock",
    "UnknownExtractor",
    "VirtualClock",
    "check_robots",
    "fetch_and_extract",
    "load_scraper_config",
    "parse_robots",
    "plan_crawl",
    "run_crawl",
    "yield_report",
]
