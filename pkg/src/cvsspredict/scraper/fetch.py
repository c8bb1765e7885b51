"""Page sources: live HTTP, headless browser, and on-disk fixtures.

Everything downstream talks to the ``PageSource`` protocol, so tests and the
offline CLI mode swap in ``FixtureFetcher`` without touching crawl logic.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol
from urllib.parse import urlsplit

DEFAULT_AGENT = "cvsspredict-research-bot/0.1 (+vulnerability text corpus)"


@dataclass(frozen=True)
class FetchResponse:
    url: str
    status: int
    text: str = ""
    # Set when rendering hit the timeout but partial content was captured.
    timed_out: bool = False

    @property
    def ok(self) -> bool:
        return 200 <= self.status < 300


class FetchError(Exception):
    """Transport-level failure with no HTTP status."""


class FetchTimeout(FetchError):
    def __init__(self, url: str, partial: str | None = None):
        super().__init__(f"timed out fetching {url}")
        self.url = url
        self.partial = partial


class PageSource(Protocol):
    def fetch(self, url: str, timeout: float) -> FetchResponse: ...


class LiveHttpFetcher:
    """Plain HTTP GET; enough for server-rendered pages."""

    def __init__(self, agent: str = DEFAULT_AGENT, session=None):
        import requests

        self.session = session or requests.Session()
        self.session.headers["User-Agent"] = agent

    def fetch(self, url: str, timeout: float) -> FetchResponse:
        import requests

        try:
            response = self.session.get(url, timeout=timeout)
        except requests.Timeout as exc:
            raise FetchTimeout(url) from exc
        except requests.RequestException as exc:
            raise FetchError(f"{url}: {exc}") from exc
        return FetchResponse(url=response.url, status=response.status_code, text=response.text)


class BrowserFetcher:
    """Headless-browser rendering for pages that assemble content with scripts.

    A driver factory is injected so tests can exercise the timeout path
    without a real browser. The default factory needs selenium installed.
    """

    def __init__(self, driver_factory: Callable[[], object] | None = None):
        self._factory = driver_factory or _default_driver_factory
        self._driver = None
        self._lock = threading.Lock()

    def _get_driver(self):
        with self._lock:
            if self._driver is None:
                self._driver = self._factory()
            return self._driver

    def fetch(self, url: str, timeout: float) -> FetchResponse:
        driver = self._get_driver()
        driver.set_page_load_timeout(timeout)
        try:
            driver.get(url)
        except Exception:
            # Rendering was cut off; extract from whatever has loaded.
            partial = getattr(driver, "page_source", "") or ""
            if partial:
                return FetchResponse(url=url, status=200, text=partial, timed_out=True)
            raise FetchTimeout(url) from None
        return FetchResponse(url=url, status=200, text=driver.page_source)

    def close(self) -> None:
        with self._lock:
            if self._driver is not None:
                self._driver.quit()
                self._driver = None


def _default_driver_factory():
    try:
        from selenium import webdriver
        from selenium.webdriver.firefox.options import Options
    except ImportError as exc:  # pragma: no cover - environment dependent
        raise RuntimeError(
            "browser rendering needs the selenium package; "
            "install it or use --fixtures-dir for offline operation"
        ) from exc
    options = Options()
    options.add_argument("-headless")
    return webdriver.Firefox(options=options)  # pragma: no cover


class FixtureFetcher:
    """Serves archived pages from a fixtures directory.

    Layout: ``index.json`` maps URLs to relative HTML paths, optional
    ``status`` overrides, and optional per-domain ``block_after`` limits that
    simulate rate-limiting servers (responses turn 429 after N requests).
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        index = json.loads((self.root / "index.json").read_text(encoding="utf-8"))
        self.pages: dict[str, str] = index.get("pages", {})
        self.status: dict[str, int] = index.get("status", {})
        self.block_after: dict[str, int] = index.get("block_after", {})
        self._request_counts: dict[str, int] = {}
        self._lock = threading.Lock()

    def fetch(self, url: str, timeout: float) -> FetchResponse:
        parts = urlsplit(url)
        domain = parts.hostname or ""
        limit = self.block_after.get(domain)
        # robots.txt checks do not count against simulated rate limits.
        if limit is not None and parts.path != "/robots.txt":
            with self._lock:
                count = self._request_counts.get(domain, 0) + 1
                self._request_counts[domain] = count
            if count > limit:
                return FetchResponse(url=url, status=429)
        if url in self.status:
            return FetchResponse(url=url, status=self.status[url])
        rel = self.pages.get(url)
        if rel is None:
            return FetchResponse(url=url, status=404)
        text = (self.root / rel).read_text(encoding="utf-8")
        return FetchResponse(url=url, status=200, text=text)
