"""Per-domain politeness scheduling and failure circuit breaking.

The scheduler serializes requests to one domain and enforces the requested
gap between them; different domains proceed in parallel. Time is injected so
tests drive a virtual clock instead of sleeping for real.
"""

from __future__ import annotations

import threading
import time
from contextlib import contextmanager
from typing import Protocol


class Clock(Protocol):
    def now(self) -> float: ...

    def sleep(self, seconds: float) -> None: ...


class SystemClock:
    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class VirtualClock:
    """Deterministic clock where sleeping advances shared time instantly."""

    def __init__(self, start: float = 0.0):
        self._t = start
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._t

    def sleep(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot sleep a negative duration")
        with self._lock:
            self._t += seconds


class DomainScheduler:
    """Owns the inter-request gap per domain.

    ``slot`` blocks until the domain is free and its gap has elapsed, then
    holds the domain for the duration of the request. The next allowed start
    is measured from request completion, so the gap holds under any
    interleaving of workers.
    """

    def __init__(self, clock: Clock | None = None):
        self.clock = clock or SystemClock()
        self._next_start: dict[str, float] = {}
        self._domain_locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def _lock_for(self, domain: str) -> threading.Lock:
        with self._registry_lock:
            if domain not in self._domain_locks:
                self._domain_locks[domain] = threading.Lock()
            return self._domain_locks[domain]

    @contextmanager
    def slot(self, domain: str, delay: float):
        if delay < 0:
            raise ValueError("delay must be >= 0")
        with self._lock_for(domain):
            wait = self._next_start.get(domain, 0.0) - self.clock.now()
            if wait > 0:
                self.clock.sleep(wait)
            try:
                yield self.clock.now()
            finally:
                self._next_start[domain] = self.clock.now() + delay


class CircuitBreaker:
    """Opens a domain after N consecutive blocked responses."""

    def __init__(self, threshold: int = 5):
        if threshold < 1:
            raise ValueError("threshold must be >= 1")
        self.threshold = threshold
        self._consecutive: dict[str, int] = {}
        self._open: set[str] = set()
        self._lock = threading.Lock()

    def is_open(self, domain: str) -> bool:
        with self._lock:
            return domain in self._open

    def record_blocked(self, domain: str) -> None:
        with self._lock:
            count = self._consecutive.get(domain, 0) + 1
            self._consecutive[domain] = count
            if count >= self.threshold:
                self._open.add(domain)

    def record_ok(self, domain: str) -> None:
        with self._lock:
            self._consecutive[domain] = 0

    def open_domains(self) -> set[str]:
        with self._lock:
            return set(self._open)
