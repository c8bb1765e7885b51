"""robots.txt parsing with longest-match rule resolution.

The stdlib parser applies rules first-match; modern crawlers resolve by the
most specific (longest) matching path pattern, with Allow winning ties. That
behavior plus the non-standard crawl-delay directive is what we need, so the
parser is hand-rolled. Patterns support ``*`` wildcards and the ``$`` end
anchor. Parse problems never raise; they degrade to permissive with a log
line, because a broken robots.txt must not halt a crawl.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from urllib.parse import urlsplit

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RobotsDecision:
    allowed: bool
    crawl_delay: float = 0.0


@dataclass(frozen=True)
class _Group:
    agents: tuple[str, ...]
    # (allow, pattern) pairs in file order
    rules: tuple[tuple[bool, str], ...]
    crawl_delay: float | None = None


@dataclass(frozen=True)
class RobotsPolicy:
    groups: tuple[_Group, ...] = field(default=())

    def _group_for(self, agent: str) -> _Group | None:
        """Most specific matching group: longest agent token wins, * last."""
        agent = agent.lower()
        best: _Group | None = None
        best_len = -1
        for group in self.groups:
            for token in group.agents:
                token = token.lower()
                if token == "*":
                    length = 0
                elif token in agent:
                    length = len(token)
                else:
                    continue
                if length > best_len:
                    best, best_len = group, length
        return best

    def decide(self, path: str, agent: str) -> RobotsDecision:
        group = self._group_for(agent)
        if group is None:
            return RobotsDecision(allowed=True)
        delay = group.crawl_delay or 0.0
        best_rule: tuple[bool, str] | None = None
        best_len = -1
        for allow, pattern in group.rules:
            if _pattern_matches(pattern, path):
                # Longest pattern wins; Allow beats Disallow on equal length.
                if len(pattern) > best_len or (len(pattern) == best_len and allow):
                    best_rule, best_len = (allow, pattern), len(pattern)
        if best_rule is None:
            return RobotsDecision(allowed=True, crawl_delay=delay)
        return RobotsDecision(allowed=best_rule[0], crawl_delay=delay)


def _pattern_matches(pattern: str, path: str) -> bool:
    if "*" not in pattern and not pattern.endswith("$"):
        return path.startswith(pattern)
    regex = "".join(
        ".*" if ch == "*" else re.escape(ch)
        for ch in (pattern[:-1] if pattern.endswith("$") else pattern)
    )
    if pattern.endswith("$"):
        regex += "$"
    return re.match(regex, path) is not None


def parse_robots(text: str) -> RobotsPolicy:
    groups: list[_Group] = []
    agents: list[str] = []
    rules: list[tuple[bool, str]] = []
    delay: float | None = None
    collecting_agents = True

    def flush() -> None:
        nonlocal agents, rules, delay
        if agents:
            groups.append(_Group(tuple(agents), tuple(rules), delay))
        agents, rules, delay = [], [], None

    try:
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line or ":" not in line:
                continue
            key, value = (part.strip() for part in line.split(":", 1))
            key = key.lower()
            if key == "user-agent":
                if not collecting_agents:
                    flush()
                    collecting_agents = True
                agents.append(value)
            elif key in ("allow", "disallow"):
                collecting_agents = False
                if value:
                    rules.append((key == "allow", value))
                # An empty Disallow means "everything allowed"; no rule needed.
            elif key == "crawl-delay":
                collecting_agents = False
                try:
                    parsed = float(value)
                except ValueError:
                    log.warning("ignoring unparseable crawl-delay %r", value)
                else:
                    if parsed >= 0:
                        delay = parsed
        flush()
    except Exception:  # pragma: no cover - defensive, parser is total above
        log.warning("robots.txt parse failure; treating as permissive", exc_info=True)
        return RobotsPolicy()
    return RobotsPolicy(tuple(groups))


def check_robots(policy: RobotsPolicy, url: str, agent: str) -> RobotsDecision:
    parts = urlsplit(url)
    path = parts.path or "/"
    if parts.query:
        path += "?" + parts.query
    return policy.decide(path, agent)
