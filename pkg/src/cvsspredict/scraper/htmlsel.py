"""Minimal HTML document tree with a CSS-subset selector engine.

Built on html.parser so extraction has no third-party parser dependency.
Supported selector grammar, which covers every shipped extractor config:

    simple    := [tag] ['#' id] ('.' class)*
    selector  := simple ((' ' | ' > ') simple)*

Descendant and child combinators only; no attribute predicates or
pseudo-classes. Documents are treated leniently: unknown or mismatched end
tags are skipped, void elements never take children.
"""

from __future__ import annotations

import re
from html import unescape
from html.parser import HTMLParser
from typing import Iterator

VOID_TAGS = frozenset(
    "area base br col embed hr img input link meta param source track wbr".split()
)

# Tags that implicitly close an open sibling of the same name, so sloppy
# markup like <p>one<p>two produces siblings instead of nesting.
_AUTO_CLOSE = frozenset("p li dt dd tr td th option".split())

_WS = re.compile(r"\s+")


def normalize_ws(text: str) -> str:
    return _WS.sub(" ", text).strip()


class Element:
    __slots__ = ("tag", "attrs", "children", "parent")

    def __init__(self, tag: str, attrs: dict[str, str] | None = None, parent: "Element | None" = None):
        self.tag = tag
        self.attrs = attrs or {}
        self.children: list[Element | str] = []
        self.parent = parent

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        ident = f"#{self.attrs['id']}" if "id" in self.attrs else ""
        return f"<Element {self.tag}{ident}>"

    @property
    def classes(self) -> frozenset[str]:
        return frozenset(self.attrs.get("class", "").split())

    def child_elements(self) -> list["Element"]:
        return [c for c in self.children if isinstance(c, Element)]

    def iter_elements(self) -> Iterator["Element"]:
        """Depth-first over descendant elements, excluding self."""
        for child in self.children:
            if isinstance(child, Element):
                yield child
                yield from child.iter_elements()

    def text(self) -> str:
        """Whitespace-normalized text content."""
        parts: list[str] = []
        self._collect_text(parts)
        return normalize_ws(" ".join(parts))

    def _collect_text(self, parts: list[str]) -> None:
        for child in self.children:
            if isinstance(child, str):
                parts.append(child)
            elif child.tag not in ("script", "style"):
                child._collect_text(parts)

    def detach(self) -> None:
        if self.parent is not None:
            self.parent.children.remove(self)
            self.parent = None


class _TreeBuilder(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.root = Element("#document")
        self.stack = [self.root]

    def handle_starttag(self, tag: str, attrs) -> None:
        if tag in _AUTO_CLOSE and self.stack[-1].tag == tag:
            self.stack.pop()
        element = Element(tag, {k: unescape(v or "") for k, v in attrs}, self.stack[-1])
        self.stack[-1].children.append(element)
        if tag not in VOID_TAGS:
            self.stack.append(element)

    def handle_startendtag(self, tag: str, attrs) -> None:
        element = Element(tag, {k: unescape(v or "") for k, v in attrs}, self.stack[-1])
        self.stack[-1].children.append(element)

    def handle_endtag(self, tag: str) -> None:
        for i in range(len(self.stack) - 1, 0, -1):
            if self.stack[i].tag == tag:
                del self.stack[i:]
                return
        # Stray end tag: ignore.

    def handle_data(self, data: str) -> None:
        if data:
            self.stack[-1].children.append(data)


def parse_html(text: str) -> Element:
    builder = _TreeBuilder()
    builder.feed(text)
    builder.close()
    return builder.root


class SelectorError(ValueError):
    pass


_SIMPLE = re.compile(
    r"^(?P<tag>[a-zA-Z][a-zA-Z0-9-]*)?(?P<id>#[\w-]+)?(?P<classes>(?:\.[\w-]+)+)?$"
)


def _parse_simple(token: str) -> tuple[str | None, str | None, frozenset[str]]:
    match = _SIMPLE.match(token)
    if not match or not token:
        raise SelectorError(f"unsupported selector part {token!r}")
    tag = match.group("tag")
    ident = match.group("id")[1:] if match.group("id") else None
    classes = frozenset((match.group("classes") or "").split(".")) - {""}
    return (tag.lower() if tag else None, ident, classes)


def _matches(el: Element, simple: tuple[str | None, str | None, frozenset[str]]) -> bool:
    tag, ident, classes = simple
    if tag is not None and el.tag != tag:
        return False
    if ident is not None and el.attrs.get("id") != ident:
        return False
    return classes <= el.classes


def _parse_selector(selector: str) -> list[tuple[str, tuple]]:
    tokens = selector.replace(">", " > ").split()
    steps: list[tuple[str, tuple]] = []
    combinator = " "
    for token in tokens:
        if token == ">":
            if not steps:
                raise SelectorError(f"selector {selector!r} starts with a combinator")
            combinator = ">"
            continue
        steps.append((combinator, _parse_simple(token)))
        combinator = " "
    if not steps:
        raise SelectorError("empty selector")
    if combinator == ">":
        raise SelectorError(f"selector {selector!r} ends with a combinator")
    return steps


def select(root: Element, selector: str) -> list[Element]:
    """All elements under root matching the selector, in document order."""
    context = [root]
    for combinator, simple in _parse_selector(selector):
        seen: set[int] = set()
        matched: list[Element] = []
        for node in context:
            pool = node.iter_elements() if combinator == " " else node.child_elements()
            for candidate in pool:
                if id(candidate) not in seen and _matches(candidate, simple):
                    seen.add(id(candidate))
                    matched.append(candidate)
        context = matched
    return context


def select_one(root: Element, selector: str) -> Element | None:
    found = select(root, selector)
    return found[0] if found else None
