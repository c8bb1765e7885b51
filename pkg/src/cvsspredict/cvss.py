"""CVSS v3.1 base vectors: grammar, validation, and exact score arithmetic.

Only the eight base metrics are handled.  Temporal and environmental
metric groups are rejected on parse; CVSS v2 and v4 are out of scope.
Vector strings with a ``CVSS:3.0`` or ``CVSS:3.1`` prefix (or no prefix)
are accepted, and all scoring uses v3.1 arithmetic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator

#: Base metric keys in canonical serialization order.
COMPONENTS = ("AV", "AC", "PR", "UI", "S", "C", "I", "A")

#: Allowed values per component, in canonical (tie-break) order.
COMPONENT_VALUES = {
    "AV": ("N", "A", "L", "P"),
    "AC": ("L", "H"),
    "PR": ("N", "L", "H"),
    "UI": ("N", "R"),
    "S": ("U", "C"),
    "C": ("N", "L", "H"),
    "I": ("N", "L", "H"),
    "A": ("N", "L", "H"),
}

_ACCEPTED_PREFIXES = ("CVSS:3.0", "CVSS:3.1")

# Metric weights from the v3.1 standard.  PR is the only scope-dependent
# table; everything else is flat.
AV_WEIGHT = {"N": 0.85, "A": 0.62, "L": 0.55, "P": 0.2}
AC_WEIGHT = {"L": 0.77, "H": 0.44}
PR_WEIGHT = {
    "U": {"N": 0.85, "L": 0.62, "H": 0.27},
    "C": {"N": 0.85, "L": 0.68, "H": 0.5},
}
UI_WEIGHT = {"N": 0.85, "R": 0.62}
IMPACT_WEIGHT = {"N": 0.0, "L": 0.22, "H": 0.56}

SEVERITY_BANDS = ("None", "Low", "Medium", "High", "Critical")


class VectorError(ValueError):
    """Base class for vector-string parse failures."""


class MissingComponent(VectorError):
    def __init__(self, component: str):
        super().__init__(f"missing base metric {component}")
        self.component = component


class UnknownValue(VectorError):
    def __init__(self, component: str, value: str):
        super().__init__(f"unknown value {value!r} for {component}")
        self.component = component
        self.value = value


class DuplicateComponent(VectorError):
    def __init__(self, component: str):
        super().__init__(f"duplicate base metric {component}")
        self.component = component


class MalformedSyntax(VectorError):
    pass


class OutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class CvssVector:
    """One fully specified CVSS v3.1 base vector."""

    av: str
    ac: str
    pr: str
    ui: str
    s: str
    c: str
    i: str
    a: str

    def __post_init__(self):
        for key, value in zip(COMPONENTS, self.values()):
            if value not in COMPONENT_VALUES[key]:
                raise UnknownValue(key, value)

    def values(self) -> tuple[str, ...]:
        return (self.av, self.ac, self.pr, self.ui, self.s, self.c, self.i, self.a)

    def serialize(self) -> str:
        """Canonical vector string, components in fixed order, no prefix."""
        return "/".join(f"{k}:{v}" for k, v in zip(COMPONENTS, self.values()))

    def __str__(self) -> str:
        return self.serialize()


def parse_vector(text: str) -> CvssVector:
    """Parse a base vector string into a :class:`CvssVector`.

    The optional ``CVSS:3.0/`` or ``CVSS:3.1/`` prefix is accepted; the
    eight base metrics must follow in canonical order.  Raises
    :class:`MissingComponent`, :class:`UnknownValue`,
    :class:`DuplicateComponent` or :class:`MalformedSyntax`.
    """
    if not isinstance(text, str):
        raise MalformedSyntax("vector must be a string")
    parts = text.strip().split("/")
    if parts and parts[0] in _ACCEPTED_PREFIXES:
        parts = parts[1:]
    elif parts and parts[0].startswith("CVSS:"):
        raise MalformedSyntax(f"unsupported CVSS version prefix {parts[0]!r}")

    seen: dict[str, str] = {}
    keys_in_order = []
    for part in parts:
        key, sep, value = part.partition(":")
        if not sep or not key or not value:
            raise MalformedSyntax(f"malformed metric {part!r}")
        if key in seen:
            raise DuplicateComponent(key)
        if key not in COMPONENTS:
            raise MalformedSyntax(f"unknown metric {key!r} (base metrics only)")
        if value not in COMPONENT_VALUES[key]:
            raise UnknownValue(key, value)
        seen[key] = value
        keys_in_order.append(key)
    for expected in COMPONENTS:
        if expected not in seen:
            raise MissingComponent(expected)
    if tuple(keys_in_order) != COMPONENTS:
        raise MalformedSyntax("base metrics out of canonical order")
    return CvssVector(*(seen[k] for k in COMPONENTS))


def roundup(x: float) -> float:
    """Smallest one-decimal value >= ``x``, via integer arithmetic.

    The computation goes through a 1e-9-resolution integer so that
    binary-float representation noise (such as ``4.1 * 10`` not being
    exactly ``41``) cannot push a value across a 0.1 boundary, while
    genuinely larger inputs like ``4.000001`` still round up to ``4.1``.
    """
    if not 0.0 <= x <= 10.0:
        raise OutOfRange(f"score {x!r} outside [0, 10]")
    n = round(x * 1_000_000_000)
    if n % 100_000_000 == 0:
        return n / 1_000_000_000
    return (n // 100_000_000 + 1) / 10.0


def severity(base_score: float) -> str:
    """Qualitative severity band for a one-decimal base score."""
    tenths = round(base_score * 10)
    if tenths == 0:
        return "None"
    if tenths <= 39:
        return "Low"
    if tenths <= 69:
        return "Medium"
    if tenths <= 89:
        return "High"
    return "Critical"


@dataclass(frozen=True)
class ScoreBreakdown:
    """Base score plus the intermediate quantities it is built from."""

    iss: float
    impact: float
    exploitability: float
    base_score: float
    severity: str


def compute_base_score(v: CvssVector) -> ScoreBreakdown:
    """Compute the v3.1 base score with all intermediate values.

    Pure and total on valid vectors; intermediates are not rounded.
    """
    c = IMPACT_WEIGHT[v.c]
    i = IMPACT_WEIGHT[v.i]
    a = IMPACT_WEIGHT[v.a]
    iss = 1.0 - (1.0 - c) * (1.0 - i) * (1.0 - a)

    if v.s == "U":
        impact = 6.42 * iss
    else:
        impact = 7.52 * (iss - 0.029) - 3.25 * (iss - 0.02) ** 15

    exploitability = 8.22 * AV_WEIGHT[v.av] * AC_WEIGHT[v.ac] * PR_WEIGHT[v.s][v.pr] * UI_WEIGHT[v.ui]

    if impact <= 0:
        base = 0.0
    elif v.s == "U":
        base = roundup(min(impact + exploitability, 10.0))
    else:
        base = roundup(min(1.08 * (impact + exploitability), 10.0))

    return ScoreBreakdown(
        iss=iss,
        impact=impact,
        exploitability=exploitability,
        base_score=base,
        severity=severity(base),
    )


def score_vector_string(text: str) -> float:
    """Convenience: parse then score, returning just the base score."""
    return compute_base_score(parse_vector(text)).base_score


def all_vectors() -> Iterator[CvssVector]:
    """Every valid base vector, in canonical enumeration order."""
    for combo in itertools.product(*(COMPONENT_VALUES[k] for k in COMPONENTS)):
        yield CvssVector(*combo)
