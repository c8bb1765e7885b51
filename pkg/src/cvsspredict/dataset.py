"""Labeled corpus assembly and the grouped train/test split.

A corpus merges advisory-database descriptions with scraped reference texts;
every example carries the full eight-component label vector of its CVE.
Splitting assigns whole CVEs to one side, so multiple texts about the same
vulnerability can never leak across the train/test boundary.
"""

from __future__ import annotations

import hashlib
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .cvss import COMPONENTS, CvssVector, VectorError, parse_vector
from .errors import EmptyInput
from .jsonl import read_json, read_jsonl, write_json, write_jsonl
from .nvd import CVE_ID_RE, CorpusStats, VulnEntry, length_stats
from .scraper.crawl import ScrapedText

log = logging.getLogger(__name__)

#: Source tag for database descriptions; scraped texts use their domain.
NVD_SOURCE = "nvd"

SOURCE_FILTERS = ("all", "descriptions")


class EmptyCorpus(ValueError):
    pass


class CorpusError(ValueError):
    """Corpus or manifest file fails validation."""


@dataclass(frozen=True)
class LabeledExample:
    cve_id: str
    text: str
    source: str
    labels: CvssVector

    def __post_init__(self) -> None:
        if not CVE_ID_RE.match(self.cve_id):
            raise ValueError(f"invalid CVE id {self.cve_id!r}")
        if not self.text:
            raise ValueError(f"{self.cve_id}: example text must be non-empty")
        if not self.source:
            raise ValueError(f"{self.cve_id}: example source must be non-empty")

    @property
    def text_ref(self) -> str:
        """Stable 12-hex id joining predictions back to examples.

        Derived purely from content, so any consumer of the corpus file can
        recompute it without coordination. Byte-identical examples share a
        ref, which is harmless: they can only take the same prediction.
        """
        key = f"{self.cve_id}|{self.source}|{self.text}".encode("utf-8")
        return hashlib.sha1(key).hexdigest()[:12]

    def label_of(self, component: str) -> str:
        return dict(zip(COMPONENTS, self.labels.values()))[component]

    def to_record(self) -> dict:
        return {
            "cve_id": self.cve_id,
            "labels": self.labels.serialize(),
            "source": self.source,
            "text": self.text,
        }

    @classmethod
    def from_record(cls, record: dict) -> "LabeledExample":
        try:
            return cls(
                cve_id=record["cve_id"],
                text=record["text"],
                source=record["source"],
                labels=parse_vector(record["labels"]),
            )
        except (KeyError, TypeError, ValueError, VectorError) as exc:
            raise CorpusError(f"bad corpus record: {exc}") from exc


@dataclass(frozen=True)
class CorpusBuild:
    examples: tuple[LabeledExample, ...]
    # CVE ids of scraped texts skipped for lacking a ground-truth entry,
    # one per skipped text.
    orphaned: tuple[str, ...] = ()
    unlabeled_entries: int = 0

    @property
    def orphan_count(self) -> int:
        return len(self.orphaned)


def build_corpus(
    entries: Iterable[VulnEntry],
    scraped: Iterable[ScrapedText] = (),
    sources: str = "all",
) -> CorpusBuild:
    """One labeled example per description plus one per admitted scraped text.

    ``sources="descriptions"`` drops the scraped texts, giving the
    descriptions-only training variant. Scraped texts whose CVE has no
    ground truth cannot be labeled; they are skipped and counted.
    """
    if sources not in SOURCE_FILTERS:
        raise ValueError(f"sources must be one of {SOURCE_FILTERS}, got {sources!r}")
    ground_truth: dict[str, CvssVector] = {}
    examples: list[LabeledExample] = []
    unlabeled = 0
    for entry in entries:
        if entry.gt_vector is None:
            unlabeled += 1
            continue
        ground_truth[entry.cve_id] = entry.gt_vector
        examples.append(
            LabeledExample(
                cve_id=entry.cve_id,
                text=entry.description,
                source=NVD_SOURCE,
                labels=entry.gt_vector,
            )
        )
    orphaned: list[str] = []
    if sources == "all":
        for text in scraped:
            labels = ground_truth.get(text.cve_id)
            if labels is None:
                orphaned.append(text.cve_id)
                continue
            examples.append(
                LabeledExample(
                    cve_id=text.cve_id,
                    text=text.text,
                    source=text.domain,
                    labels=labels,
                )
            )
    if orphaned:
        log.warning(
            "%d scraped texts reference CVEs without ground truth; skipped", len(orphaned)
        )
    if unlabeled:
        log.info("%d entries lack a usable base vector and yield no examples", unlabeled)
    return CorpusBuild(
        examples=tuple(examples),
        orphaned=tuple(orphaned),
        unlabeled_entries=unlabeled,
    )


def write_corpus(path: str | Path, examples: Iterable[LabeledExample]) -> int:
    return write_jsonl(path, (example.to_record() for example in examples))


def read_corpus(path: str | Path) -> list[LabeledExample]:
    return [LabeledExample.from_record(record) for record in read_jsonl(path)]


@dataclass(frozen=True)
class SplitManifest:
    seed: int
    ratio: float
    train: frozenset[str]
    test: frozenset[str]

    def __post_init__(self) -> None:
        if not 0 < self.ratio < 1:
            raise ValueError(f"ratio must be in (0, 1), got {self.ratio}")
        overlap = self.train & self.test
        if overlap:
            raise ValueError(f"CVEs on both sides: {', '.join(sorted(overlap))}")

    def side_of(self, cve_id: str) -> str:
        if cve_id in self.train:
            return "train"
        if cve_id in self.test:
            return "test"
        raise KeyError(cve_id)

    def to_record(self) -> dict:
        return {
            "ratio": self.ratio,
            "seed": self.seed,
            "test": sorted(self.test),
            "train": sorted(self.train),
        }

    @classmethod
    def from_record(cls, record: dict) -> "SplitManifest":
        try:
            return cls(
                seed=int(record["seed"]),
                ratio=float(record["ratio"]),
                train=frozenset(record["train"]),
                test=frozenset(record["test"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusError(f"bad split manifest: {exc}") from exc


def grouped_split(
    corpus: Sequence[LabeledExample], ratio: float = 0.75, seed: int = 0
) -> SplitManifest:
    """Assign whole CVEs to train until its text count first reaches the ratio.

    Ids are shuffled deterministically by seed; the outcome depends only on
    (corpus contents, ratio, seed), not on input ordering.
    """
    if not corpus:
        raise EmptyCorpus("cannot split an empty corpus")
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    counts: dict[str, int] = {}
    for example in corpus:
        counts[example.cve_id] = counts.get(example.cve_id, 0) + 1
    ids = sorted(counts)
    random.Random(seed).shuffle(ids)
    target = ratio * len(corpus)
    train: list[str] = []
    taken = 0
    index = 0
    while index < len(ids):
        train.append(ids[index])
        taken += counts[ids[index]]
        index += 1
        if taken >= target:
            break
    test = ids[index:]
    if not test:
        log.warning(
            "grouped split left the test side empty; one CVE group dominates the corpus"
        )
    return SplitManifest(
        seed=seed, ratio=ratio, train=frozenset(train), test=frozenset(test)
    )


def write_manifest(path: str | Path, manifest: SplitManifest) -> None:
    write_json(path, manifest.to_record())


def read_manifest(path: str | Path) -> SplitManifest:
    return SplitManifest.from_record(read_json(path))


def split_examples(
    corpus: Iterable[LabeledExample], manifest: SplitManifest
) -> tuple[list[LabeledExample], list[LabeledExample]]:
    """Partition corpus rows by the manifest; unknown CVE ids are an error."""
    train: list[LabeledExample] = []
    test: list[LabeledExample] = []
    for example in corpus:
        side = manifest.side_of(example.cve_id)
        (train if side == "train" else test).append(example)
    return train, test


@dataclass(frozen=True)
class DatasetStats:
    lengths: CorpusStats
    label_counts: Mapping[str, Mapping[str, int]]

    def label_fractions(self) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {}
        for component, per_value in self.label_counts.items():
            total = sum(per_value.values())
            out[component] = {v: n / total for v, n in per_value.items()}
        return out

    def to_record(self) -> dict:
        fractions = self.label_fractions()
        return {
            "lengths": self.lengths.to_record(),
            "labels": {
                component: {
                    value: {"count": count, "fraction": round(fractions[component][value], 6)}
                    for value, count in per_value.items()
                }
                for component, per_value in self.label_counts.items()
            },
        }


def corpus_stats(corpus: Sequence[LabeledExample]) -> DatasetStats:
    """Length statistics plus the per-component label value distribution."""
    if not corpus:
        raise EmptyInput("corpus_stats needs at least one example")
    lengths = length_stats([len(example.text) for example in corpus])
    counts: dict[str, dict[str, int]] = {component: {} for component in COMPONENTS}
    for example in corpus:
        for component, value in zip(COMPONENTS, example.labels.values()):
            counts[component][value] = counts[component].get(value, 0) + 1
    ordered = {
        component: dict(sorted(per_value.items()))
        for component, per_value in counts.items()
    }
    return DatasetStats(lengths=lengths, label_counts=ordered)
