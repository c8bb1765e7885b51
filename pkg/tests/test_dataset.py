"""Corpus assembly and grouped-split tests."""

import logging
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvsspredict.cvss import parse_vector
from cvsspredict.dataset import (
    CorpusBuild,
    CorpusError,
    EmptyCorpus,
    LabeledExample,
    NVD_SOURCE,
    SplitManifest,
    build_corpus,
    corpus_stats,
    grouped_split,
    read_corpus,
    read_manifest,
    split_examples,
    write_corpus,
    write_manifest,
)
from cvsspredict.errors import EmptyInput
from cvsspredict.nvd import VulnEntry
from cvsspredict.scraper.crawl import ScrapedText

V_NET = "AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H"
V_LOCAL = "AV:L/AC:H/PR:L/UI:R/S:C/C:L/I:N/A:N"


def entry(cve: str, description: str = "", vector: str | None = V_NET) -> VulnEntry:
    return VulnEntry(
        cve_id=cve,
        description=description or f"{cve} allows remote attackers to do things.",
        gt_vector=parse_vector(vector) if vector else None,
        gt_score=None,
    )


def scraped(cve: str, text: str = "", domain: str = "wpscan.com") -> ScrapedText:
    return ScrapedText(
        cve_id=cve,
        url=f"https://{domain}/x/{cve}",
        domain=domain,
        text=text or f"Long-form advisory body for {cve} from {domain}.",
    )


def example(cve: str, text: str, source: str = NVD_SOURCE, vector: str = V_NET) -> LabeledExample:
    return LabeledExample(cve_id=cve, text=text, source=source, labels=parse_vector(vector))


class TestBuildCorpus:
    def test_descriptions_plus_scraped(self):
        build = build_corpus(
            [entry("CVE-2021-0001"), entry("CVE-2021-0002", vector=V_LOCAL)],
            [scraped("CVE-2021-0001")],
        )
        assert len(build.examples) == 3
        sources = [e.source for e in build.examples]
        assert sources == [NVD_SOURCE, NVD_SOURCE, "wpscan.com"]
        assert build.orphan_count == 0

    def test_descriptions_only_filter(self):
        build = build_corpus(
            [entry("CVE-2021-0001"), entry("CVE-2021-0002")],
            [scraped("CVE-2021-0001")],
            sources="descriptions",
        )
        assert len(build.examples) == 2
        assert all(e.source == NVD_SOURCE for e in build.examples)

    def test_labels_join_ground_truth(self):
        entries = [entry("CVE-2021-0001", vector=V_NET), entry("CVE-2021-0002", vector=V_LOCAL)]
        texts = [scraped("CVE-2021-0002"), scraped("CVE-2021-0001")]
        build = build_corpus(entries, texts)
        truth = {e.cve_id: e.gt_vector for e in entries}
        for ex in build.examples:
            assert ex.labels == truth[ex.cve_id]

    def test_orphan_scraped_text_skipped_and_counted(self, caplog):
        with caplog.at_level(logging.WARNING, logger="cvsspredict.dataset"):
            build = build_corpus(
                [entry("CVE-2021-0001")],
                [scraped("CVE-2021-0001"), scraped("CVE-2021-9999")],
            )
        assert len(build.examples) == 2
        assert build.orphaned == ("CVE-2021-9999",)
        assert build.orphan_count == 1
        assert any("skipped" in r.message for r in caplog.records)

    def test_unscored_entry_yields_no_example(self):
        build = build_corpus([entry("CVE-2021-0001", vector=None), entry("CVE-2021-0002")])
        assert [e.cve_id for e in build.examples] == ["CVE-2021-0002"]
        assert build.unlabeled_entries == 1

    def test_scraped_text_for_unscored_entry_is_orphaned(self):
        build = build_corpus(
            [entry("CVE-2021-0001", vector=None)], [scraped("CVE-2021-0001")]
        )
        assert build.examples == ()
        assert build.orphaned == ("CVE-2021-0001",)

    def test_unknown_sources_filter(self):
        with pytest.raises(ValueError, match="sources"):
            build_corpus([], [], sources="everything")


class TestLabeledExample:
    def test_validation(self):
        with pytest.raises(ValueError, match="non-empty"):
            example("CVE-2021-0001", "")
        with pytest.raises(ValueError, match="CVE id"):
            example("2021-0001", "text")
        with pytest.raises(ValueError, match="source"):
            LabeledExample("CVE-2021-0001", "text", "", parse_vector(V_NET))

    def test_text_ref_is_short_stable_hex(self):
        ex = example("CVE-2021-0001", "some text")
        assert len(ex.text_ref) == 12
        assert set(ex.text_ref) <= set("0123456789abcdef")
        assert ex.text_ref == example("CVE-2021-0001", "some text").text_ref

    def test_text_ref_distinguishes_source_and_text(self):
        base = example("CVE-2021-0001", "some text")
        assert base.text_ref != example("CVE-2021-0001", "other text").text_ref
        assert base.text_ref != example("CVE-2021-0001", "some text", source="d.example").text_ref
        assert base.text_ref != example("CVE-2021-0002", "some text").text_ref

    def test_label_of(self):
        ex = example("CVE-2021-0001", "t", vector=V_LOCAL)
        assert ex.label_of("AV") == "L"
        assert ex.label_of("S") == "C"


class TestCorpusPersistence:
    def test_roundtrip(self, tmp_path):
        examples = [
            example("CVE-2021-0001", "first text"),
            example("CVE-2021-0002", "second text", source="wpscan.com", vector=V_LOCAL),
        ]
        path = tmp_path / "corpus.jsonl"
        assert write_corpus(path, examples) == 2
        assert read_corpus(path) == examples

    def test_record_shape(self):
        record = example("CVE-2021-0001", "body", source="wpscan.com").to_record()
        assert list(record) == ["cve_id", "labels", "source", "text"]
        assert record["labels"] == V_NET

    def test_rewrite_is_byte_identical(self, tmp_path):
        examples = [example("CVE-2021-0001", "first text")]
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_corpus(a, examples)
        write_corpus(b, read_corpus(a))
        assert a.read_bytes() == b.read_bytes()

    def test_bad_record_raises(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            '{"cve_id": "CVE-2021-0001", "labels": "AV:Z", "source": "nvd", "text": "x"}\n',
            encoding="utf-8",
        )
        with pytest.raises(CorpusError):
            read_corpus(path)


def uniform_corpus(n: int) -> list[LabeledExample]:
    return [example(f"CVE-2021-{10000 + i}", f"text {i}") for i in range(n)]


class TestGroupedSplit:
    def test_groups_never_straddle_sides(self):
        corpus = (
            [example("CVE-2021-0001", f"t{i}") for i in range(4)]
            + [example("CVE-2021-0002", "u")]
            + [example("CVE-2021-0003", "v")]
        )
        for seed in range(20):
            manifest = grouped_split(corpus, ratio=0.75, seed=seed)
            assert manifest.train.isdisjoint(manifest.test)
            assert manifest.train | manifest.test == {
                "CVE-2021-0001", "CVE-2021-0002", "CVE-2021-0003"
            }

    def test_uniform_corpus_hits_ratio_exactly(self):
        manifest = grouped_split(uniform_corpus(100), ratio=0.75, seed=7)
        assert len(manifest.train) == 75
        assert len(manifest.test) == 25

    def test_single_group_corpus_warns_and_empties_test(self, caplog):
        corpus = [example("CVE-2021-0001", f"t{i}") for i in range(5)]
        with caplog.at_level(logging.WARNING, logger="cvsspredict.dataset"):
            manifest = grouped_split(corpus, ratio=0.75, seed=1)
        assert manifest.train == {"CVE-2021-0001"}
        assert manifest.test == frozenset()
        assert any("test side empty" in r.message for r in caplog.records)

    def test_deterministic_in_seed(self):
        corpus = uniform_corpus(60)
        assert grouped_split(corpus, 0.75, 3) == grouped_split(corpus, 0.75, 3)
        distinct = {
            (frozenset(grouped_split(corpus, 0.75, s).train)) for s in range(10)
        }
        assert len(distinct) > 1

    def test_invariant_to_input_order(self):
        corpus = uniform_corpus(40) + [example("CVE-2021-0001", f"t{i}") for i in range(3)]
        jumbled = list(corpus)
        random.Random(9).shuffle(jumbled)
        assert grouped_split(corpus, 0.75, 5) == grouped_split(jumbled, 0.75, 5)

    def test_empty_and_bad_ratio(self):
        with pytest.raises(EmptyCorpus):
            grouped_split([], 0.75, 0)
        with pytest.raises(ValueError, match="ratio"):
            grouped_split(uniform_corpus(4), 1.0, 0)
        with pytest.raises(ValueError, match="ratio"):
            grouped_split(uniform_corpus(4), 0.0, 0)

    def test_many_seeds_stay_within_two_points(self):
        # Group sizes 1..3: no group holds more than 2% of texts.
        rng = random.Random(13)
        corpus = []
        for i in range(150):
            for j in range(rng.randint(1, 3)):
                corpus.append(example(f"CVE-2021-{10000 + i}", f"text {i} {j}"))
        counts = {}
        for ex in corpus:
            counts[ex.cve_id] = counts.get(ex.cve_id, 0) + 1
        assert max(counts.values()) / len(corpus) <= 0.02
        for seed in range(50):
            manifest = grouped_split(corpus, ratio=0.75, seed=seed)
            train_texts = sum(1 for ex in corpus if ex.cve_id in manifest.train)
            assert abs(train_texts / len(corpus) - 0.75) <= 0.02

    @settings(max_examples=60, deadline=None)
    @given(
        sizes=st.lists(st.integers(min_value=1, max_value=4), min_size=2, max_size=30),
        ratio=st.floats(min_value=0.2, max_value=0.9),
        seed=st.integers(min_value=0, max_value=2**31),
    )
    def test_split_properties(self, sizes, ratio, seed):
        corpus = [
            example(f"CVE-2021-{10000 + i}", f"text {i} {j}")
            for i, size in enumerate(sizes)
            for j in range(size)
        ]
        manifest = grouped_split(corpus, ratio=ratio, seed=seed)
        assert manifest.train.isdisjoint(manifest.test)
        assert manifest.train | manifest.test == {ex.cve_id for ex in corpus}
        train_texts = sum(1 for ex in corpus if ex.cve_id in manifest.train)
        # Greedy whole-group assignment: reaches the target, overshoots by
        # at most the largest group.
        assert train_texts >= ratio * len(corpus)
        assert train_texts < ratio * len(corpus) + max(sizes)


class TestManifest:
    def test_roundtrip(self, tmp_path):
        manifest = grouped_split(uniform_corpus(20), 0.75, 2)
        path = tmp_path / "split.json"
        write_manifest(path, manifest)
        assert read_manifest(path) == manifest

    def test_record_sorted_ids(self):
        manifest = grouped_split(uniform_corpus(8), 0.75, 0)
        record = manifest.to_record()
        assert record["train"] == sorted(record["train"])
        assert record["test"] == sorted(record["test"])
        assert record["ratio"] == 0.75 and record["seed"] == 0

    def test_overlap_rejected(self):
        with pytest.raises(ValueError, match="both sides"):
            SplitManifest(seed=0, ratio=0.5, train=frozenset({"CVE-2021-0001"}),
                          test=frozenset({"CVE-2021-0001"}))

    def test_bad_file_raises(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text('{"seed": 1}', encoding="utf-8")
        with pytest.raises(CorpusError):
            read_manifest(path)

    def test_side_of(self):
        manifest = SplitManifest(
            seed=0, ratio=0.5,
            train=frozenset({"CVE-2021-0001"}), test=frozenset({"CVE-2021-0002"}),
        )
        assert manifest.side_of("CVE-2021-0001") == "train"
        assert manifest.side_of("CVE-2021-0002") == "test"
        with pytest.raises(KeyError):
            manifest.side_of("CVE-2021-0003")

    def test_split_examples_partitions(self):
        corpus = uniform_corpus(10)
        manifest = grouped_split(corpus, 0.75, 4)
        train, test = split_examples(corpus, manifest)
        assert len(train) + len(test) == 10
        assert {e.cve_id for e in train} == manifest.train
        assert {e.cve_id for e in test} == manifest.test
        with pytest.raises(KeyError):
            split_examples([example("CVE-2021-9999", "t")], manifest)


class TestCorpusStats:
    def test_label_distribution(self):
        corpus = [
            example("CVE-2021-0001", "aa", vector=V_NET),
            example("CVE-2021-0002", "bbbb", vector=V_NET),
            example("CVE-2021-0003", "cccccc", vector=V_LOCAL),
        ]
        stats = corpus_stats(corpus)
        assert stats.label_counts["AV"] == {"L": 1, "N": 2}
        fractions = stats.label_fractions()
        assert fractions["AV"]["N"] == pytest.approx(2 / 3)
        assert fractions["AV"]["L"] == pytest.approx(1 / 3)

    def test_length_stats_wired_through(self):
        corpus = [example("CVE-2021-0001", "x" * n) for n in (10, 20, 120)]
        stats = corpus_stats(corpus)
        assert stats.lengths.count == 3
        assert stats.lengths.min_len == 10
        assert stats.lengths.max_len == 120
        assert stats.lengths.mean_len == pytest.approx(50.0)

    def test_record_shape(self):
        stats = corpus_stats([example("CVE-2021-0001", "abc")])
        record = stats.to_record()
        assert set(record) == {"lengths", "labels"}
        assert record["labels"]["AV"]["N"] == {"count": 1, "fraction": 1.0}

    def test_empty_rejected(self):
        with pytest.raises(EmptyInput):
            corpus_stats([])
