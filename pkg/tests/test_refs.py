"""Reference analysis tests.

Group assignments and ratings in the packaged taxonomy mirror the published
frequency table; those rows are checked here as data, not recomputed. Note the
known inconsistency upstream: the frequency table lists 2547 references for
www.zerodayinitiative.com while the domain-selection narrative says 2899. The
packaged table carries no counts, so nothing here depends on either number.
"""

from datetime import date

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cvsspredict.errors import EmptyInput
from cvsspredict.nvd import Reference, VulnEntry
from cvsspredict.refs import (
    DomainGroup,
    InvalidUrl,
    TaxonomyError,
    build_report,
    classify_domain,
    extract_domain,
    load_taxonomy,
    rank_domains,
    reference_stats,
    render_table,
)


def entry(seq: int, urls: list[str], year: int | None = None) -> VulnEntry:
    return VulnEntry(
        cve_id=f"CVE-2020-{10000 + seq}",
        description="d",
        references=tuple(Reference(url=u) for u in urls),
        published=date(year, 6, 1) if year else None,
    )


@pytest.fixture(scope="module")
def taxonomy():
    return load_taxonomy()


class TestExtractDomain:
    def test_plain(self):
        assert extract_domain("https://lists.apache.org/thread/xyz") == "lists.apache.org"

    def test_case_and_port_normalized(self):
        assert extract_domain("HTTP://GitHub.com:443/a/b") == "github.com"

    def test_subdomains_kept(self):
        assert extract_domain("https://lists.debian.org/x") == "lists.debian.org"
        assert extract_domain("https://www.debian.org/x") == "www.debian.org"

    def test_ftp_scheme_still_has_host(self):
        assert extract_domain("ftp://ftp.netbsd.org/pub/advisory") == "ftp.netbsd.org"

    def test_no_scheme_rejected(self):
        with pytest.raises(InvalidUrl):
            extract_domain("www.securityfocus.com/bid/1")

    def test_no_host_rejected(self):
        with pytest.raises(InvalidUrl):
            extract_domain("mailto:security@example.com")
        with pytest.raises(InvalidUrl):
            extract_domain("")


class TestTaxonomy:
    def test_all_six_groups_present(self, taxonomy):
        assert sorted(taxonomy.groups) == [1, 2, 3, 4, 5, 6]
        names = [taxonomy.groups[i].name for i in range(1, 7)]
        assert names == [
            "VcsBugTracker", "MailingList", "Patchnotes",
            "Advisory", "ThirdParty", "BlogSocial",
        ]

    def test_ratings_match_published_table(self, taxonomy):
        expected = {
            1: ("User", 3, 3, 2),
            2: ("User", 2, 1, 2),
            3: ("Vendor", 3, 5, 2),
            4: ("Vendor", 5, 5, 4),
            5: ("ThirdParty", 4, 5, 4),
            6: ("User", 2, 1, 3),
        }
        for gid, (origin, unique, uniform, abstract) in expected.items():
            group = taxonomy.groups[gid]
            assert group.origin == origin
            assert group.unique_rating == unique
            assert group.uniform_rating == uniform
            assert group.abstract_text_rating == abstract

    def test_known_domain_rows(self, taxonomy):
        assert classify_domain("github.com", taxonomy) == {1}
        assert classify_domain("access.redhat.com", taxonomy) == {3, 4}
        assert classify_domain("tools.cisco.com", taxonomy) == {4, 5}
        assert classify_domain("www.debian.org", taxonomy) == {2, 3}
        assert classify_domain("wpscan.com", taxonomy) == {5}
        assert classify_domain("medium.com", taxonomy) == {6}

    def test_unknown_domain_unclassified(self, taxonomy):
        assert classify_domain("example.invalid", taxonomy) is None

    def test_lookup_case_insensitive(self, taxonomy):
        assert classify_domain("GitHub.com", taxonomy) == {1}

    def test_never_returns_empty_set(self, taxonomy):
        for domain in list(taxonomy.domains) + ["nope.example"]:
            groups = classify_domain(domain, taxonomy)
            assert groups is None or len(groups) > 0

    def test_seeded_row_count(self, taxonomy):
        assert len(taxonomy.domains) == 33

    def test_bad_rating_rejected(self):
        with pytest.raises(TaxonomyError):
            DomainGroup(id=1, name="VcsBugTracker", origin="User",
                        unique_rating=0, uniform_rating=3, abstract_text_rating=2)

    def test_bad_config_rejected(self, tmp_path):
        bad = tmp_path / "tax.json"
        bad.write_text(
            '{"groups": [{"id": 1, "name": "VcsBugTracker", "origin": "User",'
            ' "unique_rating": 3, "uniform_rating": 3, "abstract_text_rating": 2}],'
            ' "domains": [{"domain": "a.com", "groups": [9]}]}',
            encoding="utf-8",
        )
        with pytest.raises(TaxonomyError):
            load_taxonomy(bad)


class TestRankDomains:
    def test_counts_and_order(self):
        entries = [
            entry(1, ["https://a.com/1", "https://a.com/2", "https://b.com/1"]),
            entry(2, ["https://a.com/3"]),
        ]
        ranking = rank_domains(entries, top_n=2)
        assert [(r.domain, r.count) for r in ranking] == [("a.com", 3), ("b.com", 1)]

    def test_tie_breaks_lexicographic(self):
        entries = [entry(1, ["https://b.com/1", "https://a.com/1"])]
        ranking = rank_domains(entries, top_n=5)
        assert [r.domain for r in ranking] == ["a.com", "b.com"]

    def test_top_n_truncates(self):
        entries = [entry(1, [f"https://d{i}.com/x" for i in range(10)])]
        assert len(rank_domains(entries, top_n=3)) == 3

    def test_taxonomy_annotation(self, taxonomy):
        entries = [entry(1, ["https://github.com/x", "https://unknown.example/y"])]
        by_domain = {r.domain: r for r in rank_domains(entries, 10, taxonomy)}
        assert by_domain["github.com"].groups == {1}
        assert by_domain["github.com"].available is True
        assert by_domain["unknown.example"].groups is None
        assert by_domain["unknown.example"].available is None

    def test_empty_entries(self):
        with pytest.raises(EmptyInput):
            rank_domains([], top_n=1)

    def test_bad_top_n(self):
        with pytest.raises(ValueError):
            rank_domains([entry(1, ["https://a.com/1"])], top_n=0)

    def test_unparseable_reference_skipped_with_warning(self, caplog):
        entries = [entry(1, ["https://a.com/1", "not-a-url"])]
        ranking = rank_domains(entries, top_n=5)
        assert [r.domain for r in ranking] == ["a.com"]
        assert "unattributable" in caplog.text


class TestReferenceStats:
    def test_small_case(self):
        entries = [
            entry(1, ["https://a.com/1"]),
            entry(2, ["https://a.com/2", "https://b.com/1"]),
            entry(3, ["https://a.com/3", "https://b.com/2", "https://b.com/3"]),
        ]
        stats = reference_stats(entries)
        assert stats.total_refs == 6
        assert stats.per_cve_median == 2
        assert stats.distinct_domains == 2
        assert stats.top50_share == 1.0

    def test_zero_reference_entry(self):
        stats = reference_stats([entry(1, [])])
        assert stats.total_refs == 0
        assert stats.per_cve_median == 0
        assert stats.per_cve_p95 == 0
        assert stats.distinct_domains == 0
        assert stats.top50_share == 0.0

    def test_top50_share_with_many_domains(self):
        # One heavy domain (40 refs) plus 60 singletons: the 50 most frequent
        # cover 40 + 49 = 89 of 100 references.
        entries = [entry(0, [f"https://h.com/{i}" for i in range(40)])]
        entries += [entry(i + 1, [f"https://s{i:02d}.com/x"]) for i in range(60)]
        stats = reference_stats(entries)
        assert stats.total_refs == 100
        assert stats.distinct_domains == 61
        assert stats.top50_share == pytest.approx(0.89)

    def test_p95_nearest_rank(self):
        entries = [entry(i, ["https://a.com/x"] * n) for i, n in enumerate(range(1, 21))]
        stats = reference_stats(entries)
        assert stats.per_cve_p95 == 19

    def test_by_year_grouping(self):
        entries = [
            entry(1, ["https://a.com/1"], year=2016),
            entry(2, ["https://a.com/2", "https://b.com/1"], year=2016),
            entry(3, ["https://c.com/1"], year=2021),
            entry(4, ["https://d.com/1"]),
        ]
        yearly = reference_stats(entries, by_year=True)
        assert sorted(yearly) == [2016, 2021]
        assert yearly[2016].total_refs == 3
        assert yearly[2016].distinct_domains == 2
        assert yearly[2021].total_refs == 1

    def test_empty_raises(self):
        with pytest.raises(EmptyInput):
            reference_stats([])

    @given(
        st.lists(
            st.lists(
                st.sampled_from([f"https://d{i}.example/p" for i in range(8)]),
                max_size=6,
            ),
            min_size=1,
            max_size=30,
        )
    )
    def test_domain_counts_sum_to_total(self, url_lists):
        entries = [entry(i, urls) for i, urls in enumerate(url_lists)]
        stats = reference_stats(entries)
        ranking = rank_domains(entries, top_n=100) if stats.total_refs else []
        assert sum(r.count for r in ranking) == stats.total_refs
        counts = [r.count for r in ranking]
        assert counts == sorted(counts, reverse=True)
        assert stats.per_cve_median <= stats.per_cve_p95


class TestReport:
    def test_report_shape(self, taxonomy):
        entries = [
            entry(1, ["https://github.com/a", "https://medium.com/b"], year=2020),
            entry(2, ["https://access.redhat.com/errata/x"], year=2021),
            entry(3, ["https://unknown.example/p"], year=2021),
        ]
        report = build_report(entries, taxonomy, top_n=10, by_year=True)
        assert report["stats"]["total_refs"] == 4
        assert report["group_totals"]["1"] == {"name": "VcsBugTracker", "refs": 1}
        # A multi-group domain counts toward each of its groups.
        assert report["group_totals"]["3"]["refs"] == 1
        assert report["group_totals"]["4"]["refs"] == 1
        assert report["unclassified_refs"] == 1
        assert sorted(report["by_year"]) == ["2020", "2021"]

    def test_render_table(self, taxonomy):
        entries = [entry(1, ["https://github.com/a", "https://nope.example/x"])]
        text = render_table(build_report(entries, taxonomy, top_n=5))
        assert "github.com" in text
        assert "total refs 2" in text
        lines = text.splitlines()
        assert len(lines) == 1 + 2 + 1  # header, two rows, summary
