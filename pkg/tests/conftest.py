import json
from pathlib import Path

import pytest

from cvsspredict.cvss import compute_base_score, parse_vector

FIXTURES = Path(__file__).parent / "fixtures"

# The nine archived advisory pages: (cve_id, reference url, extractor id).
# The qualcomm URL is the pre-move form that needs one rewrite retry.
SCRAPER_FIXTURES = (
    ("CVE-2021-1148",
     "https://tools.cisco.com/security/center/content/CiscoSecurityAdvisory/cisco-sa-example-crlf-Vrq3Bsq8",
     "cisco-advisory"),
    ("CVE-2021-20411", "https://www.ibm.com/support/pages/node/6415959", "ibm-bulletin"),
    ("CVE-2020-27867", "https://www.zerodayinitiative.com/advisories/ZDI-20-1451/", "zdi-advisory"),
    ("CVE-2021-21808", "https://talosintelligence.com/vulnerability_reports/TALOS-2021-1279", "talos-report"),
    ("CVE-2020-11173",
     "https://www.qualcomm.com/company/product-security/bulletins/june-2020-security-bulletin",
     "qualcomm-bulletin"),
    ("CVE-2021-22986", "https://support.f5.com/csp/article/K03009991", "f5-article"),
    ("CVE-2019-10010",
     "https://wpscan.com/vulnerability/9d5bfdd2-9f4f-4f2f-9a27-6e5ef4f2b1a1", "wpscan-entry"),
    ("CVE-2020-8752",
     "https://www.intel.com/content/www/us/en/security-center/advisory/intel-sa-00404.html",
     "intel-advisory"),
    ("CVE-2021-23337", "https://security.snyk.io/vuln/SNYK-JS-LODASH-1040724", "snyk-vuln"),
)


def feed_item(
    cve_id: str,
    description: str,
    urls: tuple[str, ...] = (),
    vector: str | None = None,
    published: str | None = None,
) -> dict:
    """One CVE item in the feed wire schema."""
    item: dict = {
        "cve": {
            "CVE_data_meta": {"ID": cve_id},
            "references": {
                "reference_data": [{"url": url, "tags": []} for url in urls]
            },
            "description": {
                "description_data": [{"lang": "en", "value": description}]
            },
        },
        "impact": {},
    }
    if vector is not None:
        parsed = parse_vector(vector)
        item["impact"] = {
            "baseMetricV3": {
                "cvssV3": {
                    "vectorString": "CVSS:3.1/" + parsed.serialize(),
                    "baseScore": compute_base_score(parsed).base_score,
                }
            }
        }
    if published is not None:
        item["publishedDate"] = published
    return item


def feed_doc(items) -> dict:
    return {"CVE_data_type": "CVE", "CVE_Items": list(items)}


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def sample_feed_path() -> Path:
    return FIXTURES / "nvdcve-1.1-sample.json"


@pytest.fixture(scope="session")
def sample_feed_doc(sample_feed_path) -> dict:
    return json.loads(sample_feed_path.read_text(encoding="utf-8"))
