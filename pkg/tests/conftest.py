"""Shared fixtures for the rulesmith test suite."""

from pathlib import Path

import pytest

from rulesmith.nuclei import parse_template, record_from_template

FIXTURES = Path(__file__).parent / "fixtures"
TEMPLATE_DIR = FIXTURES / "templates"

# The wire-format anchor fixture: traversal rule for the STAGIL Jira endpoint,
# in the bare rule shape the generator emits.
TRAVERSAL_RULE_JSON = """{"conditions": [
  {"var": "query_string",
   "comparison": "contains",
   "constant": "../../"},
  {"var": "path",
   "comparison": "equals",
   "constant":
     "/plugins/servlet/snjFooterNavigationConfig"}
 ],
 "conditions_match": "and"}"""

EXPLOIT_RAW = (
    "GET /plugins/servlet/snjFooterNavigationConfig?fileName=../../../../etc/passwd HTTP/1.1\n"
    "Host: target.example\n\n"
)
BENIGN_RAW = (
    "GET /plugins/servlet/snjFooterNavigationConfig?fileName=logo.png HTTP/1.1\n"
    "Host: target.example\n\n"
)


@pytest.fixture
def traversal_rule_json() -> str:
    return TRAVERSAL_RULE_JSON


@pytest.fixture
def traversal_record():
    text = (TEMPLATE_DIR / "CVE-2023-26256.yaml").read_text(encoding="utf-8")
    return record_from_template(parse_template(text))


@pytest.fixture
def template_dir() -> Path:
    return TEMPLATE_DIR


@pytest.fixture
def feeds_dir() -> Path:
    return FIXTURES / "feeds"


# ── acceptance criteria reporting ────────────────────────────────────────────

_ACCEPTANCE_RESULTS: dict[str, str] = {}


def record_acceptance(criterion: str, outcome: str) -> None:
    _ACCEPTANCE_RESULTS[criterion] = outcome


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    _ACCEPTANCE_RESULTS[name] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"{_ACCEPTANCE_RESULTS[name]}  {name}")
