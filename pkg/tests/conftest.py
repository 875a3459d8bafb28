from pathlib import Path

import pytest

from phigrade import corpus
from phigrade.pipeline import replay_table_from_gold
from phigrade.prompt import build_prompt, load_exemplars
from phigrade.rules import load_rule_pack
from phigrade.taxonomy import load_taxonomy

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def taxonomy():
    return load_taxonomy()


@pytest.fixture(scope="session")
def pack(taxonomy):
    return load_rule_pack(taxonomy=taxonomy)


@pytest.fixture(scope="session")
def exemplars(taxonomy):
    return load_exemplars(None, taxonomy)


@pytest.fixture(scope="session")
def bundle(taxonomy, exemplars):
    return build_prompt(taxonomy, exemplars)


@pytest.fixture(scope="session")
def benchmark(taxonomy):
    """(records, gold) of the committed 1,000-record fixture."""
    records = corpus.read_corpus(FIXTURES / "benchmark.jsonl")
    gold = corpus.read_gold(FIXTURES / "gold.jsonl", taxonomy)
    return records, gold


@pytest.fixture(scope="session")
def replay_table(benchmark):
    records, gold = benchmark
    return replay_table_from_gold(records, gold)


# ---------------------------------------------------------------------------
# one summary line per acceptance criterion

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): exit criterion")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None:
            number, title = mark.args
            _criteria.setdefault(number, {"title": title, "outcomes": []})
            item.user_properties.append(("acceptance", number))


def pytest_runtest_logreport(report):
    number = dict(report.user_properties).get("acceptance")
    if number is None:
        return
    if report.when == "call" or report.outcome != "passed":
        _criteria[number]["outcomes"].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        outcomes = entry["outcomes"]
        if not outcomes:
            status = "NOT RUN"
        elif "failed" in outcomes:
            status = "FAIL"
        elif all(o == "skipped" for o in outcomes):
            status = "SKIP"
        else:
            status = "PASS"
        tr.write_line(f"AC{number} {status:<7} {entry['title']}")
