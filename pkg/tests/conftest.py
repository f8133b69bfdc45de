import pytest

from rankagg.model import PartialRanking, QueryInstance

A, B, C, D = 0, 1, 2, 3

FOUR_ITEM_FILE = """\
-1 qid:1 1:1 2:NULL 3:NULL #docid=a
-1 qid:1 1:2 2:1 3:NULL #docid=b
-1 qid:1 1:NULL 2:2 3:1 #docid=c
-1 qid:1 1:NULL 2:NULL 3:2 #docid=d
"""


def make_four_item(labels=None) -> QueryInstance:
    """tau1 = a > b, tau2 = b > c, tau3 = c > d over {a, b, c, d}."""
    return QueryInstance(
        query_id="1",
        n=4,
        inputs=(
            PartialRanking.from_order([A, B]),
            PartialRanking.from_order([B, C]),
            PartialRanking.from_order([C, D]),
        ),
        labels=labels,
        doc_names=("a", "b", "c", "d"),
    )


@pytest.fixture
def four_item() -> QueryInstance:
    return make_four_item()


@pytest.fixture
def four_item_file(tmp_path):
    path = tmp_path / "four.txt"
    path.write_text(FOUR_ITEM_FILE)
    return path


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
