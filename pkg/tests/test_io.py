import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rankagg.io import (
    FormatError,
    format_agg_lines,
    load_model,
    parse_agg_file,
    parse_agg_lines,
    read_run,
    save_model,
    write_agg_file,
    write_run,
)
from rankagg.model import AggregateRun, AggregationModel, PartialRanking, QueryInstance


class TestParse:
    def test_field_mapping(self):
        (q,) = parse_agg_lines(["1 qid:7 1:2 2:NULL 3:1 #docid=d42", "0 qid:7 1:1 2:NULL 3:NULL #docid=d1"])
        assert q.query_id == "7"
        assert q.doc_names == ("d42", "d1")
        assert q.labels == (1, 0)
        assert dict(q.inputs[0].positions) == {0: 2, 1: 1}
        assert 0 not in q.inputs[1]
        assert dict(q.inputs[2].positions) == {0: 1}

    def test_interleaved_blocks(self):
        sorted_lines = [
            "2 qid:1 1:1 #docid=a", "0 qid:1 1:2 #docid=b",
            "1 qid:2 1:1 #docid=c", "0 qid:2 1:NULL #docid=d",
        ]
        interleaved = [sorted_lines[2], sorted_lines[0], sorted_lines[3], sorted_lines[1]]
        assert parse_agg_lines(interleaved) == parse_agg_lines(sorted_lines)

    def test_numeric_qid_order(self):
        lines = ["0 qid:10 1:1 #docid=a", "0 qid:9 1:1 #docid=a"]
        assert [q.query_id for q in parse_agg_lines(lines)] == ["9", "10"]

    def test_inconsistent_input_count(self):
        with pytest.raises(FormatError, match="inconsistent input count") as exc:
            parse_agg_lines(["0 qid:1 1:1 2:2 3:3 #docid=a", "0 qid:1 1:2 2:1 3:1 4:1 #docid=b"])
        assert exc.value.lineno == 2

    def test_non_integer_grade(self):
        with pytest.raises(FormatError, match="grade"):
            parse_agg_lines(["x qid:1 1:1 #docid=a"])

    def test_duplicate_doc(self):
        with pytest.raises(FormatError, match="duplicate"):
            parse_agg_lines(["0 qid:1 1:1 #docid=a", "0 qid:1 1:2 #docid=a"])

    def test_duplicate_position(self):
        with pytest.raises(FormatError, match="duplicate position") as exc:
            parse_agg_lines(["0 qid:1 1:2 #docid=a", "0 qid:1 1:2 #docid=b"])
        assert exc.value.lineno == 2

    @pytest.mark.parametrize("line", [
        "0 qid:1 #docid=a",
        "0 1 1:1 #docid=a",
        "0 qid:1 2:1 #docid=a",
        "0 qid:1 1:0 #docid=a",
        "0 qid:1 1:1.5 #docid=a",
        "0 qid:1 1:1",
    ])
    def test_malformed(self, line):
        with pytest.raises(FormatError):
            parse_agg_lines([line])

    def test_unlabeled(self, four_item_file):
        (q,) = parse_agg_file(four_item_file)
        assert q.labels is None
        assert q.m == 3

    def test_mixed_labels(self):
        with pytest.raises(FormatError, match="mixes"):
            parse_agg_lines(["0 qid:1 1:1 #docid=a", "-1 qid:1 1:2 #docid=b"])

    def test_spaced_docid_comment(self):
        (q,) = parse_agg_lines(["0 qid:1 1:1 #docid = GX000-00 inc = 1 prob = 0.5"])
        assert q.doc_names == ("GX000-00",)


def _instances_strategy():
    @st.composite
    def build(draw):
        out = []
        for k in range(draw(st.integers(1, 3))):
            n = draw(st.integers(1, 6))
            m = draw(st.integers(1, 3))
            inputs = []
            for _ in range(m):
                subset = draw(st.lists(st.integers(0, n - 1), unique=True, max_size=n))
                inputs.append(PartialRanking.from_order(subset))
            labels = draw(st.none() | st.lists(st.integers(0, 2), min_size=n, max_size=n).map(tuple))
            out.append(QueryInstance(str(k + 1), n, tuple(inputs), labels, tuple(f"doc{j}" for j in range(n))))
        return out
    return build()


@settings(max_examples=50, deadline=None)
@given(_instances_strategy())
def test_round_trip(instances):
    once = parse_agg_lines(format_agg_lines(instances))
    assert once == instances
    assert parse_agg_lines(format_agg_lines(once)) == once


def test_file_round_trip(tmp_path, four_item):
    path = tmp_path / "x.txt"
    write_agg_file([four_item], path)
    assert parse_agg_file(path) == [four_item]


class TestRun:
    def test_descending(self, tmp_path, four_item):
        run = AggregateRun()
        run.add_scores(four_item, np.array([1.0, 2.0, 0.0, 0.5]))
        path = tmp_path / "run.txt"
        write_run(run, path, "tag")
        lines = path.read_text().splitlines()
        assert lines[0] == "1 Q0 b 1 2.000000 tag"
        assert lines[1] == "1 Q0 a 2 1.000000 tag"
        assert [ln.split()[2] for ln in lines] == ["b", "a", "d", "c"]

    def test_tie_rule(self, tmp_path, four_item):
        run = AggregateRun()
        run.add_scores(four_item, np.array([1.0, 1.0, 1.0, 1.0]))
        path = tmp_path / "run.txt"
        write_run(run, path, "tag")
        assert [ln.split()[2] for ln in path.read_text().splitlines()] == ["a", "b", "c", "d"]

    def test_rounding_never_reorders(self, tmp_path, four_item):
        run = AggregateRun()
        run.add_scores(four_item, np.array([1.0000001, 1.0000002, 0.0, 0.0]))
        path = tmp_path / "run.txt"
        write_run(run, path)
        assert [ln.split()[2] for ln in path.read_text().splitlines()] == ["b", "a", "c", "d"]
        assert read_run(path, [four_item]).ranking("1") == [1, 0, 2, 3]

    def test_empty(self, tmp_path):
        path = tmp_path / "run.txt"
        write_run(AggregateRun(), path)
        assert path.read_text() == ""

    def test_unwritable(self, tmp_path):
        with pytest.raises(OSError):
            write_run(AggregateRun(), tmp_path / "missing" / "run.txt")

    def test_read_unknown_doc(self, tmp_path, four_item):
        path = tmp_path / "run.txt"
        path.write_text("1 Q0 zz 1 1.0 t\n")
        with pytest.raises(FormatError, match="unknown document"):
            read_run(path, [four_item])


class TestModelFile:
    def test_default_round_trip(self, tmp_path):
        model = AggregationModel(weights=(0.0, 0.0, 0.0), sigma=0.01, n_inputs=3)
        save_model(model, tmp_path / "m.json")
        assert load_model(tmp_path / "m.json") == model

    def test_full_precision(self, tmp_path):
        w = tuple(np.random.default_rng(0).normal(size=10) / 3.0)
        model = AggregationModel(weights=w, sigma=1 / 3, mapping_kind="TF", factor_rank=5,
                                 objective_kind="ERR_s", rbp_p=0.8, n_inputs=4, seed=9)
        save_model(model, tmp_path / "m.json")
        loaded = load_model(tmp_path / "m.json")
        assert loaded == model
        assert loaded.weights == w

    def test_mf_dimension_mismatch(self, tmp_path):
        data = {"weights": [0.0] * 44, "sigma": 0.01, "mapping_kind": "MF", "factor_rank": 5,
                "objective_kind": "NDCG_s", "rbp_p": 0.95, "y_max": 2, "n_inputs": 3}
        (tmp_path / "m.json").write_text(json.dumps(data))
        with pytest.raises(FormatError, match="dimension"):
            load_model(tmp_path / "m.json")

    def test_truncated(self, tmp_path):
        model = AggregationModel(weights=(0.5,), n_inputs=1)
        save_model(model, tmp_path / "m.json")
        text = (tmp_path / "m.json").read_text()
        (tmp_path / "m.json").write_text(text[: len(text) // 2])
        with pytest.raises(FormatError):
            load_model(tmp_path / "m.json")

    def test_missing_field(self, tmp_path):
        (tmp_path / "m.json").write_text(json.dumps({"weights": [], "sigma": 0.1}))
        with pytest.raises(FormatError, match="lacks"):
            load_model(tmp_path / "m.json")
