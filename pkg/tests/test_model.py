import numpy as np
import pytest
from hypothesis import given, strategies as st

from rankagg.model import (
    AggregateRun,
    AggregationModel,
    InstanceError,
    PartialRanking,
    QueryInstance,
    RankDistribution,
    order_by_scores,
    reindex,
)


class TestPartialRanking:
    def test_positions_must_be_dense(self):
        with pytest.raises(InstanceError):
            PartialRanking({0: 1, 1: 3})
        with pytest.raises(InstanceError):
            PartialRanking({0: 1, 1: 1})

    def test_empty_is_allowed(self):
        assert len(PartialRanking({})) == 0

    def test_order_and_array(self):
        tau = PartialRanking.from_order([2, 0])
        assert tau.order() == [2, 0]
        assert tau.position_array(4).tolist() == [2, 0, 1, 0]
        assert 1 not in tau

    def test_immutable(self):
        tau = PartialRanking.from_order([0])
        with pytest.raises(TypeError):
            tau.positions[1] = 2


class TestReindex:
    def test_order_preserving_compaction(self):
        q = reindex("7", ["A", "B", "C"], [{"A": 3, "C": 7}])
        assert dict(q.inputs[0].positions) == {0: 1, 2: 2}
        assert q.doc_names == ("A", "B", "C")

    def test_singleton(self):
        q = reindex("7", ["A", "B"], [{"B": 9}])
        assert dict(q.inputs[0].positions) == {1: 1}

    def test_duplicate_position(self):
        with pytest.raises(InstanceError, match="duplicate position"):
            reindex("7", ["A", "B"], [{"A": 2, "B": 2}])

    def test_duplicate_key(self):
        with pytest.raises(InstanceError, match="duplicate document key"):
            reindex("7", ["A", "A"], [{"A": 1}])

    @given(st.lists(st.integers(1, 1000), min_size=1, max_size=30, unique=True))
    def test_relative_order_kept(self, raw_positions):
        names = [f"d{k}" for k in range(len(raw_positions))]
        q = reindex("q", names, [dict(zip(names, raw_positions))])
        pos = q.inputs[0].positions
        for a in range(len(names)):
            for b in range(len(names)):
                assert (raw_positions[a] < raw_positions[b]) == (pos[a] < pos[b])

    def test_label_mapping(self):
        q = reindex("q", ["x", "y"], [{"x": 1}], {"y": 2, "x": 0})
        assert q.labels == (0, 2)


class TestQueryInstance:
    def test_needs_inputs(self):
        with pytest.raises(InstanceError):
            QueryInstance("q", 2, ())

    def test_label_length(self):
        with pytest.raises(InstanceError):
            QueryInstance("q", 2, (PartialRanking({}),), labels=(1,))

    def test_item_range(self):
        with pytest.raises(InstanceError):
            QueryInstance("q", 2, (PartialRanking.from_order([5]),))


def test_rank_distribution_checks_mass():
    with pytest.raises(ValueError):
        RankDistribution(np.array([0.5, 0.4]))
    d = RankDistribution(np.array([0.25, 0.5, 0.25]))
    assert d.mean == pytest.approx(1.0)


def test_tie_rule():
    assert order_by_scores(np.array([1.0, 2.0, 1.0, 2.0])).tolist() == [1, 3, 0, 2]


def test_aggregate_run_validate():
    run = AggregateRun({"q": [(1, 2.0), (0, 2.0)]})
    with pytest.raises(ValueError):
        run.validate()
    AggregateRun({"q": [(0, 2.0), (1, 2.0)]}).validate()


def test_model_dimension_check():
    AggregationModel(weights=(0.0,) * 45, mapping_kind="MF", factor_rank=5, n_inputs=3)
    with pytest.raises(ValueError, match="dimension"):
        AggregationModel(weights=(0.0,) * 44, mapping_kind="MF", factor_rank=5, n_inputs=3)
    with pytest.raises(ValueError):
        AggregationModel(weights=(), sigma=0.0)
