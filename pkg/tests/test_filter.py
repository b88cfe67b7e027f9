import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from streamclean.classifier import SoftmaxRegression
from streamclean.filter import filter_batch, oracle_partition, score_filter
from streamclean.types import Sample

from stubs import TableModel


def _one(given_label, probs):
    model = TableModel({0: probs}, len(probs))
    return filter_batch(model, [Sample(0, np.array([0.0]), given_label, 0)])


def test_second_best_is_clean():
    assert len(_one(1, [0.6, 0.3, 0.1]).clean) == 1
    assert len(_one(2, [0.6, 0.3, 0.1]).suspicious) == 1


def test_uniform_model_keeps_labels_zero_and_one():
    batch = [Sample(i, np.zeros(3), i % 5, i % 5) for i in range(25)]
    part = filter_batch(SoftmaxRegression(5, 3), batch)
    assert {s.given_label for s in part.clean} == {0, 1}
    assert len(part.clean) == 10 and len(part.suspicious) == 15


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(0, 6)), min_size=1, max_size=40),
       st.integers(1, 4))
def test_partition_and_argmax_monotonicity(rows, k):
    table = {j: np.roll([0.4, 0.3, 0.2, 0.1], j % 4) for j in range(7)}
    batch = [Sample(i, np.array([float(key)]), g, t) for i, (g, t, key) in enumerate(rows)]
    part = filter_batch(TableModel(table, 4), batch, top_k=k)
    part.check()
    assert sorted(s.id for s in part.clean + part.suspicious) == list(range(len(batch)))
    for s in part.suspicious:
        assert s.given_label != int(np.argmax(table[int(s.features[0])]))


def test_score_counts_by_hand():
    # (given, true, routed-to-clean)
    rows = [(0, 0, 1), (1, 1, 1), (2, 0, 1), (3, 3, 0), (1, 2, 0),
            (0, 0, 1), (2, 1, 0), (3, 3, 1), (1, 0, 1), (2, 2, 0)]
    batch = [Sample(i, np.zeros(1), g, t) for i, (g, t, _) in enumerate(rows)]
    part = oracle_partition([])
    for s, (_, _, c) in zip(batch, rows):
        (part.clean if c else part.suspicious).append(s)
    score = score_filter(part, batch)
    # clean&kept: 0,1,5,7 -> 4; noisy&kept: 2,8 -> 2; noisy&dropped: 4,6 -> 2; clean&dropped: 3,9 -> 2
    assert (score.tp_rate, score.fp_rate, score.tn_rate, score.fn_rate) == (0.4, 0.2, 0.2, 0.2)


def test_all_clean_all_kept():
    batch = [Sample(i, np.zeros(1), 0, 0) for i in range(4)]
    s = score_filter(oracle_partition(batch), batch)
    assert (s.tp_rate, s.fp_rate, s.tn_rate, s.fn_rate) == (1.0, 0.0, 0.0, 0.0)


def test_oracle_partition_at_thirty_percent():
    batch = [Sample(i, np.zeros(1), int(i % 10 < 3), 0) for i in range(1000)]
    s = score_filter(oracle_partition(batch), batch)
    assert (s.tp_rate, s.fp_rate) == (0.70, 0.0)


def test_empty_batch():
    part = filter_batch(SoftmaxRegression(3, 1), [])
    assert part.clean == [] and part.suspicious == []
    assert score_filter(part, []).tp_rate == 0.0
