import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamclean.types import (BatchMetrics, BatchPartition, BudgetExceeded, CostLedger, DatasetSchema,
                               PredictionDistribution, RankedLabels, Sample, SchemaError, SelectionConfig)

finite = st.floats(-1e6, 1e6, allow_nan=False)


@given(st.integers(0, 10**9), st.lists(finite, min_size=1, max_size=12),
       st.integers(0, 50), st.integers(0, 50))
def test_sample_round_trip(i, feats, given_label, true_label):
    s = Sample(i, np.array(feats), given_label, true_label)
    back = Sample.from_dict(json.loads(json.dumps(s.to_dict())))
    assert back == s
    assert np.array_equal(back.features, s.features)


def test_sample_is_immutable_and_validated():
    s = Sample(1, np.array([1.0, 2.0]), 0, 1)
    with pytest.raises(ValueError):
        s.features[0] = 5.0
    assert s.is_noisy and not s.with_label(1).is_noisy
    with pytest.raises(SchemaError):
        Sample(2, np.array([np.nan]), 0, 0)
    with pytest.raises(SchemaError):
        Sample(2, np.array([]), 0, 0)
    with pytest.raises(SchemaError):
        Sample(2, np.array([1.0]), -1, 0)
    with pytest.raises(SchemaError):
        s.check(DatasetSchema(2, 3))
    with pytest.raises(SchemaError):
        Sample(3, np.array([1.0]), 4, 0).check(DatasetSchema(3, 1))


def test_schema_bounds():
    with pytest.raises(SchemaError):
        DatasetSchema(1, 4)
    with pytest.raises(SchemaError):
        DatasetSchema(2, 0)


def test_prediction_distribution_checks_sum():
    PredictionDistribution(np.array([0.2, 0.8]))
    with pytest.raises(ValueError):
        PredictionDistribution(np.array([0.2, 0.7]))
    with pytest.raises(ValueError):
        PredictionDistribution(np.array([-0.1, 1.1]))


def test_ranked_labels_is_permutation():
    r = RankedLabels((2, 0, 1))
    assert r[0] == 2 and r.top(2) == (2, 0) and len(r) == 3
    with pytest.raises(ValueError):
        RankedLabels((0, 0, 1))


def _s(i, noisy=False):
    return Sample(i, np.zeros(1), 1 if noisy else 0, 0)


def test_partition_check():
    a, b, c = _s(0), _s(1, True), _s(2, True)
    BatchPartition([a], [b, c], [b], [c]).check()
    with pytest.raises(ValueError):
        BatchPartition([a], [a, b]).check()
    with pytest.raises(ValueError):
        BatchPartition([a], [b], [c]).check()
    with pytest.raises(ValueError):
        BatchPartition([a], [b, c], [b], [b]).check()


def test_ledger_examples():
    led = CostLedger(10, 10)
    led.charge_strong()
    with pytest.raises(BudgetExceeded):
        led.charge_strong()
    assert (led.strong_queries, led.spent()) == (1, 10)
    with pytest.raises(BudgetExceeded):
        led.charge_weak()
    assert led.weak_queries == 0


def test_c_weak_queries_cost_one_strong():
    for c in (1, 2, 7):
        weak, strong = CostLedger(20, c), CostLedger(20, c)
        for _ in range(c):
            weak.charge_weak()
        strong.charge_strong()
        assert weak.spent() == strong.spent()


@settings(max_examples=200)
@given(st.integers(0, 40), st.integers(1, 10), st.lists(st.booleans(), max_size=60))
def test_ledger_never_over_budget(budget, c, ops):
    led = CostLedger(budget, c)
    for strong in ops:
        before = (led.weak_queries, led.strong_queries)
        try:
            led.charge_strong() if strong else led.charge_weak()
        except BudgetExceeded:
            assert (led.weak_queries, led.strong_queries) == before
        assert 0 <= led.spent() <= budget
        assert led.remaining() == budget - led.spent()


def test_selection_config_validation():
    assert SelectionConfig(budget=0).budget == 0
    with pytest.warns(UserWarning):
        SelectionConfig(budget=1, strong_cost=3)
    for bad in (dict(strong_cost=0), dict(budget=-1), dict(q_threshold=-1.0), dict(q_threshold=math.nan),
                dict(max_weak_per_sample=0), dict(rollback_drop=1.0), dict(filter_top_k=0)):
        with pytest.raises(ValueError):
            SelectionConfig(**bad)


def _metrics(**kw):
    base = dict(batch_index=1, test_accuracy=0.5, filter_tp_rate=0.6, filter_fp_rate=0.1, n_strong=1,
                n_weak=2, n_cleansed=3, n_discarded=0, rolled_back=False)
    base.update(kw)
    return BatchMetrics(**base)


def test_batch_metrics_invariants():
    with pytest.raises(ValueError):
        _metrics(filter_tp_rate=0.7, filter_fp_rate=0.4)
    with pytest.raises(ValueError):
        _metrics(n_weak=-1)
    with pytest.raises(ValueError):
        _metrics(test_accuracy=1.5)


def test_batch_metrics_strict_round_trip():
    m = _metrics(reliability=0.25)
    d = json.loads(json.dumps(m.to_dict()))
    assert BatchMetrics.from_dict(d) == m
    for broken in ({**d, "extra": 1}, {k: v for k, v in d.items() if k != "n_weak"},
                   {**d, "n_weak": 2.5}, {**d, "rolled_back": 0}, {**d, "test_accuracy": "x"}):
        with pytest.raises(ValueError):
            BatchMetrics.from_dict(broken)
