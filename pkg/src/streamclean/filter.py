"""Top-k agreement filter and its scoring against ground truth."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .classifier import Classifier, rank_matrix
from .types import BatchPartition, Sample, SchemaError


@dataclass(frozen=True)
class FilterScore:
    """Fractions of the whole batch; "positive" means routed to the clean set."""

    tp_rate: float
    fp_rate: float
    tn_rate: float
    fn_rate: float


def filter_batch(model: Classifier, batch: Sequence[Sample], top_k: int = 2,
                 probs: np.ndarray | None = None) -> BatchPartition:
    """Keep a sample as clean iff its given label is among the model's
    ``top_k`` predicted labels; everything else is suspicious.

    ``probs`` may carry precomputed ``predict_proba`` output for the batch.
    """
    part = BatchPartition()
    if not batch:
        return part
    if probs is None:
        X = np.stack([s.features for s in batch])
        if X.shape[1] != model.n_features:
            raise SchemaError(f"batch has {X.shape[1]} features, model expects {model.n_features}")
        probs = model.predict_proba(X)
    if probs.shape != (len(batch), model.n_classes):
        raise SchemaError("probability matrix does not match batch")
    top = rank_matrix(probs)[:, :top_k]
    given = np.array([s.given_label for s in batch])
    keep = np.any(top == given[:, None], axis=1)
    for s, k in zip(batch, keep):
        (part.clean if k else part.suspicious).append(s)
    return part


def oracle_partition(batch: Sequence[Sample]) -> BatchPartition:
    """Perfect filter: clean set is exactly the samples whose label is true."""
    part = BatchPartition()
    for s in batch:
        (part.suspicious if s.is_noisy else part.clean).append(s)
    return part


def score_filter(partition: BatchPartition, batch: Sequence[Sample]) -> FilterScore:
    """Confusion rates of a filter split, using ground truth from ``batch``."""
    n = len(batch)
    if n == 0:
        return FilterScore(0.0, 0.0, 0.0, 0.0)
    noisy = {s.id: s.is_noisy for s in batch}
    kept = {s.id for s in partition.clean}
    tp = sum(1 for i, bad in noisy.items() if i in kept and not bad)
    fp = sum(1 for i, bad in noisy.items() if i in kept and bad)
    tn = sum(1 for i, bad in noisy.items() if i not in kept and bad)
    fn = n - tp - fp - tn
    return FilterScore(tp / n, fp / n, tn / n, fn / n)
