"""Cost-sensitive labeler selection and the per-batch cleansing loop.

Per batch: measure validation reliability, filter, pick diverse informative
suspicious samples, route each to the strong or weak labeler under the
budget, train on what survived, and roll back if validation accuracy
collapses.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .classifier import (Classifier, ClassifierKind, DivergenceError, TrainConfig, as_arrays,
                         build_classifier, rank_matrix, validation_loss)
from .diversity import bvsb_matrix, kmeans, rank_suspicious_no_clustering, select_top_k_per_cluster
from .filter import filter_batch, oracle_partition, score_filter
from .labelers import StrongLabeler, WeakLabeler
from .stream import Stream
from .types import BatchMetrics, BatchPartition, CostLedger, RankedLabels, Sample, SelectionConfig

logger = logging.getLogger(__name__)

INFORMATIVENESS_FLOOR = 1e-6


class Route(str, enum.Enum):
    STRONG = "strong"
    WEAK = "weak"
    NONE = "none"


@dataclass
class QContext:
    reliability: float
    ledger: CostLedger
    config: SelectionConfig

    def __post_init__(self):
        if not (np.isfinite(self.reliability) and self.reliability >= 0):
            raise ValueError(f"reliability must be finite and >= 0, got {self.reliability}")


def q_value(ctx: QContext, informativeness: float) -> float:
    """Validation loss over (margin * strong cost * strong queries so far).

    The margin is floored at 1e-6 and the strong-query count at 1 so the
    score is defined at batch start and for exact ties.
    """
    denom = (max(informativeness, INFORMATIVENESS_FLOOR) * ctx.config.strong_cost
             * max(ctx.ledger.strong_queries, 1))
    return ctx.reliability / denom


def choose_labeler(ctx: QContext, informativeness: float, policy: str = "q") -> Route:
    """``policy`` is ``"q"`` (threshold on :func:`q_value`), ``"strong_only"``
    or ``"weak_only"``."""
    ledger = ctx.ledger
    if policy == "strong_only":
        return Route.STRONG if ledger.can_afford_strong() else Route.NONE
    if policy == "q" and q_value(ctx, informativeness) > ctx.config.q_threshold \
            and ledger.can_afford_strong():
        return Route.STRONG
    if policy not in ("q", "weak_only"):
        raise ValueError(f"unknown labeler policy {policy!r}")
    return Route.WEAK if ledger.can_afford_weak() else Route.NONE


@dataclass
class CleanseOutcome:
    sample_id: int
    label: int | None
    n_strong: int = 0
    n_weak: int = 0
    queries: list[tuple] = field(default_factory=list)

    @property
    def cleaned(self) -> bool:
        return self.label is not None

    @property
    def n_queries(self) -> int:
        return self.n_strong + self.n_weak


def cleanse_sample(ctx: QContext, sample: Sample, ranked: RankedLabels, informativeness: float,
                   policy: str = "q", strong: StrongLabeler | None = None,
                   weak: WeakLabeler | None = None) -> CleanseOutcome:
    """Query labelers for one candidate until it is cleaned or given up on.

    The weak labeler is asked about labels in model-rank order, at most
    ``max_weak_per_sample`` times. After each "no" the labeler choice is
    re-evaluated, so escalation to the strong labeler is possible.
    """
    strong = strong or StrongLabeler()
    weak = weak or WeakLabeler()
    out = CleanseOutcome(sample.id, None)
    w = 0
    while True:
        route = choose_labeler(ctx, informativeness, policy)
        if route is Route.WEAK and w >= ctx.config.max_weak_per_sample:
            route = Route.NONE
        if route is Route.STRONG:
            out.label = strong.query(ctx.ledger, sample)
            out.n_strong += 1
            out.queries.append(("strong", sample.id, out.label))
            return out
        if route is Route.NONE:
            return out
        candidate = ranked[w]
        w += 1
        yes = weak.query(ctx.ledger, sample, candidate)
        out.n_weak += 1
        out.queries.append(("weak", sample.id, candidate, yes))
        if yes:
            out.label = candidate
            return out


@dataclass(frozen=True)
class BatchPolicy:
    """How a batch is filtered and cleansed.

    filter:    ``topk`` (model agreement), ``oracle`` (ground truth), ``none``
    cleanse:   ``active`` (budgeted labelers), ``all`` (relabel every
               suspicious sample for free), ``none``
    labeler:   routing policy passed to :func:`choose_labeler`
    train_unqueried: train on candidates that never got a query, with their
               given labels (used when there is no filter)
    """

    filter: str = "topk"
    cleanse: str = "active"
    labeler: str = "q"
    train_unqueried: bool = False

    def __post_init__(self):
        if self.filter not in ("topk", "oracle", "none"):
            raise ValueError(f"unknown filter mode {self.filter!r}")
        if self.cleanse not in ("active", "all", "none"):
            raise ValueError(f"unknown cleanse mode {self.cleanse!r}")
        if self.labeler not in ("q", "strong_only", "weak_only"):
            raise ValueError(f"unknown labeler policy {self.labeler!r}")


@dataclass(frozen=True)
class EngineConfig:
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    policy: BatchPolicy = field(default_factory=BatchPolicy)
    replay_initial: bool = False
    kmeans_max_iter: int = 100


@dataclass
class BatchResult:
    metrics: BatchMetrics
    partition: BatchPartition
    cleansed: list[Sample]
    training_set: list[Sample]
    outcomes: list[CleanseOutcome]
    ledger: CostLedger

    @property
    def queries(self) -> list[tuple]:
        return [q for o in self.outcomes for q in o.queries]


def derive_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1)[0])


def _accuracy(model: Classifier, samples: Sequence[Sample]) -> float:
    if not samples:
        return 0.0
    X, y = as_arrays(samples)
    return model.accuracy(X, y)


def run_batch(model: Classifier, batch: Sequence[Sample], validation: Sequence[Sample],
              config: EngineConfig, batch_index: int = 0, seed: int = 0,
              test: Sequence[Sample] = (), initial: Sequence[Sample] = (),
              strong: StrongLabeler | None = None, weak: WeakLabeler | None = None) -> BatchResult:
    """Process one arriving batch in place on ``model``."""
    sel, policy = config.selection, config.policy
    reliability = validation_loss(model, validation)
    val_before = _accuracy(model, validation)
    snap = model.snapshot(batch_index, val_before)

    batch = list(batch)
    ledger = CostLedger(sel.budget, sel.strong_cost)
    empty_metrics = dict(n_strong=0, n_weak=0, n_cleansed=0, n_discarded=0)
    if not batch:
        acc = _accuracy(model, test)
        m = BatchMetrics(batch_index, acc, 0.0, 0.0, rolled_back=False, reliability=reliability,
                         val_accuracy_before=val_before, val_accuracy_after=val_before, **empty_metrics)
        return BatchResult(m, BatchPartition(), [], [], [], ledger)

    X = np.stack([s.features for s in batch])
    P = model.predict_proba(X)
    row = {s.id: i for i, s in enumerate(batch)}

    if policy.filter == "topk":
        part = filter_batch(model, batch, sel.filter_top_k, probs=P)
    elif policy.filter == "oracle":
        part = oracle_partition(batch)
    else:
        part = BatchPartition(clean=[], suspicious=list(batch))
    fscore = score_filter(part, batch)

    margins = bvsb_matrix(P)
    scores = {s.id: float(margins[row[s.id]]) for s in part.suspicious}
    ranks = rank_matrix(P)

    cleansed: list[Sample] = []
    outcomes: list[CleanseOutcome] = []
    unqueried: list[Sample] = []
    if policy.cleanse == "all":
        cleansed = [s.with_label(s.true_label) for s in part.suspicious]
        part.selected = list(part.suspicious)
    elif policy.cleanse == "active" and part.suspicious:
        if sel.use_clustering:
            U = part.suspicious
            feats = model.extract_features(X[[row[s.id] for s in U]])
            k = min(sel.n_clusters or model.n_classes, len(U))
            clustering = kmeans(feats, k, seed=derive_seed(seed, batch_index, 1),
                                max_iter=config.kmeans_max_iter, ids=[s.id for s in U])
            part.selected, part.discarded = select_top_k_per_cluster(U, clustering, scores, sel.per_cluster_top)
        else:
            part.selected = rank_suspicious_no_clustering(part.suspicious, scores)
        ctx = QContext(reliability, ledger, sel)
        for s in part.selected:
            ranked = RankedLabels(tuple(int(v) for v in ranks[row[s.id]]))
            out = cleanse_sample(ctx, s, ranked, scores[s.id], policy.labeler, strong, weak)
            outcomes.append(out)
            if out.cleaned:
                cleansed.append(s.with_label(out.label))
            elif out.n_queries == 0 and policy.train_unqueried:
                unqueried.append(s)
    elif policy.cleanse == "none" and policy.train_unqueried:
        unqueried = list(part.suspicious)

    training = list(part.clean) + cleansed + unqueried
    n_discarded = len(part.suspicious) - len(cleansed) - len(unqueried)
    if config.replay_initial:
        training = list(initial) + training

    diverged = False
    if training:
        Xt, yt = as_arrays(training)
        try:
            model.train(Xt, yt, config.train, seed=derive_seed(seed, batch_index, 2))
        except DivergenceError as exc:
            logger.warning("batch %d diverged (%s); restoring snapshot", batch_index, exc)
            diverged = True
    val_after = 0.0 if diverged else _accuracy(model, validation)
    rolled_back = diverged or val_after < (1.0 - sel.rollback_drop) * val_before
    if rolled_back:
        model.restore(snap)
        logger.info("batch %d rolled back (val acc %.4f -> %.4f)", batch_index, val_before, val_after)

    metrics = BatchMetrics(
        batch_index=batch_index,
        test_accuracy=_accuracy(model, test),
        filter_tp_rate=fscore.tp_rate,
        filter_fp_rate=fscore.fp_rate,
        n_strong=ledger.strong_queries,
        n_weak=ledger.weak_queries,
        n_cleansed=len(cleansed),
        n_discarded=n_discarded,
        rolled_back=bool(rolled_back),
        n_clean=len(part.clean),
        n_suspicious=len(part.suspicious),
        n_trained=len(training),
        val_accuracy_before=val_before,
        val_accuracy_after=val_after,
        reliability=reliability,
        diverged=diverged,
    )
    return BatchResult(metrics, part, cleansed, training, outcomes, ledger)


@dataclass
class StreamResult:
    metrics: list[BatchMetrics]
    model: Classifier
    initial_test_accuracy: float

    @property
    def best_test_accuracy(self) -> float:
        """Highest test accuracy over the streamed batches."""
        if not self.metrics:
            return self.initial_test_accuracy
        return max(m.test_accuracy for m in self.metrics)


def train_initial(stream: Stream, kind: ClassifierKind, config: EngineConfig, seed: int = 0) -> Classifier:
    schema = stream.schema
    model = build_classifier(kind, schema.n_classes, schema.n_features, seed=derive_seed(seed, 0, 0))
    X, y = as_arrays(stream.initial)
    model.train(X, y, config.train, epochs=config.train.epochs_initial, seed=derive_seed(seed, 0, 3))
    return model


def run_stream(stream: Stream, kind: ClassifierKind, config: EngineConfig, seed: int = 0,
               model: Classifier | None = None) -> StreamResult:
    """Train on the initial set, then process every batch in arrival order.

    Passing a pre-trained ``model`` skips the initial training (it is
    copied, not mutated).
    """
    model = train_initial(stream, kind, config, seed) if model is None else model.copy()
    init_acc = _accuracy(model, stream.test)
    metrics = []
    for t, batch in enumerate(stream.batches, start=1):
        res = run_batch(model, batch, stream.validation, config, batch_index=t, seed=seed,
                        test=stream.test, initial=stream.initial)
        metrics.append(res.metrics)
        logger.debug("batch %d: %s", t, res.metrics)
    return StreamResult(metrics, model, init_acc)
