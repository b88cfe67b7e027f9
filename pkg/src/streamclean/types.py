"""Core value types shared across the streaming cleanser.

Everything here is an immutable value type except :class:`CostLedger`,
which the selection loop mutates while it spends a batch's budget.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, fields
from typing import Any

import numpy as np


class SchemaError(ValueError):
    """Raised when data or model shapes do not agree."""


class BudgetExceeded(RuntimeError):
    """Raised when a labeler query would push spending past the budget."""


@dataclass(frozen=True)
class DatasetSchema:
    n_classes: int
    n_features: int

    def __post_init__(self):
        if self.n_classes < 2:
            raise SchemaError(f"n_classes must be >= 2, got {self.n_classes}")
        if self.n_features < 1:
            raise SchemaError(f"n_features must be >= 1, got {self.n_features}")


@dataclass(frozen=True, eq=False)
class Sample:
    """One streamed example.

    ``true_label`` is the hidden ground truth. Only the labeler oracles and
    the metrics code read it; the learner works from ``given_label``.
    """

    id: int
    features: np.ndarray
    given_label: int
    true_label: int = field(repr=False)

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 1 or feats.size == 0:
            raise SchemaError(f"sample {self.id}: features must be a non-empty vector")
        if not np.all(np.isfinite(feats)):
            raise SchemaError(f"sample {self.id}: non-finite feature value")
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)
        if self.given_label < 0 or self.true_label < 0:
            raise SchemaError(f"sample {self.id}: negative class index")

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.id == other.id
            and self.given_label == other.given_label
            and self.true_label == other.true_label
            and np.array_equal(self.features, other.features)
        )

    __hash__ = None

    def check(self, schema: DatasetSchema) -> None:
        if self.features.size != schema.n_features:
            raise SchemaError(
                f"sample {self.id}: expected {schema.n_features} features, "
                f"got {self.features.size}"
            )
        for label in (self.given_label, self.true_label):
            if label >= schema.n_classes:
                raise SchemaError(f"sample {self.id}: label {label} out of range")

    @property
    def is_noisy(self) -> bool:
        return self.given_label != self.true_label

    def with_label(self, label: int) -> "Sample":
        return Sample(self.id, self.features, int(label), self.true_label)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": int(self.id),
            "features": [float(v) for v in self.features],
            "given_label": int(self.given_label),
            "true_label": int(self.true_label),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Sample":
        return cls(int(d["id"]), np.asarray(d["features"], dtype=np.float64),
                   int(d["given_label"]), int(d["true_label"]))


@dataclass(frozen=True)
class PredictionDistribution:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size < 1:
            raise SchemaError("probability vector must be 1-D and non-empty")
        if np.any(p < 0) or np.any(p > 1) or abs(p.sum() - 1.0) > 1e-6:
            raise ValueError(f"not a probability distribution: {p}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def n_classes(self) -> int:
        return int(self.probs.size)


@dataclass(frozen=True)
class RankedLabels:
    """Labels ordered by descending probability, lower index first on ties."""

    order: tuple[int, ...]

    def __post_init__(self):
        if sorted(self.order) != list(range(len(self.order))):
            raise ValueError(f"order is not a permutation: {self.order}")

    def __getitem__(self, rank: int) -> int:
        return self.order[rank]

    def __len__(self) -> int:
        return len(self.order)

    def top(self, k: int) -> tuple[int, ...]:
        return self.order[:k]


@dataclass
class BatchPartition:
    """Filter output for one batch.

    ``clean`` and ``suspicious`` split the batch. ``selected`` (candidates,
    most informative first) and ``discarded`` (dropped by the diversity
    step) are disjoint subsets of ``suspicious``.
    """

    clean: list[Sample] = field(default_factory=list)
    suspicious: list[Sample] = field(default_factory=list)
    selected: list[Sample] = field(default_factory=list)
    discarded: list[Sample] = field(default_factory=list)

    def check(self) -> None:
        def ids(group):
            out = {s.id for s in group}
            if len(out) != len(group):
                raise ValueError("duplicate sample id in partition group")
            return out

        clean, susp, sel, disc = map(ids, (self.clean, self.suspicious, self.selected, self.discarded))
        if clean & susp:
            raise ValueError("clean and suspicious sets overlap")
        if not (sel <= susp and disc <= susp):
            raise ValueError("selected/discarded must come from the suspicious set")
        if sel & disc:
            raise ValueError("selected and discarded sets overlap")


@dataclass(frozen=True)
class SelectionConfig:
    """Knobs of the labeler-selection loop.

    ``budget`` is in weak-query units and resets every batch. A budget of 0
    is accepted and disables all querying.
    """

    strong_cost: int = 2
    budget: int = 125
    q_threshold: float = 10.0
    max_weak_per_sample: int = 2
    per_cluster_top: int = 10
    n_clusters: int | None = None
    use_clustering: bool = False
    filter_top_k: int = 2
    rollback_drop: float = 0.20

    def __post_init__(self):
        if self.strong_cost < 1:
            raise ValueError("strong_cost must be >= 1")
        if self.budget < 0:
            raise ValueError("budget must be >= 0")
        if not self.q_threshold >= 0:
            raise ValueError("q_threshold must be >= 0")
        if self.max_weak_per_sample < 1 or self.per_cluster_top < 1:
            raise ValueError("max_weak_per_sample and per_cluster_top must be >= 1")
        if self.n_clusters is not None and self.n_clusters < 1:
            raise ValueError("n_clusters must be >= 1")
        if self.filter_top_k < 1:
            raise ValueError("filter_top_k must be >= 1")
        if not 0 <= self.rollback_drop < 1:
            raise ValueError("rollback_drop must lie in [0, 1)")
        if 0 < self.budget < self.strong_cost:
            warnings.warn(
                f"budget {self.budget} < strong_cost {self.strong_cost}: "
                "the strong labeler can never be queried",
                stacklevel=3,
            )


class CostLedger:
    """Per-batch query counters checked against the budget.

    Every charge is validated before it is applied, so the ledger can never
    sit in an over-budget state.
    """

    def __init__(self, budget: int, strong_cost: int):
        if budget < 0 or strong_cost < 1:
            raise ValueError("need budget >= 0 and strong_cost >= 1")
        self.budget = int(budget)
        self.strong_cost = int(strong_cost)
        self.weak_queries = 0
        self.strong_queries = 0

    def spent(self) -> int:
        return self.weak_queries + self.strong_cost * self.strong_queries

    def remaining(self) -> int:
        return self.budget - self.spent()

    def can_afford_weak(self) -> bool:
        return self.spent() + 1 <= self.budget

    def can_afford_strong(self) -> bool:
        return self.spent() + self.strong_cost <= self.budget

    def charge_weak(self) -> None:
        if not self.can_afford_weak():
            raise BudgetExceeded(f"weak query needs 1, only {self.remaining()} left")
        self.weak_queries += 1

    def charge_strong(self) -> None:
        if not self.can_afford_strong():
            raise BudgetExceeded(
                f"strong query needs {self.strong_cost}, only {self.remaining()} left"
            )
        self.strong_queries += 1

    def __repr__(self):
        return (f"CostLedger(weak={self.weak_queries}, strong={self.strong_queries}, "
                f"c={self.strong_cost}, spent={self.spent()}/{self.budget})")


@dataclass(frozen=True)
class ModelSnapshot:
    """Serialized classifier state. ``parameters`` is an opaque byte blob."""

    parameters: bytes
    batch_index: int = -1
    validation_accuracy: float = float("nan")


@dataclass(frozen=True)
class BatchMetrics:
    batch_index: int
    test_accuracy: float
    filter_tp_rate: float
    filter_fp_rate: float
    n_strong: int
    n_weak: int
    n_cleansed: int
    n_discarded: int
    rolled_back: bool
    n_clean: int = 0
    n_suspicious: int = 0
    n_trained: int = 0
    val_accuracy_before: float = 0.0
    val_accuracy_after: float = 0.0
    reliability: float = 0.0
    diverged: bool = False

    def __post_init__(self):
        counts = (self.n_strong, self.n_weak, self.n_cleansed, self.n_discarded,
                  self.n_clean, self.n_suspicious, self.n_trained)
        if any(c < 0 for c in counts):
            raise ValueError("metric counts must be non-negative")
        for rate in (self.filter_tp_rate, self.filter_fp_rate):
            if not 0 <= rate <= 1:
                raise ValueError(f"filter rate out of [0, 1]: {rate}")
        if self.filter_tp_rate + self.filter_fp_rate > 1 + 1e-9:
            raise ValueError("filter_tp_rate + filter_fp_rate exceeds 1")
        if not 0 <= self.test_accuracy <= 1:
            raise ValueError(f"test_accuracy out of [0, 1]: {self.test_accuracy}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "BatchMetrics":
        """Strict load: unknown or missing keys and wrong types are errors."""
        by_name = {f.name: f for f in fields(cls)}
        unknown = set(d) - set(by_name)
        if unknown:
            raise ValueError(f"unknown BatchMetrics keys: {sorted(unknown)}")
        kwargs = {}
        for name, f in by_name.items():
            if name not in d:
                raise ValueError(f"missing BatchMetrics key: {name}")
            value = d[name]
            kind = f.type if isinstance(f.type, str) else f.type.__name__
            if kind == "bool":
                ok = isinstance(value, bool)
            elif kind == "int":
                ok = isinstance(value, int) and not isinstance(value, bool)
            else:
                ok = isinstance(value, (int, float)) and not isinstance(value, bool)
                value = float(value)
                ok = ok and math.isfinite(value)
            if not ok:
                raise ValueError(f"BatchMetrics.{name}: bad value {d[name]!r}")
            kwargs[name] = value
        return cls(**kwargs)
