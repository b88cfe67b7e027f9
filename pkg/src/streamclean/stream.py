"""Datasets, symmetric label noise and the online batch schedule."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .types import DatasetSchema, Sample, SchemaError

logger = logging.getLogger(__name__)


class CsvFormatError(ValueError):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class NoiseConfig:
    rate: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.rate < 1:
            raise ValueError(f"noise rate must lie in [0, 1), got {self.rate}")


@dataclass(frozen=True)
class StreamPlan:
    initial_size: int = 50
    validation_size: int = 200
    batch_size: int = 500
    n_batches: int = 10
    test_size: int = 5000

    def __post_init__(self):
        if min(self.initial_size, self.validation_size, self.batch_size, self.test_size) < 1:
            raise ValueError("stream sizes must be positive")
        if self.n_batches < 0:
            raise ValueError("n_batches must be >= 0")

    @property
    def total(self) -> int:
        return self.initial_size + self.validation_size + self.test_size + self.n_batches * self.batch_size


@dataclass
class Dataset:
    samples: list[Sample]
    schema: DatasetSchema
    label_names: list[str] | None = None

    def __len__(self):
        return len(self.samples)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(features, given labels, true labels)."""
        X = np.stack([s.features for s in self.samples])
        given = np.array([s.given_label for s in self.samples], dtype=np.int64)
        true = np.array([s.true_label for s in self.samples], dtype=np.int64)
        return X, given, true


@dataclass
class Stream:
    initial: list[Sample]
    validation: list[Sample]
    test: list[Sample]
    batches: list[list[Sample]]
    schema: DatasetSchema
    label_names: list[str] | None = field(default=None, repr=False)


def generate_gaussian_blobs(n_classes: int, n_features: int, n_samples: int,
                            class_separation: float, seed: int = 0) -> Dataset:
    """Isotropic unit-variance Gaussian clusters, one per class.

    Each class centre sits at distance ``class_separation`` from the
    origin. When ``n_classes <= n_features`` the centres are mutually
    orthogonal (a randomly rotated basis), so every pair is
    ``class_separation * sqrt(2)`` apart; otherwise they point in random
    directions. Class counts differ by at most one.
    """
    if class_separation <= 0:
        raise ValueError("class_separation must be > 0")
    schema = DatasetSchema(n_classes, n_features)
    rng = np.random.default_rng(seed)
    radius = class_separation
    if n_classes <= n_features:
        rotation, _ = np.linalg.qr(rng.standard_normal((n_features, n_features)))
        centers = radius * rotation[:n_classes]
    else:
        directions = rng.standard_normal((n_classes, n_features))
        centers = radius * directions / np.linalg.norm(directions, axis=1, keepdims=True)
    labels = np.arange(n_samples) % n_classes
    labels = labels[rng.permutation(n_samples)]
    X = centers[labels] + rng.standard_normal((n_samples, n_features))
    samples = [Sample(i, X[i], int(labels[i]), int(labels[i])) for i in range(n_samples)]
    return Dataset(samples, schema)


def inject_noise(samples: Sequence[Sample], config: NoiseConfig, n_classes: int) -> list[Sample]:
    """Symmetric noise: each sample flips with probability ``config.rate``
    to a label drawn uniformly from the other ``n_classes - 1``."""
    if n_classes < 2:
        raise SchemaError("noise injection needs at least two classes")
    rng = np.random.default_rng(config.seed)
    n = len(samples)
    flip = rng.random(n) < config.rate
    offsets = rng.integers(1, n_classes, size=n)
    out = []
    for s, f, off in zip(samples, flip, offsets):
        label = (s.true_label + int(off)) % n_classes if f else s.true_label
        out.append(Sample(s.id, s.features, label, s.true_label))
    return out


def make_stream(dataset: Dataset, plan: StreamPlan, noise: NoiseConfig, seed: int = 0) -> Stream:
    """Shuffle once and cut into clean initial/validation/test sets plus
    ``plan.n_batches`` noisy batches. Only the batches receive noise."""
    if plan.total > len(dataset):
        raise ValueError(f"stream plan needs {plan.total} samples, dataset has {len(dataset)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset))
    pool = [dataset.samples[i] for i in order[:plan.total]]
    # splits are clean by construction: reset any label the source carried
    clean = [s.with_label(s.true_label) for s in pool]
    a = plan.initial_size
    b = a + plan.validation_size
    c = b + plan.test_size
    initial, validation, test, streamed = clean[:a], clean[a:b], clean[b:c], clean[c:]
    streamed = inject_noise(streamed, noise, dataset.schema.n_classes)
    batches = [streamed[i * plan.batch_size:(i + 1) * plan.batch_size] for i in range(plan.n_batches)]
    return Stream(initial, validation, test, batches, dataset.schema, dataset.label_names)


def _parse_row(row: list[str]) -> list[float] | None:
    try:
        return [float(v) for v in row]
    except ValueError:
        return None


def load_csv(path, schema: DatasetSchema | None = None) -> Dataset:
    """Read ``d`` numeric feature columns followed by one label column.

    A non-numeric first row is taken as a header. Labels are mapped to
    0..N-1 in order of first appearance; ``label_names`` keeps the mapping.
    Labels read from a file are taken as ground truth.
    """
    path = Path(path)
    rows: list[tuple[int, list[float], str]] = []
    mapping: dict[str, int] = {}
    width = None
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not v.strip() for v in row):
                continue
            row = [v.strip() for v in row]
            if len(row) < 2:
                raise CsvFormatError(path, lineno, "need at least one feature and a label")
            feats = _parse_row(row[:-1])
            if feats is None:
                if lineno == 1 and not rows:
                    continue
                raise CsvFormatError(path, lineno, f"non-numeric feature in {row[:-1]}")
            if width is None:
                width = len(feats)
            elif len(feats) != width:
                raise CsvFormatError(path, lineno, f"expected {width} features, got {len(feats)}")
            if not all(np.isfinite(feats)):
                raise CsvFormatError(path, lineno, "non-finite feature")
            label = row[-1]
            if label not in mapping:
                mapping[label] = len(mapping)
            rows.append((lineno, feats, label))
    if not rows:
        raise CsvFormatError(path, 0, "no data rows")
    if schema is not None:
        if schema.n_features != width:
            raise SchemaError(f"{path}: schema declares {schema.n_features} features, file has {width}")
        if schema.n_classes != len(mapping):
            raise SchemaError(f"{path}: schema declares {schema.n_classes} classes, file has {len(mapping)}")
    else:
        schema = DatasetSchema(max(len(mapping), 2), width)
    samples = [Sample(i, np.array(f), mapping[lab], mapping[lab]) for i, (_, f, lab) in enumerate(rows)]
    names = sorted(mapping, key=mapping.get)
    logger.info("loaded %d samples from %s, label map %s", len(samples), path, mapping)
    return Dataset(samples, schema, names)


def write_csv(path, dataset: Dataset, header: bool = True) -> None:
    names = dataset.label_names
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow([f"x{i}" for i in range(dataset.schema.n_features)] + ["label"])
        for s in dataset.samples:
            label = names[s.true_label] if names else str(s.true_label)
            w.writerow([repr(float(v)) for v in s.features] + [label])
