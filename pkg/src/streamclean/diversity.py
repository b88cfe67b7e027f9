"""Kmeans diversity step and best-versus-second-best ranking."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .types import PredictionDistribution, Sample

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClusteringResult:
    centroids: np.ndarray
    labels: np.ndarray
    n_iterations: int
    inertia: float
    inertia_history: list[float] = field(default_factory=list)
    ids: tuple[int, ...] | None = None

    @property
    def assignments(self) -> dict[int, int]:
        """Sample id -> cluster index (positional index when ids are absent)."""
        keys = self.ids if self.ids is not None else range(len(self.labels))
        return {int(k): int(c) for k, c in zip(keys, self.labels)}


def bvsb(dist: PredictionDistribution | np.ndarray) -> float:
    """Margin between the two largest probabilities; small = informative."""
    p = dist.probs if isinstance(dist, PredictionDistribution) else np.asarray(dist, dtype=np.float64)
    if p.size < 2:
        raise ValueError("best-versus-second-best needs at least two classes")
    top2 = np.partition(p, -2)[-2:]
    return float(top2[1] - top2[0])


def bvsb_matrix(P: np.ndarray) -> np.ndarray:
    if P.shape[1] < 2:
        raise ValueError("best-versus-second-best needs at least two classes")
    top2 = np.partition(P, -2, axis=1)[:, -2:]
    return top2[:, 1] - top2[:, 0]


def _sq_dists(X, C):
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _kmeanspp(X, k, rng):
    n = len(X)
    centers = [X[rng.integers(n)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(X[idx])
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return np.array(centers, dtype=np.float64)


def _lloyd(X, C, max_iter, tol):
    k = len(C)
    history = []
    it = 0
    while True:
        D = _sq_dists(X, C)
        labels = np.argmin(D, axis=1)
        counts = np.bincount(labels, minlength=k)
        for _ in range(k):
            if np.all(counts > 0):
                break
            far = int(np.argmax(D[np.arange(len(X)), labels]))
            if D[far, labels[far]] == 0:
                break  # fewer distinct points than clusters; leave the rest empty
            C[int(np.flatnonzero(counts == 0)[0])] = X[far]
            D = _sq_dists(X, C)
            labels = np.argmin(D, axis=1)
            counts = np.bincount(labels, minlength=k)
        history.append(float(D[np.arange(len(X)), labels].sum()))
        if it >= max_iter:
            break
        new_C = np.array([X[labels == j].mean(axis=0) if counts[j] else C[j] for j in range(k)])
        shift = float(np.sqrt(((new_C - C) ** 2).sum(axis=1)).max())
        C = new_C
        it += 1
        if shift < tol:
            D = _sq_dists(X, C)
            labels = np.argmin(D, axis=1)
            history.append(float(D[np.arange(len(X)), labels].sum()))
            break
    return C, labels, it, history


def kmeans(points, k: int, seed: int = 0, max_iter: int = 100, tol: float = 1e-8,
           init: str = "kmeans++", ids: Sequence[int] | None = None,
           n_init: int = 10) -> ClusteringResult:
    """Lloyd's algorithm with kmeans++ (or uniform random) seeding.

    Runs ``n_init`` seeded restarts and keeps the one with the lowest
    inertia (the earliest on ties). Each run stops once no centroid moves
    more than ``tol`` or after ``max_iter`` rounds. Ties in assignment go
    to the lowest cluster index. A cluster left empty is re-seeded at the
    point farthest from its centroid.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("kmeans needs a non-empty 2-D point array")
    if k < 1:
        raise ValueError("k must be >= 1")
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    if init not in ("kmeans++", "random"):
        raise ValueError(f"unknown init {init!r}")
    if k > len(X):
        warnings.warn(f"k={k} exceeds {len(X)} points; clamping", stacklevel=2)
        k = len(X)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        if init == "kmeans++":
            C = _kmeanspp(X, k, rng)
        else:
            C = X[rng.choice(len(X), size=k, replace=False)].copy()
        run = _lloyd(X, C, max_iter, tol)
        if best is None or run[3][-1] < best[3][-1]:
            best = run
    C, labels, it, history = best
    return ClusteringResult(C, labels, it, history[-1], history,
                            tuple(int(i) for i in ids) if ids is not None else None)


def _by_score(samples: Sequence[Sample], scores: Mapping[int, float]) -> list[Sample]:
    return sorted(samples, key=lambda s: (scores[s.id], s.id))


def select_top_k_per_cluster(suspicious: Sequence[Sample], clustering: ClusteringResult,
                             scores: Mapping[int, float], per_cluster: int) -> tuple[list[Sample], list[Sample]]:
    """Take the ``per_cluster`` lowest-margin samples of every cluster.

    Returns ``(selected, discarded)``; ``selected`` is globally sorted by
    ascending margin, ties broken by sample id.
    """
    assign = clustering.assignments
    groups: dict[int, list[Sample]] = {}
    for s in suspicious:
        groups.setdefault(assign[s.id], []).append(s)
    chosen: set[int] = set()
    for members in groups.values():
        chosen.update(s.id for s in _by_score(members, scores)[:per_cluster])
    selected = _by_score([s for s in suspicious if s.id in chosen], scores)
    discarded = [s for s in suspicious if s.id not in chosen]
    return selected, discarded


def rank_suspicious_no_clustering(suspicious: Sequence[Sample], scores: Mapping[int, float]) -> list[Sample]:
    return _by_score(suspicious, scores)
