"""Strong and weak labeler oracles charged against a :class:`CostLedger`.

The strong labeler returns the true label at cost ``c``; the weak one
answers whether a proposed label is correct at cost 1. Both are perfect
oracles. Subclass :class:`StrongLabeler` / :class:`WeakLabeler` to back
them with something else (a remote service, a person).
"""
from __future__ import annotations

import numpy as np

from .types import CostLedger, Sample


class StrongLabeler:
    def label(self, sample: Sample) -> int:
        return int(sample.true_label)

    def query(self, ledger: CostLedger, sample: Sample) -> int:
        ledger.charge_strong()
        return self.label(sample)


class WeakLabeler:
    def answer(self, sample: Sample, candidate: int) -> bool:
        return int(candidate) == int(sample.true_label)

    def query(self, ledger: CostLedger, sample: Sample, candidate: int) -> bool:
        ledger.charge_weak()
        return self.answer(sample, candidate)


class FallibleWeakLabeler(WeakLabeler):
    """Weak labeler whose answer is flipped with probability ``error_rate``.

    For robustness experiments only; the default pipeline uses perfect oracles.
    """

    def __init__(self, error_rate: float, seed: int = 0):
        if not 0 <= error_rate <= 1:
            raise ValueError("error_rate must lie in [0, 1]")
        self.error_rate = error_rate
        self._rng = np.random.default_rng(seed)

    def answer(self, sample: Sample, candidate: int) -> bool:
        truth = super().answer(sample, candidate)
        return (not truth) if self._rng.random() < self.error_rate else truth


def strong_query(ledger: CostLedger, sample: Sample) -> int:
    return StrongLabeler().query(ledger, sample)


def weak_query(ledger: CostLedger, sample: Sample, candidate_label: int) -> bool:
    return WeakLabeler().query(ledger, sample, candidate_label)
