"""Probabilistic classifiers trained with minibatch SGD + momentum.

Two variants ship: multinomial logistic regression (``softmax_linear``) and
a one-hidden-layer ReLU network (``mlp``). The selection engine only needs
``predict_proba``, ``extract_features``, ``train`` and snapshot/restore, so
anything implementing :class:`Classifier` can be plugged in.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .types import ModelSnapshot, PredictionDistribution, RankedLabels, Sample, SchemaError

PROB_FLOOR = 1e-12
SNAPSHOT_FORMAT = "streamclean-model"
SNAPSHOT_VERSION = 1


class DivergenceError(FloatingPointError):
    """Training produced a non-finite loss or parameter."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 2e-3
    epochs_initial: int = 60
    epochs_per_batch: int = 20
    minibatch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if min(self.epochs_initial, self.epochs_per_batch, self.minibatch_size) < 1:
            raise ValueError("epochs and minibatch_size must be positive")


@dataclass(frozen=True)
class ClassifierKind:
    variant: str = "softmax_linear"
    hidden_units: int | None = None

    def __post_init__(self):
        if self.variant not in ("softmax_linear", "mlp"):
            raise ValueError(f"unknown classifier variant {self.variant!r}")
        if self.variant == "mlp" and (self.hidden_units is None or self.hidden_units < 1):
            raise ValueError("mlp needs hidden_units >= 1")


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def as_arrays(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    """Stack samples into (features, given labels)."""
    if not samples:
        raise ValueError("no samples")
    X = np.stack([s.features for s in samples])
    y = np.fromiter((s.given_label for s in samples), dtype=np.int64, count=len(samples))
    return X, y


class Classifier:
    """Base class: subclasses define parameters, forward and backward passes.

    Parameters live in ``self.params`` as a list of float64 arrays whose
    names are given by ``param_names``; names starting with ``W`` are
    subject to weight decay.
    """

    variant = "base"
    param_names: tuple[str, ...] = ()

    def __init__(self, n_classes: int, n_features: int):
        if n_classes < 2 or n_features < 1:
            raise SchemaError("need n_classes >= 2 and n_features >= 1")
        self.n_classes = n_classes
        self.n_features = n_features
        self.params: list[np.ndarray] = []

    # -- subclass hooks -------------------------------------------------
    def _forward(self, X):
        """Return (logits, cache)."""
        raise NotImplementedError

    def _backward(self, cache, dlogits) -> list[np.ndarray]:
        raise NotImplementedError

    def extract_features(self, X) -> np.ndarray:
        raise NotImplementedError

    def _header(self) -> dict:
        return {"variant": self.variant, "n_classes": self.n_classes,
                "n_features": self.n_features}

    # -- inference --------------------------------------------------------
    def _check_X(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise SchemaError(f"expected inputs with {self.n_features} features, got shape {X.shape}")
        return X

    def logits(self, X) -> np.ndarray:
        return self._forward(self._check_X(X))[0]

    def predict_proba(self, X) -> np.ndarray:
        """Row-stochastic (n, n_classes) matrix of class probabilities."""
        return softmax(self.logits(X))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def accuracy(self, X, y) -> float:
        return float(np.mean(self.predict(X) == np.asarray(y)))

    # -- training ---------------------------------------------------------
    def loss_and_grad(self, X, y, weight_decay: float = 0.0):
        """Mean cross-entropy (+ L2 on weight matrices) and its gradient."""
        X = self._check_X(X)
        y = np.asarray(y, dtype=np.int64)
        if np.any(y < 0) or np.any(y >= self.n_classes):
            raise SchemaError("label out of range")
        z, cache = self._forward(X)
        z = z - z.max(axis=1, keepdims=True)
        logsum = np.log(np.exp(z).sum(axis=1))
        m = len(y)
        loss = float(np.mean(logsum - z[np.arange(m), y]))
        dz = softmax(z)
        dz[np.arange(m), y] -= 1.0
        dz /= m
        grads = self._backward(cache, dz)
        if weight_decay:
            for i, name in enumerate(self.param_names):
                if name.startswith("W"):
                    loss += 0.5 * weight_decay * float(np.sum(self.params[i] ** 2))
                    grads[i] = grads[i] + weight_decay * self.params[i]
        return loss, grads

    def train(self, X, y, config: TrainConfig, epochs: int | None = None,
              seed: int | None = None) -> "Classifier":
        """Minibatch SGD with momentum on cross-entropy, in place.

        The momentum buffer starts at zero on every call. Raises
        :class:`DivergenceError` on a non-finite loss; parameters are left
        as they were at that point, so callers restore a snapshot.
        """
        X = self._check_X(X)
        y = np.asarray(y, dtype=np.int64)
        if len(X) == 0 or len(X) != len(y):
            raise ValueError("training set is empty or misaligned")
        epochs = config.epochs_per_batch if epochs is None else epochs
        rng = np.random.default_rng(config.seed if seed is None else seed)
        velocity = [np.zeros_like(p) for p in self.params]
        n, bs = len(X), config.minibatch_size
        lr, mu = config.learning_rate, config.momentum
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(epochs):
                order = rng.permutation(n)
                for start in range(0, n, bs):
                    idx = order[start:start + bs]
                    loss, grads = self.loss_and_grad(X[idx], y[idx], config.weight_decay)
                    if not np.isfinite(loss):
                        raise DivergenceError(f"non-finite training loss {loss}")
                    for p, v, g in zip(self.params, velocity, grads):
                        v *= mu
                        v -= lr * g
                        p += v
        if not all(np.all(np.isfinite(p)) for p in self.params):
            raise DivergenceError("non-finite parameters after training")
        return self

    # -- state ------------------------------------------------------------
    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        offset = 0
        for p in self.params:
            p[...] = flat[offset:offset + p.size].reshape(p.shape)
            offset += p.size

    def to_bytes(self) -> bytes:
        """JSON header line followed by one ``.npy`` record per parameter."""
        header = dict(self._header(), format=SNAPSHOT_FORMAT, version=SNAPSHOT_VERSION,
                      params=list(self.param_names))
        buf = io.BytesIO()
        buf.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for p in self.params:
            np.save(buf, p, allow_pickle=False)
        return buf.getvalue()

    def load_bytes(self, blob: bytes) -> None:
        header, arrays = _read_blob(blob)
        expected = dict(self._header(), format=SNAPSHOT_FORMAT, version=SNAPSHOT_VERSION,
                        params=list(self.param_names))
        if header != expected:
            raise SchemaError(f"snapshot {header} does not match model {self._header()}")
        for i, name in enumerate(self.param_names):
            if arrays[name].shape != self.params[i].shape:
                raise SchemaError(f"parameter {name} has wrong shape")
            self.params[i] = arrays[name].astype(np.float64, copy=True)

    def snapshot(self, batch_index: int = -1, validation_accuracy: float = float("nan")) -> ModelSnapshot:
        return ModelSnapshot(self.to_bytes(), batch_index, validation_accuracy)

    def restore(self, snap: ModelSnapshot) -> "Classifier":
        self.load_bytes(snap.parameters)
        return self

    def copy(self) -> "Classifier":
        return load_model(self.to_bytes())


class SoftmaxRegression(Classifier):
    """Multinomial logistic regression, zero-initialised."""

    variant = "softmax_linear"
    param_names = ("W", "b")

    def __init__(self, n_classes: int, n_features: int):
        super().__init__(n_classes, n_features)
        self.params = [np.zeros((n_features, n_classes)), np.zeros(n_classes)]

    def _forward(self, X):
        W, b = self.params
        return X @ W + b, X

    def _backward(self, X, dz):
        return [X.T @ dz, dz.sum(axis=0)]

    def extract_features(self, X) -> np.ndarray:
        # the pre-softmax layer of a linear model is its logits
        return self.logits(X)


class MLP(Classifier):
    variant = "mlp"
    param_names = ("W1", "b1", "W2", "b2")

    def __init__(self, n_classes: int, n_features: int, hidden_units: int, seed: int = 0):
        super().__init__(n_classes, n_features)
        self.hidden_units = hidden_units
        rng = np.random.default_rng(seed)
        lim1, lim2 = 1 / np.sqrt(n_features), 1 / np.sqrt(hidden_units)
        self.params = [
            rng.uniform(-lim1, lim1, size=(n_features, hidden_units)),
            np.zeros(hidden_units),
            rng.uniform(-lim2, lim2, size=(hidden_units, n_classes)),
            np.zeros(n_classes),
        ]

    def _header(self):
        return dict(super()._header(), hidden_units=self.hidden_units)

    def _hidden(self, X):
        W1, b1 = self.params[0], self.params[1]
        pre = X @ W1 + b1
        return pre, np.maximum(pre, 0.0)

    def _forward(self, X):
        pre, h = self._hidden(X)
        W2, b2 = self.params[2], self.params[3]
        return h @ W2 + b2, (X, pre, h)

    def _backward(self, cache, dz):
        X, pre, h = cache
        W2 = self.params[2]
        dh = dz @ W2.T
        dh[pre <= 0] = 0.0
        return [X.T @ dh, dh.sum(axis=0), h.T @ dz, dz.sum(axis=0)]

    def extract_features(self, X) -> np.ndarray:
        return self._hidden(self._check_X(X))[1]


def build_classifier(kind: ClassifierKind, n_classes: int, n_features: int, seed: int = 0) -> Classifier:
    if kind.variant == "softmax_linear":
        return SoftmaxRegression(n_classes, n_features)
    return MLP(n_classes, n_features, kind.hidden_units, seed=seed)


def _read_blob(blob: bytes):
    head, sep, body = blob.partition(b"\n")
    try:
        header = json.loads(head.decode()) if sep else None
    except (UnicodeDecodeError, json.JSONDecodeError):
        header = None
    if not isinstance(header, dict) or header.get("format") != SNAPSHOT_FORMAT:
        raise SchemaError("not a model snapshot")
    if header.get("version") != SNAPSHOT_VERSION:
        raise SchemaError(f"unsupported snapshot version {header.get('version')}")
    buf = io.BytesIO(body)
    arrays = {name: np.load(buf, allow_pickle=False) for name in header["params"]}
    return header, arrays


def load_model(blob: bytes) -> Classifier:
    """Rebuild a classifier from ``Classifier.to_bytes`` output."""
    header, _ = _read_blob(blob)
    if header["variant"] == "softmax_linear":
        model: Classifier = SoftmaxRegression(header["n_classes"], header["n_features"])
    elif header["variant"] == "mlp":
        model = MLP(header["n_classes"], header["n_features"], header["hidden_units"])
    else:
        raise SchemaError(f"unknown variant {header['variant']!r}")
    model.load_bytes(blob)
    return model


def predict_distribution(model: Classifier, features) -> PredictionDistribution:
    return PredictionDistribution(model.predict_proba(features)[0])


def rank_labels(dist: PredictionDistribution | np.ndarray) -> RankedLabels:
    probs = dist.probs if isinstance(dist, PredictionDistribution) else np.asarray(dist)
    return RankedLabels(tuple(int(i) for i in np.argsort(-probs, kind="stable")))


def rank_matrix(P: np.ndarray) -> np.ndarray:
    """Row-wise descending label order; stable sort keeps lower index first on ties."""
    return np.argsort(-P, axis=1, kind="stable")


def validation_loss(model: Classifier, validation: Sequence[Sample]) -> float:
    """Mean negative log-likelihood of the validation labels.

    Lower means a more reliable model. Probabilities are floored at 1e-12.
    """
    if not validation:
        raise ValueError("validation set is empty")
    X, y = as_arrays(validation)
    p = model.predict_proba(X)[np.arange(len(y)), y]
    return float(np.mean(-np.log(np.maximum(p, PROB_FLOOR))))
