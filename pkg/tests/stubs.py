"""Test doubles: classifiers whose outputs are fixed by construction."""
import numpy as np

from streamclean.classifier import Classifier


class TableModel(Classifier):
    """Looks up a fixed probability row by ``int(features[0])``.

    Training is a no-op, so every step of a batch can be traced by hand.
    """

    variant = "table"

    def __init__(self, table: dict, n_classes: int, n_features: int = 1):
        super().__init__(n_classes, n_features)
        self.table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}

    def _forward(self, X):
        rows = np.stack([self.table[int(round(x))] for x in X[:, 0]])
        return np.log(rows), None

    def extract_features(self, X):
        return self.logits(X)

    def train(self, X, y, config, epochs=None, seed=None):
        return self


class OneHotOracle(Classifier):
    """Ranks the true label (stored in ``features[0]``) first and
    ``(y + 1) mod N`` second; every other class shares the remaining mass."""

    variant = "onehot_oracle"

    def __init__(self, n_classes: int):
        super().__init__(n_classes, 1)

    def _forward(self, X):
        y = X[:, 0].astype(int)
        z = np.zeros((len(X), self.n_classes))
        z[np.arange(len(X)), y] = 4.0
        z[np.arange(len(X)), (y + 1) % self.n_classes] = 2.0
        return z, None

    def extract_features(self, X):
        return self.logits(X)

    def train(self, X, y, config, epochs=None, seed=None):
        return self
