from __future__ import annotations

import numpy as np

from ..errors import DataError
from .base import Capabilities, Predictor


def gini(counts: np.ndarray) -> np.ndarray:
    n = counts.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = counts / n[..., None]
    return np.where(n > 0, 1.0 - np.nansum(p * p, axis=-1), 0.0)


def best_split(X, y, n_classes, features):
    """Exhaustive Gini split search over the given features.

    Returns ``(feature, threshold, impurity)`` or ``None`` when no split helps.
    Thresholds are midpoints between consecutive distinct values.
    """
    n = len(y)
    parent = gini(np.bincount(y, minlength=n_classes).astype(float))
    best = None
    for j in features:
        order = np.argsort(X[:, j], kind="stable")
        xs, ys = X[order, j], y[order]
        onehot = np.eye(n_classes)[ys]
        left = np.cumsum(onehot, axis=0)[:-1]
        right = left[-1] + onehot[-1] - left
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        nl = np.arange(1, n)
        score = (nl * gini(left) + (n - nl) * gini(right)) / n
        score = np.where(valid, score, np.inf)
        i = int(np.argmin(score))
        if score[i] < parent - 1e-12 and (best is None or score[i] < best[2]):
            best = (int(j), 0.5 * (xs[i] + xs[i + 1]), float(score[i]))
    return best


class DecisionTree:
    """Depth-limited CART tree stored as flat arrays (feature -1 marks a leaf)."""

    def __init__(self, max_depth=6, min_samples_leaf=1, max_features=None):
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []

    def fit(self, X, y, n_classes, rng):
        self.n_classes = n_classes
        self._grow(X, y, 0, rng)
        self.feature = np.array(self.feature, dtype=int)
        self.threshold = np.array(self.threshold, dtype=float)
        self.left = np.array(self.left, dtype=int)
        self.right = np.array(self.right, dtype=int)
        self.value = np.array(self.value, dtype=float)
        return self

    def _grow(self, X, y, depth, rng):
        node = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        counts = np.bincount(y, minlength=self.n_classes).astype(float)
        self.value.append(counts / counts.sum())
        if depth >= self.max_depth or len(np.unique(y)) == 1 or len(y) < 2 * self.min_samples_leaf:
            return node
        D = X.shape[1]
        k = self.max_features or D
        feats = np.sort(rng.choice(D, size=min(k, D), replace=False))
        split = best_split(X, y, self.n_classes, feats)
        if split is None:
            return node
        j, thr, _ = split
        mask = X[:, j] <= thr
        if mask.sum() < self.min_samples_leaf or (~mask).sum() < self.min_samples_leaf:
            return node
        self.feature[node], self.threshold[node] = j, thr
        self.left[node] = self._grow(X[mask], y[mask], depth + 1, rng)
        self.right[node] = self._grow(X[~mask], y[~mask], depth + 1, rng)
        return node

    def leaf_values(self, X):
        idx = np.zeros(len(X), dtype=int)
        active = self.feature[idx] >= 0
        while active.any():
            f = self.feature[idx[active]]
            go_left = X[active, f] <= self.threshold[idx[active]]
            idx[active] = np.where(go_left, self.left[idx[active]], self.right[idx[active]])
            active = self.feature[idx] >= 0
        return self.value[idx]

    def to_json(self):
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_json(cls, d, n_classes):
        t = cls()
        t.n_classes = n_classes
        t.feature = np.array(d["feature"], dtype=int)
        t.threshold = np.array(d["threshold"], dtype=float)
        t.left = np.array(d["left"], dtype=int)
        t.right = np.array(d["right"], dtype=int)
        t.value = np.array(d["value"], dtype=float).reshape(len(t.feature), n_classes)
        return t


class ForestClassifier(Predictor):
    """Bagged Gini trees; probabilities are the fraction of trees voting per class.

    Gradient-free: attacks must use search (MOEVA).
    """

    kind = "forest"
    capabilities = Capabilities()

    def __init__(self, problem, n_classes=2, n_trees=25, max_depth=6, min_samples_leaf=1,
                 max_features="sqrt", seed=0):
        super().__init__(problem, n_classes)
        self.n_trees, self.max_depth, self.min_samples_leaf = n_trees, max_depth, min_samples_leaf
        self.max_features, self.seed = max_features, seed
        self.trees = []

    def config(self):
        return {"n_trees": self.n_trees, "max_depth": self.max_depth,
                "min_samples_leaf": self.min_samples_leaf, "max_features": self.max_features,
                "seed": self.seed}

    def _n_feats(self):
        D = self.n_features
        if self.max_features == "sqrt":
            return max(1, int(np.sqrt(D)))
        if self.max_features is None:
            return D
        return int(self.max_features)

    def fit(self, Z, y, Z_val=None, y_val=None):
        Z = self._check(Z)
        y = np.asarray(y, dtype=int)
        if len(y) < 2 or len(np.unique(y)) < 2:
            raise DataError("forest fit needs at least two samples covering two classes")
        rng = np.random.default_rng(self.seed)
        self.trees = []
        for _ in range(self.n_trees):
            boot = rng.integers(0, len(y), size=len(y))
            tree = DecisionTree(self.max_depth, self.min_samples_leaf, self._n_feats())
            self.trees.append(tree.fit(Z[boot], y[boot], self.n_classes, rng))
        self.fit_record = {"train_accuracy": float(np.mean(self.predict(Z) == y))}
        if Z_val is not None:
            self.fit_record["val_accuracy"] = float(np.mean(self.predict(Z_val) == y_val))
        return self

    def predict_proba(self, Z):
        Z = self._check(Z)
        if not self.trees:
            raise DataError("forest is not fitted")
        votes = np.zeros((len(Z), self.n_classes))
        for tree in self.trees:
            leaf = tree.leaf_values(Z)
            votes[np.arange(len(Z)), np.argmax(leaf, axis=1)] += 1.0
        return votes / len(self.trees)
