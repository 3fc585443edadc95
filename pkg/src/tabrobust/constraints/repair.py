"""The repair operator: map any candidate row back into the valid data space."""
from __future__ import annotations

import numpy as np

from .evaluate import eval_arith, feature_index
from .schema import ConstraintSet, FeatureSchema


def round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def repair(x, constraints: ConstraintSet, schema: FeatureSchema) -> np.ndarray:
    """Clip, round integers, snap categoricals, then recompute definitions.

    Works on a single row or a ``(B, D)`` batch and returns a new array.
    Definition targets are recomputed last, in dependency order, so every
    definition holds exactly afterwards. The operator is idempotent.
    """
    X = np.array(x, dtype=float, copy=True)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    lower, upper = schema.lower, schema.upper
    X = np.clip(X, lower, upper)
    for j, f in enumerate(schema.features):
        if f.kind in ("integer", "categorical"):
            col = round_half_away(X[:, j])
            # rounding can leave the box when a bound is fractional
            col = np.where(col > upper[j], col - 1, col)
            col = np.where(col < lower[j], col + 1, col)
            X[:, j] = col
    index = feature_index(schema)
    for d in constraints.definitions:
        X[:, index[d.target]] = eval_arith(d.expr, X, index)
    return X[0] if single else X
