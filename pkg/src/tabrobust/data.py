"""Datasets, min-max scaling, folds and context selection."""
from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .constraints import Problem, satisfied
from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

DEFAULT_CONTEXT_CAP = 10_000


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray  # raw units, (m, D)
    y: np.ndarray  # int labels in {0..C-1}
    problem: Problem
    positive_class: int = 1
    n_classes: int = 2

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[1] != self.problem.schema.n_features:
            raise DataError(f"X must have shape (m, {self.problem.schema.n_features})")
        if len(self.y) != len(self.X):
            raise DataError("|y| != rows(X)")

    def __len__(self):
        return len(self.y)

    @property
    def schema(self):
        return self.problem.schema

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.y[idx], self.problem, self.positive_class, self.n_classes)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.X, dtype=float).tobytes())
        h.update(np.ascontiguousarray(self.y, dtype=np.int64).tobytes())
        return h.hexdigest()[:16]


def validate_rows(X, problem: Problem) -> List[str]:
    """Human-readable reasons each row is invalid ('' when valid)."""
    schema = problem.schema
    lower, upper = schema.lower, schema.upper
    out = []
    sat = satisfied(problem.constraints, X, schema)
    for i, row in enumerate(np.atleast_2d(X)):
        reasons = []
        bad = np.where((row < lower) | (row > upper))[0]
        reasons += [f"{schema.names[j]} out of bounds" for j in bad]
        for j, f in enumerate(schema.features):
            if f.kind in ("integer", "categorical") and row[j] != np.round(row[j]):
                reasons.append(f"{f.name} not integral")
        failed = np.where(~sat[i])[0]
        reasons += [f"violates constraint {problem.constraints.sources[k]!r}" for k in failed]
        out.append("; ".join(reasons))
    return out


def load_csv(path, problem: Problem, label: str = "label", on_invalid: str = "reject",
             positive_class: int = 1) -> Dataset:
    """Load an RFC-4180 CSV with a header row.

    ``on_invalid`` is ``"reject"`` (drop invalid rows, logging each row number)
    or ``"abort"`` (raise on the first invalid row).
    """
    if on_invalid not in ("reject", "abort"):
        raise ConfigError(f"on_invalid must be 'reject' or 'abort', got {on_invalid!r}")
    schema = problem.schema
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, header required") from None
        cols = {name: i for i, name in enumerate(header)}
        missing = [n for n in schema.names + [label] if n not in cols]
        if missing:
            raise DataError(f"{path}: missing column(s) {missing}")
        rows, labels, line_nos = [], [], []
        for rownum, rec in enumerate(reader, start=2):
            if not rec:
                continue
            vals = []
            for f in schema.features:
                cell = rec[cols[f.name]].strip()
                if f.kind == "categorical":
                    if cell not in f.levels:
                        raise DataError(
                            f"{path}: row {rownum}, column {f.name!r}: {cell!r} is not a level of {list(f.levels)}"
                        )
                    vals.append(float(f.levels.index(cell)))
                else:
                    try:
                        vals.append(float(cell))
                    except ValueError:
                        raise DataError(
                            f"{path}: row {rownum}, column {f.name!r}: cannot parse {cell!r} as a number"
                        ) from None
            try:
                labels.append(int(rec[cols[label]]))
            except ValueError:
                raise DataError(f"{path}: row {rownum}, column {label!r}: bad label {rec[cols[label]]!r}") from None
            rows.append(vals)
            line_nos.append(rownum)
    X = np.array(rows, dtype=float).reshape(len(rows), schema.n_features)
    y = np.array(labels, dtype=np.int64)
    reasons = validate_rows(X, problem) if len(X) else []
    keep = np.array([not r for r in reasons], dtype=bool)
    for rownum, r in zip(line_nos, reasons):
        if r:
            if on_invalid == "abort":
                raise DataError(f"{path}: row {rownum}: {r}")
            log.warning("%s: rejected row %d: %s", path, rownum, r)
    n_classes = max(2, int(y.max()) + 1) if len(y) else 2
    return Dataset(X[keep], y[keep], problem, positive_class, n_classes)


def write_csv(path, data: Dataset, label: str = "label"):
    schema = data.schema
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(schema.names + [label])
        for row, yi in zip(data.X, data.y):
            cells = []
            for f, v in zip(schema.features, row):
                if f.kind == "categorical":
                    cells.append(f.levels[int(v)])
                elif f.kind == "integer":
                    cells.append(str(int(v)))
                else:
                    cells.append(repr(float(v)))
            w.writerow(cells + [int(yi)])


class ScaledView:
    """Min-max maps between raw units and [0, 1], bounds taken from the schema."""

    def __init__(self, schema):
        self.lower = schema.lower
        self.upper = schema.upper
        self.span = self.upper - self.lower
        self.constant = self.span == 0
        self._safe = np.where(self.constant, 1.0, self.span)

    def scale(self, X):
        Z = (np.asarray(X, dtype=float) - self.lower) / self._safe
        return np.where(self.constant, 0.5, Z)

    def unscale(self, Z):
        X = np.asarray(Z, dtype=float) * self._safe + self.lower
        return np.where(self.constant, self.lower, X)

    def grad_to_scaled(self, G):
        """Chain rule: raw-space gradient to scaled-space gradient."""
        return np.asarray(G) * np.where(self.constant, 0.0, self.span)


# ------------------------------------------------------------------ folds


def split_folds(count: int, n_split: int, epoch_seed) -> List[np.ndarray]:
    """Permute ``range(count)`` by seed, then cut into near-equal contiguous folds."""
    if n_split < 2 or count < n_split:
        raise ConfigError(f"need 2 <= n_split <= count, got n_split={n_split}, count={count}")
    perm = np.random.default_rng(epoch_seed).permutation(count)
    return [np.asarray(f) for f in np.array_split(perm, n_split)]


def validation_split(n: int, seed, fraction: float = 0.2):
    """Seeded shuffle; the last ``fraction`` of rows become the validation split."""
    perm = np.random.default_rng(seed).permutation(n)
    n_val = max(1, int(round(fraction * n)))
    return np.sort(perm[: n - n_val]), np.sort(perm[n - n_val:])


# ---------------------------------------------------------------- contexts


@dataclass(frozen=True, eq=False)
class ContextState:
    X: np.ndarray
    y: np.ndarray
    provenance: dict = field(default_factory=lambda: {"kind": "full-train"})

    def __len__(self):
        return len(self.y)

    def to_json(self) -> dict:
        return {"n": len(self.y), **self.provenance}


def rebalanced_indices(y, cap: int, n_classes: int, rng) -> np.ndarray:
    """Equal per-class quotas ``cap // C``; the remainder goes to the majority class."""
    counts = np.bincount(y, minlength=n_classes)
    quota = np.full(n_classes, cap // n_classes)
    quota[int(np.argmax(counts))] += cap - quota.sum()
    picked = []
    for c in range(n_classes):
        idx = np.where(y == c)[0]
        take = min(len(idx), int(quota[c]))
        picked.append(rng.choice(idx, size=take, replace=False))
    return np.sort(np.concatenate(picked))


def sample_context(train: Dataset, cap: int = DEFAULT_CONTEXT_CAP, seeds: Sequence[int] = range(10),
                   rebalance: str = "both",
                   selector: Optional[Callable[[ContextState], float]] = None) -> ContextState:
    """Pick the model context under the size cap.

    Candidates are every (seed, rebalance mode) pair; ``selector`` returns the
    validation MCC of a candidate and the argmax wins (ties: lowest seed, then
    the non-rebalanced candidate).
    """
    if len(train) == 0:
        raise DataError("cannot sample a context from an empty training set")
    if cap < train.n_classes:
        raise ConfigError(f"context cap {cap} is smaller than the number of classes {train.n_classes}")
    if len(train) <= cap:
        return ContextState(train.X.copy(), train.y.copy(), {"kind": "full-train"})
    modes = {"both": (False, True), "on": (True,), "off": (False,)}[rebalance]
    best, best_key = None, None
    for seed in sorted(seeds):
        for reb in modes:
            rng = np.random.default_rng(seed)
            if reb:
                idx = rebalanced_indices(train.y, cap, train.n_classes, rng)
            else:
                idx = np.sort(rng.choice(len(train), size=cap, replace=False))
            prov = {"kind": "seeded-subsample", "seed": int(seed), "rebalanced": reb}
            cand = ContextState(train.X[idx], train.y[idx], prov)
            score = float(selector(cand)) if selector is not None else 0.0
            prov["mcc"] = score
            # maximize score; ties keep the earlier (lower seed, non-rebalanced) candidate
            if best is None or score > best_key:
                best, best_key = cand, score
    return best
