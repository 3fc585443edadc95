"""Seeded synthetic constrained tasks.

``two-gaussians-constrained``
    Class-conditional Gaussians on ``dims`` continuous features (the last one
    immutable), an integer counter, and a sum feature.  Constraints: the sum
    definition, a bounded difference, and an implication from the first
    Gaussian feature to the counter.

``integer-grid``
    Four integer features in ``{0..9}``: ``a, b, c`` drawn per class and
    ``d = max(a, b)``; a budget inequality and an implication.  Small enough
    to enumerate every row.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .constraints import FeatureDef, FeatureSchema, Problem, build_constraint_set, dump_schema
from .constraints.evaluate import all_satisfied
from .data import Dataset, write_csv
from .errors import ConfigError, DataError

GENERATORS = ("two-gaussians-constrained", "integer-grid")


@dataclass(frozen=True)
class SyntheticTaskSpec:
    generator: str = "two-gaussians-constrained"
    n_rows: int = 400
    dims: int = 3
    positive_fraction: float = 0.5
    separation: float = 1.2
    seed: int = 0
    max_tries: int = 200

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ConfigError(f"unknown generator {self.generator!r}; choose from {GENERATORS}")
        if self.n_rows < 2:
            raise ConfigError("n_rows must be >= 2")
        if not 0 < self.positive_fraction < 1:
            raise ConfigError("positive_fraction must be in (0, 1)")
        if self.generator == "two-gaussians-constrained" and self.dims < 2:
            raise ConfigError("two-gaussians-constrained needs dims >= 2")


def gaussian_problem(dims: int = 3, bound: float = 3.0) -> Problem:
    feats = [FeatureDef(f"g{i}", "continuous", -bound, bound, mutable=(i < dims - 1)) for i in range(dims)]
    feats.append(FeatureDef("cnt", "integer", 0.0, 5.0, True))
    feats.append(FeatureDef("total", "continuous", -2 * bound, 2 * bound, True))
    schema = FeatureSchema(tuple(feats))
    cons = [
        "total == g0 + g1",
        "g0 - g1 <= 2.5",
        "if g0 > 1 then cnt >= 1",
    ]
    return Problem(schema, build_constraint_set(schema, cons))


def grid_problem() -> Problem:
    feats = [FeatureDef(n, "integer", 0.0, 9.0, True) for n in ("a", "b", "c", "d")]
    schema = FeatureSchema(tuple(feats))
    cons = [
        "d == max(a, b)",
        "a + b + c <= 20",
        "if c > 6 then a >= 2",
    ]
    return Problem(schema, build_constraint_set(schema, cons))


def task_problem(spec: SyntheticTaskSpec) -> Problem:
    if spec.generator == "integer-grid":
        return grid_problem()
    return gaussian_problem(spec.dims)


def _labels(spec, rng):
    n_pos = int(round(spec.n_rows * spec.positive_fraction))
    y = np.array([1] * n_pos + [0] * (spec.n_rows - n_pos))
    return y[rng.permutation(spec.n_rows)]


def _draw_gaussian(spec, y, rng, problem):
    dims = spec.dims
    mu = np.where(y == 1, 1.0, -1.0)[:, None] * (spec.separation / 2.0)
    G = np.clip(rng.normal(size=(len(y), dims)) + mu, -3.0, 3.0)
    cnt = rng.integers(0, 6, size=len(y)).astype(float)
    total = G[:, 0] + G[:, 1]
    return np.column_stack([G, cnt, total])


def _draw_grid(spec, y, rng, problem):
    centre = np.where(y == 1, 6.0, 3.0)
    a = np.clip(np.round(rng.normal(centre, 2.0)), 0, 9)
    b = np.clip(np.round(rng.normal(9.0 - centre, 2.0)), 0, 9)
    c = np.clip(np.round(rng.normal(centre, 2.5)), 0, 9)
    d = np.maximum(a, b)
    return np.column_stack([a, b, c, d])


def generate(spec: SyntheticTaskSpec) -> Dataset:
    """Rejection-sample valid rows per class until the requested counts are met."""
    rng = np.random.default_rng(spec.seed)
    problem = task_problem(spec)
    draw = _draw_grid if spec.generator == "integer-grid" else _draw_gaussian
    y = _labels(spec, rng)
    X = np.zeros((len(y), problem.schema.n_features))
    pending = np.arange(len(y))
    for _ in range(spec.max_tries):
        if not len(pending):
            break
        cand = draw(spec, y[pending], rng, problem)
        ok = all_satisfied(problem.constraints, cand, problem.schema)
        ok &= np.all((cand >= problem.schema.lower) & (cand <= problem.schema.upper), axis=1)
        X[pending[ok]] = cand[ok]
        pending = pending[~ok]
    if len(pending):
        raise DataError(
            f"constraint template unsatisfiable for {spec.generator}: {len(pending)} rows still invalid "
            f"after {spec.max_tries} rejection rounds"
        )
    return Dataset(X, y, problem, positive_class=1, n_classes=2)


def write_task(spec: SyntheticTaskSpec, out_dir) -> dict:
    """Write ``data.csv``, ``schema.json`` and ``task.json`` into ``out_dir``."""
    data = generate(spec)
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "data": os.path.join(out_dir, "data.csv"),
        "schema": os.path.join(out_dir, "schema.json"),
        "task": os.path.join(out_dir, "task.json"),
    }
    write_csv(paths["data"], data)
    with open(paths["schema"], "w", encoding="utf-8") as fh:
        fh.write(dump_schema(data.problem))
    with open(paths["task"], "w", encoding="utf-8") as fh:
        json.dump({**asdict(spec), "schema_hash": data.problem.schema_hash,
                   "fingerprint": data.fingerprint()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths
