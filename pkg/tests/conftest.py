import numpy as np
import pytest

from tabrobust.constraints import FeatureDef, FeatureSchema, Problem, build_constraint_set
from tabrobust.synthetic import SyntheticTaskSpec, generate


def make_problem(features, constraints, tau=1e-4):
    schema = FeatureSchema(tuple(features))
    return Problem(schema, build_constraint_set(schema, constraints, tau))


def cont(name, lo=-5.0, hi=5.0, mutable=True):
    return FeatureDef(name, "continuous", lo, hi, mutable)


def integer(name, lo=0.0, hi=10.0, mutable=True):
    return FeatureDef(name, "integer", lo, hi, mutable)


@pytest.fixture(scope="session")
def gaussian_task():
    return generate(SyntheticTaskSpec(n_rows=400, dims=3, separation=2.0, seed=0))


@pytest.fixture(scope="session")
def grid_task():
    return generate(SyntheticTaskSpec(generator="integer-grid", n_rows=300, seed=0))


def split(data, seed=0, frac=0.5):
    perm = np.random.default_rng(seed).permutation(len(data))
    k = int(frac * len(data))
    return data.subset(np.sort(perm[:k])), data.subset(np.sort(perm[k:]))
