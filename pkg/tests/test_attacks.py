import numpy as np
import pytest

from conftest import cont, integer, make_problem, split
from oracles import audit, raw_logistic
from tabrobust.attacks import (
    Arena,
    AttackBudget,
    attack_caa,
    attack_capgd,
    attack_identity,
    attack_moeva,
    checkpoints,
    dominates,
    dumps_campaign,
    load_campaign,
    non_dominated_sort,
    project,
    replay,
    robust_accuracy_of,
    run_attack,
    save_campaign,
    survival,
)
from tabrobust.data import Dataset
from tabrobust.errors import CapabilityError, ConfigError, SchemaMismatchError
from tabrobust.models import ForestClassifier, LogisticClassifier, MlpClassifier, fit


@pytest.fixture(scope="module")
def victims(gaussian_task):
    train, test = split(gaussian_task)
    p = gaussian_task.problem
    models = {
        "logistic": fit(LogisticClassifier(p, epochs=300), train),
        "mlp": fit(MlpClassifier(p, hidden=(16,), epochs=30, seed=1), train),
    }
    return models, test


def _correct_positive(model, data):
    pred = model.predict(model.view.scale(data.X))
    keep = (data.y == 1) & (pred == 1)
    return data.X[keep], data.y[keep], np.where(keep)[0]


# ------------------------------------------------------------- pieces


def test_checkpoint_schedule():
    assert checkpoints(100) == [22, 41, 57, 70, 80, 87, 93, 99]
    assert checkpoints(10) == [3, 5, 6, 7, 8, 9]
    assert checkpoints(1) == []


@pytest.mark.parametrize("norm", ["L2", "Linf"])
def test_projection_lands_in_ball_and_box(norm):
    rng = np.random.default_rng(0)
    Z0 = rng.uniform(size=(200, 4))
    Z = Z0 + rng.normal(scale=2.0, size=Z0.shape)
    P = project(Z, Z0, 0.3, norm)
    d = P - Z0
    size = np.linalg.norm(d, axis=1) if norm == "L2" else np.abs(d).max(axis=1)
    assert np.all(size <= 0.3 + 1e-12)
    assert np.all((P >= 0) & (P <= 1))
    inside = Z0 + 0.01 * rng.normal(size=Z0.shape)
    inside = np.clip(inside, 0, 1)
    assert np.allclose(project(inside, Z0, 0.3, norm), inside)


def test_budget_validation():
    for bad in ({"eps": 0.0}, {"eps": -1.0}, {"norm": "L1"}, {"capgd_steps": 0}, {"moeva_population": 0}):
        with pytest.raises(ConfigError):
            AttackBudget(**bad)


def test_dominance_and_fronts():
    assert dominates([0, 1, 1], [0, 1, 2]) and not dominates([0, 1, 1], [0, 1, 1])
    F = np.array([[1, 1, 0], [0, 2, 0], [2, 2, 0], [3, 3, 1], [1, 1, 0]], float)
    fronts = non_dominated_sort(F)
    assert [sorted(f.tolist()) for f in fronts] == [[0, 1, 4], [2], [3]]


def test_survival_puts_duplicates_last():
    F = np.array([[0.1, 0, 0], [0.1, 0, 0], [0.9, 0.5, 0], [0.8, 0.5, 0.1]])
    X = np.array([[0.0], [0.0], [1.0], [2.0]])
    keep = survival(F, X, 3)
    assert sorted(keep.tolist()) == [0, 2, 3]


# ------------------------------------------------------------- attacks


def test_capgd_requires_gradients(gaussian_task):
    train, test = split(gaussian_task)
    forest = fit(ForestClassifier(gaussian_task.problem, n_trees=3, max_depth=3), train)
    with pytest.raises(CapabilityError):
        attack_capgd(forest, gaussian_task.problem, test.X[:3], test.y[:3], AttackBudget())
    out = attack_caa(forest, gaussian_task.problem, test.X[:3], test.y[:3],
                     AttackBudget(moeva_generations=5, moeva_population=8))
    assert all(o.stage == "moeva" for o in out)


def test_unknown_attack_name(gaussian_task):
    with pytest.raises(ConfigError):
        run_attack("fgsm", None, gaussian_task.problem, gaussian_task.X[:1], gaussian_task.y[:1],
                   AttackBudget())


def test_capgd_one_dimensional_closed_form():
    p = make_problem([cont("x", -1.0, 1.0)], [])
    m = raw_logistic(p, [1.0], 0.0)
    for x0, eps in [(0.2, 0.05), (0.2, 0.15), (0.6, 0.25), (0.6, 0.35), (0.9, 0.5)]:
        out = attack_capgd(m, p, np.array([[x0]]), [1], AttackBudget(eps=eps))[0]
        assert out.success == (eps > x0 / 2.0), (x0, eps)


@pytest.mark.parametrize("name", ["capgd", "moeva", "caa"])
def test_successes_pass_independent_audit(victims, gaussian_task, name):
    models, test = victims
    p = gaussian_task.problem
    budget = AttackBudget(eps=0.5, moeva_generations=30, moeva_population=24)
    total = 0
    for model in models.values():
        X, y, idx = _correct_positive(model, test)
        out = run_attack(name, model, p, X, y, budget, idx)
        n, bad = audit(out, p, 0.5, "L2")
        assert bad == []
        total += n
    assert total > 0


def test_linf_attack_audit(victims, gaussian_task):
    model = victims[0]["mlp"]
    X, y, idx = _correct_positive(model, victims[1])
    out = attack_caa(model, gaussian_task.problem, X, y,
                     AttackBudget(eps=0.2, norm="Linf", moeva_generations=20, moeva_population=16), idx)
    n, bad = audit(out, gaussian_task.problem, 0.2, "Linf")
    assert n > 0 and bad == []


def test_caa_dominates_capgd_dominates_identity(victims, gaussian_task):
    models, test = victims
    p = gaussian_task.problem
    for eps in (0.25, 0.5):
        budget = AttackBudget(eps=eps, moeva_generations=20, moeva_population=16)
        for model in models.values():
            X, y, idx = _correct_positive(model, test)
            ra = [robust_accuracy_of(f(model, p, X, y, budget, idx))
                  for f in (attack_identity, attack_capgd, attack_caa)]
            assert ra[2] <= ra[1] <= ra[0]


def test_identity_success_means_misclassified(victims, gaussian_task):
    model = victims[0]["logistic"]
    test = victims[1]
    out = attack_identity(model, gaussian_task.problem, test.X, test.y)
    wrong = model.predict(model.view.scale(test.X)) != test.y
    assert np.array_equal([o.success for o in out], wrong)


def test_moeva_per_sample_determinism(victims, gaussian_task):
    model = victims[0]["mlp"]
    X, y, idx = _correct_positive(model, victims[1])
    budget = AttackBudget(moeva_generations=10, moeva_population=12, seed=4)
    full = attack_moeva(model, gaussian_task.problem, X, y, budget, idx)
    order = np.arange(len(X))[::-1][:5]
    part = attack_moeva(model, gaussian_task.problem, X[order], y[order], budget, idx[order])
    for o in part:
        ref = next(r for r in full if r.index == o.index)
        assert o.success == ref.success and o.distance == ref.distance


def test_moeva_breaks_forest(gaussian_task):
    train, test = split(gaussian_task)
    p = gaussian_task.problem
    forest = fit(ForestClassifier(p, n_trees=9, max_depth=5), train)
    X, y, idx = _correct_positive(forest, test)
    out = attack_moeva(forest, p, X, y, AttackBudget(eps=0.5, moeva_generations=30, moeva_population=24), idx)
    n, bad = audit(out, p, 0.5, "L2")
    assert n > 0 and bad == []


def test_integer_features_stay_integral():
    p = make_problem([integer("a", 0, 9), integer("b", 0, 9), cont("c", 0, 20)],
                     ["c == a + b", "if a > 5 then b <= 2"])
    rng = np.random.default_rng(0)
    X = np.stack([rng.integers(0, 6, 60), rng.integers(0, 3, 60)], axis=1).astype(float)
    X = np.column_stack([X, X.sum(axis=1)])
    y = (X[:, 0] > 2).astype(int)
    m = fit(MlpClassifier(p, hidden=(8,), epochs=50), Dataset(X, y, p))
    out = attack_caa(m, p, X, y, AttackBudget(eps=0.4, moeva_generations=15, moeva_population=16))
    n, bad = audit(out, p, 0.4, "L2")
    assert n > 0 and bad == []


# ------------------------------------------------------------- replay / store


def test_replay_on_source_reproduces_successes(victims, gaussian_task):
    model = victims[0]["mlp"]
    X, y, idx = _correct_positive(model, victims[1])
    budget = AttackBudget(eps=0.5)
    out = attack_capgd(model, gaussian_task.problem, X, y, budget, idx)
    again = replay(out, model, gaussian_task.problem, budget, gaussian_task.problem.schema_hash)
    assert [o.success for o in again] == [o.success for o in out]


def test_replay_schema_mismatch(victims, gaussian_task):
    model = victims[0]["logistic"]
    out = attack_identity(model, gaussian_task.problem, gaussian_task.X[:2], gaussian_task.y[:2])
    with pytest.raises(SchemaMismatchError):
        replay(out, model, gaussian_task.problem, AttackBudget(), schema_hash="0" * 16)


def test_campaign_round_trip(tmp_path, victims, gaussian_task):
    model = victims[0]["logistic"]
    X, y, idx = _correct_positive(model, victims[1])
    budget = AttackBudget(eps=0.5)
    out = attack_capgd(model, gaussian_task.problem, X, y, budget, idx)
    meta = dict(schema_hash=gaussian_task.problem.schema_hash, model_id="m", attack="capgd", budget=budget)
    path = tmp_path / "c.jsonl"
    save_campaign(path, out, **meta)
    header, back = load_campaign(path)
    assert header["budget"] == budget and header["n"] == len(out)
    assert dumps_campaign(back, **meta) == path.read_text()


def test_arena_feasibility_rejects_frozen_change(gaussian_task):
    arena = Arena(gaussian_task.problem)
    x0 = gaussian_task.X[:1]
    moved = x0.copy()
    moved[0, arena.frozen] += 1e-9
    ok, _ = arena.feasible(moved, x0, 0.5, "L2")
    assert not ok[0]
