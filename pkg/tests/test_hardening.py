import numpy as np
import pytest

from conftest import split
from tabrobust.constraints import all_satisfied
from tabrobust.data import Dataset
from tabrobust.errors import CapabilityError, ConfigError, TraceTooShortError
from tabrobust.hardening import (
    ConvergenceTrace,
    HardeningConfig,
    convergence_report,
    effective_eps,
    eta_schedule,
    harden_aft,
    harden_aicl,
)
from tabrobust.attacks import Arena, attack_capgd
from tabrobust.hardening.common import inner_attack
from tabrobust.models import ForestClassifier, InContextAttentionClassifier, LogisticClassifier, fit


@pytest.fixture(scope="module")
def icl(gaussian_task):
    train, test = split(gaussian_task, frac=0.4)
    model = fit(InContextAttentionClassifier(gaussian_task.problem, epochs=5, seed=0), train)
    return model, train, test


FAST = dict(capgd_steps=5, val_size=32, n_probes=8, max_epochs=2, patience=None)


def test_zero_epochs_is_identity(icl, gaussian_task):
    model, train, _ = icl
    art = harden_aicl(model, train, HardeningConfig(max_epochs=0, **{k: v for k, v in FAST.items()
                                                                    if k != "max_epochs"}))
    assert len(art.trace) == 0
    assert np.array_equal(art.context.X, art.clean_context.X)
    logit = fit(LogisticClassifier(gaussian_task.problem, epochs=20), train)
    aft = harden_aft(logit, train, HardeningConfig(mode="AFT", max_epochs=0))
    before, after = logit.get_params(), aft.model.get_params()
    assert all(np.array_equal(before[k], after[k]) for k in before)


def test_aicl_contract(icl):
    model, train, _ = icl
    theta = model.param_hash()
    cfg = HardeningConfig(eps=0.3, **FAST)
    art = harden_aicl(model, train, cfg)
    assert model.param_hash() == theta == art.model.param_hash()
    assert np.array_equal(art.context.y, art.clean_context.y)
    view = model.view
    d = np.linalg.norm(view.scale(art.context.X) - view.scale(art.clean_context.X), axis=1)
    assert np.all(d <= 0.3 + 1e-6)
    assert np.all(all_satisfied(train.problem.constraints, art.context.X, train.problem.schema))
    frozen = train.problem.frozen_mask()
    assert np.array_equal(art.context.X[:, frozen], art.clean_context.X[:, frozen])
    assert d.max() > 0
    assert len(art.trace) == 2 * cfg.n_split


def test_eta_sequence_exact(icl):
    model, train, _ = icl
    cfg = HardeningConfig(alpha=0.7, **FAST)
    art = harden_aicl(model, train, cfg)
    t = np.arange(len(art.trace))
    assert np.array_equal(art.trace.column("eta_t"), 1.0 / (1.0 + t) ** 0.7)
    eps_eff = np.array([r["eps_eff"] for r in art.trace.rows])
    assert np.array_equal(eps_eff, np.maximum(np.minimum(0.3, 0.3 * art.trace.column("eta_t")), 0.015))


def test_schedule_helpers():
    cfg = HardeningConfig(eta0=2.0, alpha=0.6)
    assert eta_schedule(3, cfg) == 2.0 / 4.0 ** 0.6
    assert effective_eps(10.0, cfg) == 0.3
    assert effective_eps(1e-9, cfg) == pytest.approx(0.015)
    assert eta_schedule(7, HardeningConfig(schedule="constant", eta0=0.4)) == 0.4


def test_acceptance_rule_monotone(icl):
    model, train, _ = icl
    art = harden_aicl(model, train, HardeningConfig(acceptance_rule=True, **FAST))
    f = np.array([r["F_val"] for r in art.trace.rows if r["accepted"]])
    assert len(f) > 0
    assert np.all(np.diff(f) <= 0)
    assert all(r["retries"] <= 3 for r in art.trace.rows)


def test_capability_errors(gaussian_task):
    train, _ = split(gaussian_task)
    logit = fit(LogisticClassifier(gaussian_task.problem, epochs=5), train)
    with pytest.raises(CapabilityError):
        harden_aicl(logit, train, HardeningConfig())
    forest = fit(ForestClassifier(gaussian_task.problem, n_trees=2, max_depth=2), train)
    with pytest.raises(CapabilityError):
        harden_aft(forest, train, HardeningConfig(mode="AFT"))


def test_config_validation():
    for bad in ({"mode": "X"}, {"alpha": 0.5}, {"alpha": 1.2}, {"eps": 0.0}, {"eps": 0.8},
                {"n_split": 1}, {"max_epochs": -1}, {"schedule": "cosine"}, {"inner_attack": "fgsm"},
                {"on_failure": "x"}):
        with pytest.raises(ConfigError):
            HardeningConfig(**bad)


def test_failed_rows_stay_clean_unless_asked(icl):
    model, train, _ = icl
    X, y = train.X[:40], train.y[:40]
    cfg = HardeningConfig(eps=0.3, capgd_steps=5)
    arena = Arena(train.problem)
    idx = np.arange(40)
    out = attack_capgd(model, train.problem, X, y, cfg.inner_budget(eps=0.1, seed=3), idx, arena=arena)
    failed = np.array([not o.success for o in out])
    assert failed.any() and (~failed).any()
    rows = inner_attack(model, train.problem, X, y, cfg, 0.1, 3, idx, arena)
    assert np.array_equal(rows[failed], X[failed])
    assert not np.array_equal(rows[~failed], X[~failed])
    kept = inner_attack(model, train.problem, X, y, cfg, 0.1, 3, idx, arena, keep_failed=True)
    assert np.array_equal(kept[~failed], rows[~failed])
    assert not np.array_equal(kept[failed], X[failed])


def test_aft_keeps_context_bitwise(icl):
    model, train, _ = icl
    art = harden_aft(model, train, HardeningConfig(mode="AFT", lr=1e-3, **FAST))
    assert art.model.context.X.tobytes() == model.context.X.tobytes()
    assert art.model.context.y.tobytes() == model.context.y.tobytes()
    assert art.model.param_hash() != model.param_hash()


def test_aft_identity_is_clean_descent_on_convex_toy(gaussian_task):
    train, val = split(gaussian_task)
    p = gaussian_task.problem
    model = LogisticClassifier(p, w=np.zeros(p.schema.n_features), b=0.0)
    Zv = model.view.scale(val.X)
    losses = [float(np.mean(model.loss(Zv, val.y)))]
    cfg = HardeningConfig(mode="AFT", inner_attack="identity", max_epochs=1, patience=None,
                          lr=1e-3, weight_decay=0.0)
    harden_aft(model, train, cfg, val=val,
               on_fold=lambda t, m: losses.append(float(np.mean(m.loss(Zv, val.y)))))
    assert len(losses) == cfg.n_split + 1
    assert np.all(np.diff(losses) <= 0)


# ------------------------------------------------------------- reports


def _trace(drift):
    tr = ConvergenceTrace()
    for t, d in enumerate(drift):
        tr.append(t=t, drift=d, F_val=0.0, g_hat=1.0, eta_t=1.0, retries=0)
    return tr


def test_report_examples():
    rep = convergence_report(_trace(np.zeros(12)))
    assert rep["converging"] and rep["drift_ratio"] == 0.0
    rep = convergence_report(_trace(1.0 / (1.0 + np.arange(20))))
    assert rep["drift_ratio"] < 0.5 and rep["converging"]
    assert not convergence_report(_trace(np.ones(12)))["converging"]
    with pytest.raises(TraceTooShortError):
        convergence_report(_trace(np.ones(9)))


def test_identity_inner_attack_gives_constant_context(icl):
    model, train, _ = icl
    cfg = HardeningConfig(inner_attack="identity", eta_floor=0.0, capgd_steps=5, val_size=32,
                          n_probes=4, max_epochs=3, patience=None, n_split=4)
    art = harden_aicl(model, train, cfg)
    assert np.all(art.trace.column("drift") == 0.0)
    assert convergence_report(art.trace)["converging"]


def test_trace_csv_header(icl):
    model, train, _ = icl
    art = harden_aicl(model, train, HardeningConfig(**FAST))
    lines = art.trace.to_csv().splitlines()
    assert lines[0] == "t,drift,F_val,g_hat,eta_t,retries,accepted"
    assert len(lines) == len(art.trace) + 1
