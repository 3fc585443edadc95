"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v``; the summary block
at the end lists every criterion. The constraint audit (criterion 1) runs last
because it rechecks every campaign produced by the other criteria.
"""
import csv
import json
import os

import numpy as np
import pytest

from oracles import (
    audit,
    brute_auroc,
    brute_metrics,
    exhaustive_adversarial,
    fd_context_grad,
    fd_input_grad,
    grid_rows,
    raw_logistic,
    rowwise_rel_err,
)
from conftest import cont, make_problem
from tabrobust.attacks import (
    AttackBudget,
    attack_caa,
    attack_capgd,
    attack_identity,
    attack_moeva,
    load_campaign,
)
from tabrobust.cli import resolve_config, run_command
from tabrobust.constraints import load_schema
from tabrobust.hardening import HardeningConfig, convergence_report, harden_aft, harden_aicl
from tabrobust.metrics import attacked_subset, clean_recall, metric_panel, robust_accuracy
from tabrobust.models import InContextAttentionClassifier, LogisticClassifier, MlpClassifier, fit
from tabrobust.synthetic import SyntheticTaskSpec, generate

NAMES = {
    1: "constraint validity audit",
    2: "identity attack equals clean recall",
    3: "gradient oracles",
    4: "closed-form CAPGD on 1-D logistic",
    5: "MOEVA vs exhaustive oracle",
    6: "CAA <= CAPGD <= identity",
    7: "epsilon-sweep monotonicity",
    8: "AICL efficacy",
    9: "AICL vs AFT ordering",
    10: "convergence diagnostics",
    11: "metric oracles",
    12: "determinism of reruns",
}
VERDICTS = {}
CAMPAIGNS = []  # (outcomes, problem, eps, norm) for the final audit

# AICL task fixture, frozen after a single calibration pilot
AICL_TASK = dict(n_rows=1000, dims=2, separation=3.0)
AICL_SEEDS = range(5)
AICL_INNER_STEPS = 20
AICL_MIN_GAIN = 0.10
AICL_MAX_CLEAN_DROP = 0.05


def verdict(k, ok, detail):
    VERDICTS[k] = (bool(ok), detail)
    assert ok, f"criterion {k} ({NAMES[k]}): {detail}"


def campaign(outcomes, problem, budget):
    CAMPAIGNS.append((outcomes, problem, budget.eps, budget.norm))
    return outcomes


@pytest.fixture(scope="module", autouse=True)
def summary(request):
    yield
    tr = request.config.pluginmanager.get_plugin("terminalreporter")
    write = tr.write_line if tr is not None else print
    write("")
    write("acceptance summary")
    for k, name in NAMES.items():
        ok, detail = VERDICTS.get(k, (False, "did not complete"))
        write(f"criterion {k:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}")


def _split(data, seed, frac=0.5):
    perm = np.random.default_rng(seed).permutation(len(data))
    k = int(frac * len(data))
    return data.subset(np.sort(perm[:k])), data.subset(np.sort(perm[k:]))


def _subset(model, data, convention="correct-positive"):
    pred = model.predict(model.view.scale(data.X))
    idx = attacked_subset(data.y, pred, convention)
    return data.X[idx], data.y[idx], idx


@pytest.fixture(scope="module")
def gauss():
    data = generate(SyntheticTaskSpec(n_rows=600, dims=3, separation=2.0, seed=11))
    train, test = _split(data, 0)
    p = data.problem
    models = {
        "logistic": fit(LogisticClassifier(p, epochs=300), train),
        "mlp": fit(MlpClassifier(p, hidden=(16, 16), epochs=40, seed=0), train),
        "incontext": fit(InContextAttentionClassifier(p, epochs=10, seed=0), train),
    }
    return data, train, test, models


@pytest.fixture(scope="module")
def grid():
    data = generate(SyntheticTaskSpec(generator="integer-grid", n_rows=400, seed=3))
    train, test = _split(data, 1)
    p = data.problem
    models = {
        "logistic": fit(LogisticClassifier(p, epochs=300), train),
        "mlp": fit(MlpClassifier(p, hidden=(16,), epochs=60, seed=0), train),
    }
    return data, train, test, models


# ------------------------------------------------------------------ 2


def test_criterion_02_identity_equals_clean_recall(gauss, grid):
    checks = 0
    for data, _, test, models in (gauss, grid):
        for model in models.values():
            pred = model.predict(model.view.scale(test.X))
            for conv in ("correct-positive", "all-positive"):
                idx = attacked_subset(test.y, pred, conv)
                out = campaign(attack_identity(model, data.problem, test.X[idx], test.y[idx], indices=idx),
                               data.problem, AttackBudget())
                ra = robust_accuracy(out, conv).value
                if ra != clean_recall(test.y, pred, idx):
                    verdict(2, False, f"{model.kind}/{conv}: {ra} != {clean_recall(test.y, pred, idx)}")
                checks += 1
    verdict(2, True, f"exact equality on {checks} model/convention pairs")


# ------------------------------------------------------------------ 3


def test_criterion_03_gradient_oracles(gauss):
    data, train, _, models = gauss
    D = data.problem.schema.n_features
    rng = np.random.default_rng(2024)
    worst = {}

    def points(n, keep=None):
        Z, y = np.empty((0, D)), np.empty(0, dtype=int)
        while len(Z) < n:
            cand = rng.uniform(size=(4 * n, D))
            lab = rng.integers(0, 2, 4 * n)
            if keep is not None:
                ok = keep(cand)
                cand, lab = cand[ok], lab[ok]
            Z, y = np.vstack([Z, cand]), np.concatenate([y, lab])
        return Z[:n], y[:n]

    relu = fit(MlpClassifier(data.problem, hidden=(16, 16), activation="relu", epochs=20, seed=1), train)

    def off_kinks(Z):
        return np.all([np.min(np.abs(a), axis=1) > 1e-3 for a in relu.preactivations(Z)], axis=0)

    for name, model, keep in (("logistic", models["logistic"], None), ("mlp-relu", relu, off_kinks),
                              ("mlp-tanh", fit(MlpClassifier(data.problem, hidden=(16,), activation="tanh",
                                                             epochs=20), train), None),
                              ("incontext", models["incontext"], None)):
        Z, y = points(100, keep)
        _, g = model.loss_and_grad_input(Z, y)
        worst[name] = float(rowwise_rel_err(g, fd_input_grad(model, Z, y)).max())

    icl = models["incontext"]
    Zq, yq = points(100)
    rows = np.random.default_rng(5).choice(len(icl.context), size=100, replace=False)
    G = icl.loss_grad_context(Zq, yq)[rows]
    worst["incontext-context"] = float(rowwise_rel_err(G, fd_context_grad(icl, Zq, yq, rows)).max())
    ok = all(v < 1e-4 for v in worst.values())
    verdict(3, ok, "max relative error " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


# ------------------------------------------------------------------ 4


def test_criterion_04_closed_form_capgd():
    p = make_problem([cont("x", -1.0, 1.0)], [])
    model = raw_logistic(p, [1.0], 0.0)
    xs = np.array([-0.9, -0.7, -0.5, -0.3, -0.1, 0.1, 0.3, 0.5, 0.7, 0.9])
    epss = np.array([0.02, 0.12, 0.22, 0.32, 0.42])
    disagree, n = [], 0
    for eps in epss:
        budget = AttackBudget(eps=float(eps))
        y = (xs > 0).astype(int)
        out = campaign(attack_capgd(model, p, xs[:, None], y, budget), p, budget)
        for x0, o in zip(xs, out):
            expected = eps > abs(x0) / 2.0  # scaled distance to the boundary at raw 0
            n += 1
            if o.success != expected:
                disagree.append((float(x0), float(eps)))
    verdict(4, n == 50 and not disagree, f"{n} pairs, {len(disagree)} disagreements {disagree[:5]}")


# ------------------------------------------------------------------ 5


def test_criterion_05_moeva_vs_exhaustive(grid):
    data, _, test, models = grid
    p = data.problem
    valid = grid_rows(p)
    budget = AttackBudget(eps=0.3, moeva_population=64, moeva_generations=100, seed=0)
    found = provable = false_pos = total = 0
    for model in models.values():
        X, y, idx = _subset(model, test)
        out = campaign(attack_moeva(model, p, X, y, budget, idx), p, budget)
        for x0, y0, o in zip(X, y, out):
            exists = exhaustive_adversarial(model, p, valid, x0, y0, budget.eps, budget.norm)
            total += 1
            provable += exists
            found += exists and o.success
            false_pos += (not exists) and o.success
    recall = found / max(provable, 1)
    ok = provable > 0 and recall >= 0.9 and false_pos == 0
    verdict(5, ok, f"{found}/{provable} provable found ({recall:.1%}), {false_pos} successes on "
                   f"{total - provable} infeasible")


# ------------------------------------------------------------------ 6


def test_criterion_06_caa_dominance(gauss, grid):
    bad, n = [], 0
    for task, (data, _, test, models) in (("gauss", gauss), ("grid", grid)):
        for mname, model in models.items():
            for conv in ("correct-positive", "all-positive"):
                X, y, idx = _subset(model, test, conv)
                for seed in (0, 1):
                    for eps in (0.25, 0.5):
                        budget = AttackBudget(eps=eps, seed=seed, moeva_generations=30, moeva_population=32)
                        ra = [robust_accuracy(campaign(f(model, data.problem, X, y, budget, idx),
                                                       data.problem, budget)).value
                              for f in (attack_identity, attack_capgd, attack_caa)]
                        n += 1
                        if not ra[2] <= ra[1] <= ra[0]:
                            bad.append((task, mname, conv, seed, eps, ra))
    verdict(6, not bad, f"{n} model/task/seed/budget cells, {len(bad)} violations {bad[:3]}")


# ------------------------------------------------------------------ 8 / 9


@pytest.fixture(scope="module")
def aicl_arms():
    rows = []
    for seed in AICL_SEEDS:
        data = generate(SyntheticTaskSpec(seed=seed, **AICL_TASK))
        p = data.problem
        perm = np.random.default_rng(seed).permutation(len(data))
        n_train = len(data) // 2
        train = data.subset(perm[:n_train])
        val = data.subset(perm[n_train:n_train + 128])
        test = data.subset(perm[n_train + 128:])
        model = fit(InContextAttentionClassifier(p, epochs=20, seed=seed), train)

        def evaluate(m):
            pred = m.predict(m.view.scale(test.X))
            X, y, idx = _subset(m, test)
            budget = AttackBudget(eps=0.5, seed=seed)
            out = campaign(attack_capgd(m, p, X, y, budget, idx), p, budget)
            return float(np.mean(pred == test.y)), robust_accuracy(out).value

        base = evaluate(model)
        aicl = harden_aicl(model, train, HardeningConfig(mode="AICL", eps=0.3, seed=seed,
                                                         capgd_steps=AICL_INNER_STEPS), val=val)
        aft = harden_aft(model, train, HardeningConfig(mode="AFT", eps=0.3, seed=seed,
                                                       capgd_steps=AICL_INNER_STEPS), val=val)
        rows.append({"seed": seed, "base": base, "aicl": evaluate(aicl.model), "aft": evaluate(aft.model)})
    return rows


def test_criterion_08_aicl_efficacy(aicl_arms):
    gains = [r["aicl"][1] - r["base"][1] for r in aicl_arms]
    drops = [r["base"][0] - r["aicl"][0] for r in aicl_arms]
    wins = sum(g >= AICL_MIN_GAIN - 1e-12 for g in gains)
    ok = wins >= 4 and max(drops) <= AICL_MAX_CLEAN_DROP
    verdict(8, ok, f"robust-accuracy gains (pp) {[round(100 * g, 1) for g in gains]}, "
                   f"{wins}/5 >= 10; clean drops (pp) {[round(100 * d, 1) for d in drops]}")


def test_criterion_09_aicl_vs_aft(aicl_arms):
    aicl = float(np.mean([r["aicl"][1] for r in aicl_arms]))
    aft = float(np.mean([r["aft"][1] for r in aicl_arms]))
    base = float(np.mean([r["base"][1] for r in aicl_arms]))
    verdict(9, aicl >= aft, f"mean robust accuracy original {base:.3f}, AFT {aft:.3f}, AICL {aicl:.3f}"
                            + ("" if aicl >= aft else " (ordering FAILED)"))


# ------------------------------------------------------------------ 10


def test_criterion_10_convergence(gauss):
    data, train, _, models = gauss
    icl = models["incontext"]
    cfg = HardeningConfig(mode="AICL", alpha=0.7, max_epochs=4, patience=None, capgd_steps=10,
                          val_size=64, n_probes=32, seed=0)
    art = harden_aicl(icl, train, cfg)
    rep = convergence_report(art.trace)
    acc = harden_aicl(icl, train, HardeningConfig(**{**cfg.to_json(), "acceptance_rule": True}))
    f = np.array([r["F_val"] for r in acc.trace.rows if r["accepted"]])
    monotone = bool(np.all(np.diff(f) <= 0))
    ok = len(art.trace) >= 20 and rep["drift_ratio"] < 0.5 and monotone
    verdict(10, ok, f"{len(art.trace)} iterations, drift median last/first {rep['drift_ratio']:.3f}; "
                    f"acceptance rule: {len(f)} accepted, F_val non-increasing {monotone}")


# ------------------------------------------------------------------ 11


def test_criterion_11_metric_oracles():
    y = np.array([1, 1, 1, 1, 0, 0, 0, 0, 0, 0])
    s = np.array([0.9, 0.8, 0.4, 0.7, 0.3, 0.2, 0.6, 0.1, 0.05, 0.15])
    panel = metric_panel(y, s)
    ref = brute_metrics(y, s)
    errs = {k: abs(getattr(panel, k) - v) for k, v in ref.items()}
    counts_ok = (panel.tp, panel.fn, panel.fp, panel.tn) == (3, 1, 1, 5)
    yt = np.array([1, 0, 1, 0, 1, 0, 0, 1, 1, 0])
    st = np.array([0.8, 0.8, 0.5, 0.5, 0.5, 0.2, 0.2, 0.9, 0.2, 0.9])
    tie_err = abs(metric_panel(yt, st).auroc - brute_auroc(yt, st))
    ok = counts_ok and max(errs.values()) <= 1e-12 and tie_err <= 1e-12
    verdict(11, ok, f"max error {max(errs.values()):.1e} on the 10-sample fixture, tie fixture {tie_err:.1e}")


# ------------------------------------------------------------------ 7 / 12 (CLI pipeline)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Every command once, the multi-worker ones with workers=2."""
    root = str(tmp_path_factory.mktemp("first"))
    runs = []

    def go(command, **cfg):
        c = resolve_config(command)
        c.update(cfg)
        run = run_command(command, c, root)
        runs.append(run)
        return run.dir

    gen = go("gen", n_rows=300, dims=2, separation=2.5, seed=5)
    data, schema = os.path.join(gen, "data.csv"), os.path.join(gen, "schema.json")
    fits = {
        "logistic": go("fit", data=data, schema=schema, model="logistic"),
        "mlp": go("fit", data=data, schema=schema, model="mlp", model_config={"hidden": [16], "epochs": 40}),
        "incontext": go("fit", data=data, schema=schema, model="incontext", context_cap=100,
                        model_config={"epochs": 10}),
    }
    ck = {k: os.path.join(v, "checkpoint.json") for k, v in fits.items()}
    test = os.path.join(fits["incontext"], "test.csv")
    train = os.path.join(fits["incontext"], "train.csv")
    small = dict(moeva_generations=20, moeva_population=16)
    atk = go("attack", checkpoint=ck["incontext"], schema=schema, data=test,
             attacks=["identity", "capgd", "caa"], seeds=[0, 1], workers=2, **small)
    go("defend", checkpoint=ck["incontext"], schema=schema, data=train, eval_data=test, max_epochs=2,
       patience=None, capgd_steps=5, val_size=32, n_probes=8)
    go("transfer", schema=schema, sources={"incontext": [os.path.join(atk, f"campaign-capgd-seed{s}.jsonl")
                                                          for s in (0, 1)]},
       targets=ck)
    go("transfer", schema=schema, target=ck["incontext"], data=test, pool=data, seeds=[0, 1], workers=2)
    sweep = go("sweep", schema=schema, data=test, checkpoints=ck, values=[0.25, 0.5, 1.0],
               seeds=[0, 1, 2], workers=2)
    go("sweep", schema=schema, data=test, pool=train, checkpoints={"incontext": ck["incontext"]},
       axis="context_size", values=[20, 50, 100], workers=2)
    go("report", campaigns=[os.path.join(atk, f) for f in sorted(os.listdir(atk)) if f.endswith(".jsonl")],
       checkpoint=ck["incontext"], schema=schema, data=test)
    return root, runs, sweep


def test_criterion_07_epsilon_sweep_monotone(pipeline):
    _, _, sweep = pipeline
    with open(os.path.join(sweep, "sweep.csv")) as fh:
        rows = list(csv.DictReader(fh))
    curves = {}
    for r in rows:
        curves.setdefault((r["model"], r["seed"]), []).append((float(r["value"]), float(r["robust_accuracy"])))
    bad = []
    for key, pts in curves.items():
        acc = [a for _, a in sorted(pts)]
        if any(b > a for a, b in zip(acc, acc[1:])):
            bad.append((key, acc))
    ok = len(curves) == 9 and not bad
    verdict(7, ok, f"{len(curves)} model/seed curves over eps 0.25, 0.5, 1.0; {len(bad)} increases")


def test_criterion_12_determinism(pipeline, tmp_path):
    root, runs, _ = pipeline
    mismatched, files = [], 0
    for run in runs:
        manifest = os.path.join(run.dir, "manifest.json")
        overrides = {"workers": 1} if "workers" in run.cfg else {}
        cfg = resolve_config(run.command, manifest)
        cfg.update(overrides)
        again = run_command(run.command, cfg, str(tmp_path))
        if again.manifest_id != run.manifest_id:
            mismatched.append((run.command, "manifest id"))
        for name, digest in json.load(open(manifest))["outputs"].items():
            files += 1
            a = open(os.path.join(run.dir, name), "rb").read()
            b = open(os.path.join(again.dir, name), "rb").read()
            if a != b or again.outputs[name] != digest:
                mismatched.append((run.command, name))
    verdict(12, not mismatched, f"{len(runs)} commands, {files} output files compared, "
                                f"{len(mismatched)} mismatches {mismatched[:3]}")

    # the CLI's campaigns join the audit
    for run in runs:
        for name in run.outputs:
            if name.endswith(".jsonl"):
                header, outs = load_campaign(os.path.join(run.dir, name))
                problem = load_schema(run.cfg["schema"])
                CAMPAIGNS.append((outs, problem, header["budget"].eps, header["budget"].norm))


# ------------------------------------------------------------------ 1 (last)


def test_criterion_01_constraint_validity_audit(gauss):
    # a bulk campaign on a larger task so the audit covers thousands of successes
    data = generate(SyntheticTaskSpec(n_rows=3000, dims=3, separation=1.5, seed=21))
    train, test = _split(data, 2)
    p = data.problem
    for model in (fit(LogisticClassifier(p, epochs=200), train),
                  fit(MlpClassifier(p, hidden=(16,), epochs=30, seed=2), train)):
        X, y, idx = _subset(model, test, "all-positive")
        for budget in (AttackBudget(eps=0.5), AttackBudget(eps=1.0),
                       AttackBudget(eps=0.3, norm="Linf")):
            campaign(attack_capgd(model, p, X, y, budget, idx), p, budget)
    n_success, violations = 0, []
    for outs, problem, eps, norm in CAMPAIGNS:
        n, bad = audit(outs, problem, eps, norm)
        n_success += n
        violations += bad
    ok = n_success >= 2000 and not violations
    verdict(1, ok, f"{len(CAMPAIGNS)} campaigns, {n_success} successes audited, {len(violations)} violations")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
