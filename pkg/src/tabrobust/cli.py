"""Command-line front end.

Every command takes a JSON config (``--config``) plus ``--set key=value``
overrides, writes its outputs into ``$TABROBUST_OUT/<command>-<manifest id>``
and records a ``manifest.json`` there. Passing that manifest back as
``--config`` reruns the command with the recorded configuration.
"""
from __future__ import annotations

import argparse
import copy
import dataclasses
import datetime as _dt
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List

import numpy as np

from . import __version__
from .attacks import (
    ATTACKS,
    AttackBudget,
    AttackOutcome,
    dumps_campaign,
    load_campaign,
    replay,
    run_attack,
)
from .constraints import dump_schema, load_schema
from .data import ContextState, load_csv, sample_context, validation_split, write_csv
from .errors import CapabilityError, ConfigError, DataError, TabRobustError
from .hardening import HardeningConfig, convergence_report, harden_aft, harden_aicl
from .metrics import (
    CONVENTIONS,
    attacked_subset,
    markdown_table,
    mcc,
    mean_spread,
    metric_panel,
    robust_accuracy,
    sweep_report,
    transfer_csv,
    transfer_markdown,
    transfer_matrix,
)
from .models import build_model, dumps_checkpoint, fit, load_checkpoint
from .synthetic import SyntheticTaskSpec, generate

log = logging.getLogger("tabrobust")

OUT_ENV = "TABROBUST_OUT"
DEFAULT_OUT = "tabrobust-runs"

_BUDGET = {
    "eps": 0.5,
    "norm": "L2",
    "capgd_steps": 10,
    "moeva_generations": 100,
    "moeva_population": 64,
    "lambda_penalty": 1.0,
}

DEFAULTS: Dict[str, dict] = {
    "gen": {
        "generator": "two-gaussians-constrained",
        "n_rows": 400,
        "dims": 3,
        "positive_fraction": 0.5,
        "separation": 1.2,
        "seed": 0,
    },
    "fit": {
        "data": None,
        "schema": None,
        "label": "label",
        "test_data": None,
        "test_fraction": 0.3,
        "split_seed": 0,
        "model": "logistic",
        "model_config": {},
        "seed": 0,
        "context_cap": 10_000,
        "context_seeds": 10,
    },
    "attack": {
        "checkpoint": None,
        "schema": None,
        "data": None,
        "label": "label",
        "attacks": ["capgd"],
        "seeds": [0],
        "convention": "correct-positive",
        "max_samples": None,
        "workers": 1,
        **_BUDGET,
    },
    "defend": {
        "checkpoint": None,
        "schema": None,
        "data": None,
        "label": "label",
        "val_data": None,
        "eval_data": None,
        "eval_attack": "capgd",
        **{f.name: f.default for f in dataclasses.fields(HardeningConfig)},
    },
    "transfer": {
        "schema": None,
        "label": "label",
        "sources": {},
        "targets": {},
        "target": None,
        "data": None,
        "pool": None,
        "scenarios": ["exact", "subsample", "distribution"],
        "subsample_fraction": 0.1,
        "attack": "capgd",
        "seeds": [0],
        "convention": "correct-positive",
        "max_samples": None,
        "workers": 1,
        **_BUDGET,
    },
    "sweep": {
        "checkpoints": {},
        "schema": None,
        "data": None,
        "pool": None,
        "label": "label",
        "axis": "epsilon",
        "values": [0.25, 0.5, 1.0],
        "attack": "capgd",
        "seeds": [0],
        "convention": "correct-positive",
        "max_samples": None,
        "workers": 1,
        **_BUDGET,
    },
    "report": {
        "campaigns": [],
        "checkpoint": None,
        "schema": None,
        "data": None,
        "label": "label",
    },
}

SWEEP_AXES = {"epsilon": "eps", "capgd_steps": "capgd_steps",
              "moeva_generations": "moeva_generations", "context_size": None}
SCENARIOS = ("exact", "subsample", "distribution")
EXECUTION_KEYS = ("workers",)
_PATH_KEYS = ("data", "schema", "checkpoint", "test_data", "val_data", "eval_data", "pool", "target")


# ------------------------------------------------------------------ config


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def resolve_config(command: str, path=None, overrides=()) -> dict:
    """Defaults <- config file (or a manifest's config) <- ``key=value`` overrides."""
    cfg = copy.deepcopy(DEFAULTS[command])
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        if "manifest_id" in doc and "config" in doc:
            if doc.get("command") != command:
                raise ConfigError(f"{path} is a manifest for {doc.get('command')!r}, not {command!r}")
            doc = doc["config"]
        for key, value in doc.items():
            if key not in cfg:
                raise ConfigError(f"unknown config key {key!r} for command {command!r}")
            cfg[key] = value
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        head, _, rest = key.partition(".")
        if head not in cfg:
            raise ConfigError(f"unknown config key {head!r} for command {command!r}")
        if rest:
            if not isinstance(cfg[head], dict):
                raise ConfigError(f"config key {head!r} is not a mapping")
            cfg[head] = {**cfg[head], rest: _parse_value(raw)}
        else:
            cfg[head] = _parse_value(raw)
    return cfg


def _require(cfg, *keys):
    for k in keys:
        if cfg.get(k) in (None, "", [], {}):
            raise ConfigError(f"config key {k!r} is required")


def _budget(cfg, **kw) -> AttackBudget:
    fields = {k: cfg[k] for k in _BUDGET}
    fields.update(kw)
    try:
        return AttackBudget(**fields)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _seeds(cfg) -> List[int]:
    seeds = cfg["seeds"]
    if isinstance(seeds, int):
        seeds = list(range(seeds))
    if not seeds:
        raise ConfigError("seeds must be a non-empty list")
    return [int(s) for s in seeds]


# ------------------------------------------------------------------ runs


def _file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _input_files(cfg) -> List[str]:
    files = [cfg[k] for k in _PATH_KEYS if isinstance(cfg.get(k), str)]
    for key in ("targets", "checkpoints"):
        files += list(cfg.get(key, {}).values())
    for paths in cfg.get("sources", {}).values():
        files += [paths] if isinstance(paths, str) else list(paths)
    files += list(cfg.get("campaigns", []))
    return files


class Run:
    """One command invocation: output directory, manifest and file ledger."""

    def __init__(self, command: str, cfg: dict, out_root=None):
        self.command = command
        self.cfg = cfg
        inputs = {}
        for p in _input_files(cfg):
            if not os.path.exists(p):
                raise DataError(f"input file not found: {p}")
            inputs[p] = _file_digest(p)
        # execution-only keys do not change results, so they stay out of the identity
        semantic = {k: v for k, v in cfg.items() if k not in EXECUTION_KEYS}
        ident = json.dumps({"command": command, "config": semantic, "inputs": inputs, "version": __version__},
                           sort_keys=True)
        self.manifest_id = hashlib.sha256(ident.encode()).hexdigest()[:16]
        root = out_root or os.environ.get(OUT_ENV, DEFAULT_OUT)
        self.dir = os.path.join(root, f"{command}-{self.manifest_id}")
        os.makedirs(self.dir, exist_ok=True)
        self.started = _dt.datetime.now(_dt.timezone.utc).isoformat()
        self.outputs: Dict[str, str] = {}
        self.info = {"schema_hash": None, "dataset_fingerprints": {}, "model_ids": [],
                     "seeds": cfg.get("seeds", [cfg.get("seed")]), "norm": cfg.get("norm"),
                     "convention": cfg.get("convention")}
        self.inputs = inputs

    def path(self, name):
        return os.path.join(self.dir, name)

    def write(self, name: str, text: str):
        with open(self.path(name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        self.register(name)

    def write_json(self, name: str, obj):
        self.write(name, json.dumps(obj, sort_keys=True, indent=2, default=_jsonable) + "\n")

    def register(self, name: str):
        self.outputs[name] = _file_digest(self.path(name))

    def note_data(self, label, dataset):
        self.info["dataset_fingerprints"][label] = dataset.fingerprint()
        self.info["schema_hash"] = dataset.problem.schema_hash

    def finish(self):
        manifest = {
            "manifest_id": self.manifest_id,
            "command": self.command,
            "config": self.cfg,
            "software_version": __version__,
            "inputs": self.inputs,
            "outputs": dict(sorted(self.outputs.items())),
            **self.info,
            "timestamps": {"started": self.started,
                           "finished": _dt.datetime.now(_dt.timezone.utc).isoformat()},
        }
        with open(self.path("manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, sort_keys=True, indent=2, default=_jsonable)
            fh.write("\n")
        return manifest


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _parallel_map(fn, jobs, workers: int):
    """Ordered map; results never depend on ``workers``."""
    if workers is None or workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


# ------------------------------------------------------------------ helpers


def _load_problem(cfg):
    _require(cfg, "schema")
    return load_schema(cfg["schema"])


def _load_data(run, cfg, key, problem, required=True):
    if cfg.get(key) is None:
        if required:
            raise ConfigError(f"config key {key!r} is required")
        return None
    data = load_csv(cfg[key], problem, cfg.get("label", "label"))
    if len(data) == 0:
        raise DataError(f"{cfg[key]}: no valid rows")
    run.note_data(key, data)
    return data


def _load_model(run, path, problem):
    model = load_checkpoint(path, problem)
    run.info["model_ids"].append(model.model_id)
    return model


def _subset(model, data, cfg):
    if cfg["convention"] not in CONVENTIONS:
        raise ConfigError(f"convention must be one of {CONVENTIONS}")
    pred = model.predict(model.view.scale(data.X))
    idx = attacked_subset(data.y, pred, cfg["convention"], data.positive_class)
    if cfg.get("max_samples"):
        idx = idx[: int(cfg["max_samples"])]
    return idx


def _attack_job(job):
    name, model, problem, X, y, idx, budget = job
    return run_attack(name, model, problem, X[idx], y[idx], budget, indices=idx)


def _campaign_text(run, outcomes, model, attack, budget):
    return dumps_campaign(outcomes, schema_hash=model.problem.schema_hash, model_id=model.model_id,
                          attack=attack, budget=budget, manifest_id=run.manifest_id)


def _fmt(mean, half):
    return f"{mean:.4f} ± {half:.4f}"


# ------------------------------------------------------------------ commands


def cmd_gen(cfg, run):
    names = {f.name for f in dataclasses.fields(SyntheticTaskSpec)}
    spec = SyntheticTaskSpec(**{k: v for k, v in cfg.items() if k in names})
    data = generate(spec)
    run.note_data("generated", data)
    write_csv(run.path("data.csv"), data)
    run.register("data.csv")
    run.write("schema.json", dump_schema(data.problem))
    run.write_json("task.json", {**dataclasses.asdict(spec), "schema_hash": data.problem.schema_hash,
                                 "fingerprint": data.fingerprint(), "manifest_id": run.manifest_id,
                                 "class_counts": np.bincount(data.y, minlength=2).tolist()})
    return {"rows": len(data), "dir": run.dir}


def cmd_fit(cfg, run):
    _require(cfg, "data")
    problem = _load_problem(cfg)
    data = _load_data(run, cfg, "data", problem)
    if cfg["test_data"] is not None:
        train, test = data, _load_data(run, cfg, "test_data", problem)
    else:
        if not 0 < cfg["test_fraction"] < 1:
            raise ConfigError("test_fraction must be in (0, 1)")
        perm = np.random.default_rng(cfg["split_seed"]).permutation(len(data))
        n_test = max(1, int(round(cfg["test_fraction"] * len(data))))
        train, test = data.subset(np.sort(perm[n_test:])), data.subset(np.sort(perm[:n_test]))
    model_cfg = {"seed": cfg["seed"], **cfg["model_config"]}
    try:
        model = build_model(cfg["model"], problem, data.n_classes, **model_cfg)
    except TypeError as exc:
        raise ConfigError(f"bad model_config for {cfg['model']!r}: {exc}") from None
    fit(model, train)
    if model.capabilities.has_context and len(train) > cfg["context_cap"]:
        # candidates come from 80% of train and are scored on the held-out 20%
        keep, held = validation_split(len(train), [cfg["split_seed"], 1])
        pool, val = train.subset(keep), train.subset(held)
        Zv = model.view.scale(val.X)

        def selector(ctx):
            return mcc(val.y, model.with_context(ctx).predict(Zv), val.positive_class)

        model = model.with_context(sample_context(pool, cfg["context_cap"], range(cfg["context_seeds"]),
                                                  selector=selector))
    model_id = f"{cfg['model']}-{run.manifest_id[:12]}"
    model.model_id = model_id
    run.info["model_ids"].append(model_id)
    run.write("checkpoint.json", dumps_checkpoint(model, model_id))
    write_csv(run.path("train.csv"), train)
    run.register("train.csv")
    write_csv(run.path("test.csv"), test)
    run.register("test.csv")
    proba = model.predict_proba(model.view.scale(test.X))[:, test.positive_class]
    panel = metric_panel(test.y, proba, test.positive_class)
    run.write_json("metrics.json", {"manifest_id": run.manifest_id, "model_id": model_id,
                                    "test": panel.to_json()})
    return {"model_id": model_id, "accuracy": panel.accuracy}


def cmd_attack(cfg, run):
    _require(cfg, "checkpoint", "data", "attacks")
    problem = _load_problem(cfg)
    model = _load_model(run, cfg["checkpoint"], problem)
    data = _load_data(run, cfg, "data", problem)
    idx = _subset(model, data, cfg)
    if not len(idx):
        raise DataError("attacked subset is empty; nothing to attack")
    seeds = _seeds(cfg)
    notices, jobs = [], []
    for name in cfg["attacks"]:
        if name not in ATTACKS:
            raise ConfigError(f"unknown attack {name!r}; choose from {sorted(ATTACKS)}")
        if name == "capgd" and not model.capabilities.has_input_grad:
            notices.append(f"capgd skipped: {model.kind} exposes no input gradient")
            continue
        if name == "caa" and not model.capabilities.has_input_grad:
            notices.append(f"caa on {model.kind} runs the MOEVA stage only")
        for seed in seeds:
            jobs.append((name, seed))
    for n in notices:
        log.warning(n)
    results = _parallel_map(
        _attack_job,
        [(n, model, problem, data.X, data.y, idx, _budget(cfg, seed=s)) for n, s in jobs],
        cfg["workers"],
    )
    rows, per_attack = [], {}
    for (name, seed), outs in zip(jobs, results):
        fname = f"campaign-{name}-seed{seed}.jsonl"
        run.write(fname, _campaign_text(run, outs, model, name, _budget(cfg, seed=seed)))
        ra = robust_accuracy(outs, cfg["convention"])
        rows.append({"attack": name, "seed": seed, "file": fname, **ra.to_json()})
        per_attack.setdefault(name, []).append(ra.value)
    summary = {a: dict(zip(("mean", "half_range"), mean_spread(v))) for a, v in per_attack.items()}
    report = {"manifest_id": run.manifest_id, "model_id": model.model_id, "n_attacked": int(len(idx)),
              "eps": cfg["eps"], "norm": cfg["norm"], "convention": cfg["convention"],
              "runs": rows, "summary": summary, "notices": notices}
    run.write_json("report.json", report)
    md = markdown_table(["attack", "robust accuracy (mean ± half-range)", "seeds"],
                        [[a, _fmt(s["mean"], s["half_range"]), len(per_attack[a])] for a, s in summary.items()])
    md += "".join(f"\n- {n}" for n in notices) + ("\n" if notices else "")
    run.write("report.md", md)
    return summary


def _evaluate(model, data, attack, eps, cfg, seed):
    pred = model.predict(model.view.scale(data.X))
    idx = attacked_subset(data.y, pred, "correct-positive", data.positive_class)
    out = {"clean_accuracy": float(np.mean(pred == data.y)), "n_attacked": int(len(idx))}
    if len(idx):
        budget = AttackBudget(eps=eps, norm=cfg["norm"], capgd_steps=cfg["capgd_steps"], seed=seed)
        name = attack
        if name == "capgd" and not model.capabilities.has_input_grad:
            name = "moeva"
        outs = run_attack(name, model, data.problem, data.X[idx], data.y[idx], budget, indices=idx)
        out["robust_accuracy"] = robust_accuracy(outs).value
    else:
        out["robust_accuracy"] = None
    return out


def cmd_defend(cfg, run):
    _require(cfg, "checkpoint", "data")
    problem = _load_problem(cfg)
    model = _load_model(run, cfg["checkpoint"], problem)
    train = _load_data(run, cfg, "data", problem)
    val = _load_data(run, cfg, "val_data", problem, required=False)
    evald = _load_data(run, cfg, "eval_data", problem, required=False) or train
    hcfg = HardeningConfig(**{f.name: cfg[f.name] for f in dataclasses.fields(HardeningConfig)})
    harden = harden_aicl if hcfg.mode == "AICL" else harden_aft
    before = _evaluate(model, evald, cfg["eval_attack"], hcfg.attack_eps, cfg, hcfg.seed)
    art = harden(model, train, hcfg, val=val)
    hardened = art.model
    hardened.model_id = f"{model.model_id or model.kind}-{hcfg.mode.lower()}-{run.manifest_id[:12]}"
    run.info["model_ids"].append(hardened.model_id)
    after = _evaluate(hardened, evald, cfg["eval_attack"], hcfg.attack_eps, cfg, hcfg.seed)
    run.write("checkpoint.json", dumps_checkpoint(hardened, hardened.model_id))
    run.write("trace.csv", art.trace.to_csv())
    try:
        conv = convergence_report(art.trace)
    except TabRobustError as exc:
        conv = {"unavailable": str(exc)}
    comparison = {"manifest_id": run.manifest_id, "mode": hcfg.mode, "attack_eps": hcfg.attack_eps,
                  "before": before, "after": after, "history": art.history, "convergence": conv}
    run.write_json("comparison.json", comparison)
    fmt = lambda v: "n/a" if v is None else v  # noqa: E731
    run.write("comparison.md", markdown_table(
        ["model", "clean accuracy", f"robust accuracy (eps={hcfg.attack_eps})"],
        [["original", before["clean_accuracy"], fmt(before["robust_accuracy"])],
         [f"{hcfg.mode} hardened", after["clean_accuracy"], fmt(after["robust_accuracy"])]]))
    return {"before": before, "after": after}


def _scenario_context(name, target, pool, seed, fraction):
    ctx = target.context
    n = len(ctx)
    if name == "exact":
        return ContextState(ctx.X.copy(), ctx.y.copy(), {"kind": "exact"})
    if name == "subsample":
        rng = np.random.default_rng([seed, 10])
        size = max(target.n_classes, int(round(fraction * n)))
        idx = np.sort(rng.choice(n, size=min(size, n), replace=False))
        return ContextState(ctx.X[idx], ctx.y[idx], {"kind": "subsample", "seed": seed, "fraction": fraction})
    if pool is None:
        raise ConfigError("the distribution scenario needs a 'pool' dataset")
    taken = {r.tobytes() + bytes([int(c)]) for r, c in zip(np.ascontiguousarray(ctx.X), ctx.y)}
    free = np.array([i for i, (r, c) in enumerate(zip(np.ascontiguousarray(pool.X), pool.y))
                     if r.tobytes() + bytes([int(c)]) not in taken], dtype=int)
    if not len(free):
        raise DataError("distribution scenario: every pool row is already in the target context")
    if len(free) < n:
        log.warning("distribution scenario: pool offers %d unseen rows for a %d-row context", len(free), n)
    rng = np.random.default_rng([seed, 20])
    idx = np.sort(rng.choice(free, size=min(n, len(free)), replace=False))
    return ContextState(pool.X[idx], pool.y[idx], {"kind": "distribution", "seed": seed})


def cmd_transfer(cfg, run):
    problem = _load_problem(cfg)
    campaigns, targets = {}, {}
    if cfg["sources"]:
        if not cfg["targets"]:
            raise ConfigError("config key 'targets' is required with 'sources'")
        for name, paths in sorted(cfg["sources"].items()):
            paths = [paths] if isinstance(paths, str) else paths
            runs = []
            for p in paths:
                header, outs = load_campaign(p)
                runs.append({"schema_hash": header["schema_hash"], "budget": header["budget"], "outcomes": outs})
            campaigns[name] = runs
        for name, path in sorted(cfg["targets"].items()):
            targets[name] = _load_model(run, path, problem)
    elif cfg["target"]:
        _require(cfg, "data")
        target = _load_model(run, cfg["target"], problem)
        if not target.capabilities.has_context or target.context is None:
            raise CapabilityError("context-knowledge scenarios need an in-context target")
        data = _load_data(run, cfg, "data", problem)
        pool = _load_data(run, cfg, "pool", problem, required=False)
        idx = _subset(target, data, cfg)
        seeds = _seeds(cfg)
        jobs = []
        for sc in cfg["scenarios"]:
            if sc not in SCENARIOS:
                raise ConfigError(f"unknown scenario {sc!r}; choose from {SCENARIOS}")
            for seed in seeds:
                source = target.with_context(_scenario_context(sc, target, pool, seed, cfg["subsample_fraction"]))
                source.model_id = f"{target.model_id}-{sc}-seed{seed}"
                jobs.append((sc, seed, source))
        results = _parallel_map(
            _attack_job,
            [(cfg["attack"], src, problem, data.X, data.y, idx, _budget(cfg, seed=s)) for _, s, src in jobs],
            cfg["workers"],
        )
        for (sc, seed, source), outs in zip(jobs, results):
            budget = _budget(cfg, seed=seed)
            run.write(f"campaign-{sc}-seed{seed}.jsonl", _campaign_text(run, outs, source, cfg["attack"], budget))
            campaigns.setdefault(sc, []).append({"schema_hash": problem.schema_hash, "budget": budget,
                                                 "outcomes": outs})
        targets = {"target": target}
    else:
        raise ConfigError("transfer needs either 'sources' + 'targets' or a 'target' for context scenarios")

    matrix = transfer_matrix(campaigns, targets,
                             lambda outs, tgt, budget: replay(outs, tgt, problem, budget))
    run.write("transfer.csv", transfer_csv(matrix))
    run.write("transfer.md", transfer_markdown(matrix))
    run.write_json("transfer.json", {"manifest_id": run.manifest_id, "sources": matrix["sources"],
                                     "targets": matrix["targets"],
                                     "cells": [{"source": s, "target": t, **c}
                                               for (s, t), c in matrix["cells"].items()]})
    return matrix


def _sweep_job(job):
    axis, values, model, problem, data, pool, seed, cfg = job
    key = SWEEP_AXES[axis]
    out, prev = {}, None
    for v in values:
        m = model
        if axis == "context_size":
            ctx = sample_context(pool, cap=int(v), seeds=[seed], rebalance="off")
            m = model.with_context(ctx)
        budget = _budget(cfg, seed=seed, **({key: v} if key else {}))
        idx = _subset(m, data, cfg)
        outs = run_attack(cfg["attack"], m, problem, data.X[idx], data.y[idx], budget, indices=idx) if len(idx) else []
        if axis == "epsilon" and prev is not None:
            # a success at a smaller radius is still admissible at this one
            outs = [p if (p.success and not o.success) else o for o, p in zip(outs, prev)]
        prev = outs
        out[v] = (outs, budget)
    return out


def cmd_sweep(cfg, run):
    _require(cfg, "checkpoints", "data", "values")
    axis = cfg["axis"]
    if axis not in SWEEP_AXES:
        raise ConfigError(f"invalid sweep axis {axis!r}; choose from {sorted(SWEEP_AXES)}")
    problem = _load_problem(cfg)
    data = _load_data(run, cfg, "data", problem)
    pool = _load_data(run, cfg, "pool", problem, required=axis == "context_size")
    values = list(cfg["values"])
    if axis == "epsilon":
        values = sorted(float(v) for v in values)
    models = {name: _load_model(run, path, problem) for name, path in sorted(cfg["checkpoints"].items())}
    if axis == "context_size":
        for name, m in models.items():
            if not m.capabilities.has_context:
                raise CapabilityError(f"context_size sweep needs in-context models; {name} is {m.kind}")
    seeds = _seeds(cfg)
    jobs = [(name, seed) for name in models for seed in seeds]
    results = _parallel_map(
        _sweep_job,
        [(axis, values, models[n], problem, data, pool, s, cfg) for n, s in jobs],
        cfg["workers"],
    )
    table = {v: {} for v in values}
    for (name, seed), res in zip(jobs, results):
        for v, (outs, budget) in res.items():
            if not outs:
                raise DataError(f"{name}: attacked subset empty at {axis}={v}")
            run.write(f"campaign-{name}-seed{seed}-{axis}{v}.jsonl",
                      _campaign_text(run, outs, models[name], cfg["attack"], budget))
            table[v].setdefault(name, {})[seed] = robust_accuracy(outs).value
    rep = sweep_report(table, axis)
    run.write("sweep.csv", rep["csv"])
    run.write("sweep.md", rep["markdown"] + ("\nwarning: single sweep value, flat curve\n"
                                              if rep["flat_warning"] else ""))
    run.write_json("sweep.json", {"manifest_id": run.manifest_id, "axis": axis, "values": values,
                                  "summary": rep["summary"], "flat_warning": rep["flat_warning"]})
    return rep


def cmd_report(cfg, run):
    if not cfg["campaigns"] and not cfg["checkpoint"]:
        raise ConfigError("report needs 'campaigns' and/or 'checkpoint' + 'data'")
    rows, groups = [], {}
    for path in cfg["campaigns"]:
        header, outs = load_campaign(path)
        ra = robust_accuracy(outs)
        b = header["budget"]
        rows.append({"file": os.path.basename(path), "model_id": header["model_id"], "attack": header["attack"],
                     "eps": b.eps, "norm": b.norm, "seed": b.seed, **ra.to_json()})
        groups.setdefault((header["model_id"], header["attack"], b.eps, b.norm), []).append(ra.value)
    summary = [{"model_id": k[0], "attack": k[1], "eps": k[2], "norm": k[3], "n_runs": len(v),
                **dict(zip(("mean", "half_range"), mean_spread(v)))} for k, v in sorted(groups.items())]
    doc = {"manifest_id": run.manifest_id, "campaigns": rows, "summary": summary}
    md = ""
    if summary:
        md += markdown_table(["model", "attack", "eps", "norm", "runs", "robust accuracy"],
                             [[s["model_id"], s["attack"], s["eps"], s["norm"], s["n_runs"],
                               _fmt(s["mean"], s["half_range"])] for s in summary])
    if cfg["checkpoint"]:
        problem = _load_problem(cfg)
        model = _load_model(run, cfg["checkpoint"], problem)
        data = _load_data(run, cfg, "data", problem)
        proba = model.predict_proba(model.view.scale(data.X))[:, data.positive_class]
        panel = metric_panel(data.y, proba, data.positive_class)
        doc["clean"] = panel.to_json()
        md += "\n" + markdown_table(["metric", "value"],
                                    [[k, v] for k, v in panel.to_json().items() if k != "positive_class"])
    run.write_json("report.json", doc)
    run.write("report.md", md)
    return doc


COMMANDS = {
    "gen": cmd_gen,
    "fit": cmd_fit,
    "attack": cmd_attack,
    "defend": cmd_defend,
    "transfer": cmd_transfer,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def run_command(command: str, cfg: dict, out_root=None) -> Run:
    run = Run(command, cfg, out_root)
    COMMANDS[command](cfg, run)
    run.finish()
    return run


def build_parser():
    parser = argparse.ArgumentParser(prog="tabrobust", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file or a previous run's manifest.json")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (dotted keys reach into mappings)")
        p.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args.command, args.config, args.set)
        if args.print_config:
            print(json.dumps(cfg, indent=2, sort_keys=True))
            return 0
        run = run_command(args.command, cfg)
    except TabRobustError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    print(run.dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
