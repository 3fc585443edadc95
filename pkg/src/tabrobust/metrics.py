"""Clean-performance panels, robust accuracy, transfer matrices and sweep tables."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .errors import DataError, SchemaMismatchError

log = logging.getLogger(__name__)

CONVENTIONS = ("correct-positive", "all-positive")


@dataclass(frozen=True)
class MetricPanel:
    auroc: Optional[float]
    mcc: float
    f1: float
    accuracy: float
    recall: float
    precision: float
    tp: int
    fp: int
    tn: int
    fn: int
    positive_class: int = 1

    def to_json(self):
        return asdict(self)


def _ratio(num, den):
    return num / den if den else 0.0


def roc_auc(y_true, scores) -> Optional[float]:
    """Trapezoidal area under the ROC curve; tied scores form one ROC step.

    Returns ``None`` when ``y_true`` holds a single class.
    """
    y = np.asarray(y_true).astype(bool)
    s = np.asarray(scores, dtype=float)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last_of_group = np.r_[s[1:] != s[:-1], True]
    tps = np.cumsum(y)[last_of_group]
    fps = np.cumsum(~y)[last_of_group]
    tpr = np.r_[0, tps] / n_pos
    fpr = np.r_[0, fps] / n_neg
    return float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))


def mcc_from_counts(tp, fp, tn, fn) -> float:
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if den == 0:
        return 0.0
    return float((tp * tn - fp * fn) / math.sqrt(den))


def metric_panel(y_true, scores, positive_class: int = 1, threshold: float = 0.5) -> MetricPanel:
    """Binary metrics; ``scores`` are positive-class probabilities, positive iff > threshold."""
    y_true = np.asarray(y_true)
    scores = np.asarray(scores, dtype=float)
    if len(y_true) != len(scores) or len(y_true) == 0:
        raise DataError("y_true and scores must be non-empty and of equal length")
    pos = y_true == positive_class
    pred = scores > threshold
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    tn = int(np.sum(~pred & ~pos))
    fn = int(np.sum(~pred & pos))
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = _ratio(2 * precision * recall, precision + recall)
    return MetricPanel(
        auroc=roc_auc(pos, scores),
        mcc=mcc_from_counts(tp, fp, tn, fn),
        f1=f1,
        accuracy=(tp + tn) / len(y_true),
        recall=recall,
        precision=precision,
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        positive_class=positive_class,
    )


def mcc(y_true, y_pred, positive_class: int = 1) -> float:
    pos = np.asarray(y_true) == positive_class
    pp = np.asarray(y_pred) == positive_class
    return mcc_from_counts(int(np.sum(pp & pos)), int(np.sum(pp & ~pos)),
                           int(np.sum(~pp & ~pos)), int(np.sum(~pp & pos)))


# --------------------------------------------------------- robust accuracy


@dataclass(frozen=True)
class RobustAccuracyRecord:
    value: float
    n_attacked: int
    n_success: int
    convention: str = "correct-positive"

    def to_json(self):
        return asdict(self)


def attacked_subset(y_true, y_pred, convention: str = "correct-positive", positive_class: int = 1):
    """Indices the adversary attacks under the given convention."""
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if convention == "correct-positive":
        return np.where((y_true == positive_class) & (y_pred == positive_class))[0]
    if convention == "all-positive":
        return np.where(y_true == positive_class)[0]
    raise DataError(f"unknown attacked-subset convention {convention!r}")


def robust_accuracy(outcomes, convention: str = "correct-positive") -> RobustAccuracyRecord:
    """Fraction of attacked samples still correctly classified after the attack."""
    if not outcomes:
        raise DataError("robust accuracy of an empty outcome list is undefined")
    n_success = int(sum(bool(o.success) for o in outcomes))
    n = len(outcomes)
    return RobustAccuracyRecord((n - n_success) / n, n, n_success, convention)


def clean_recall(y_true, y_pred, subset, positive_class: int = 1) -> float:
    subset = np.asarray(subset, dtype=int)
    return float(np.mean(np.asarray(y_pred)[subset] == np.asarray(y_true)[subset]))


# ------------------------------------------------------------ aggregation


def mean_spread(values: Sequence[float]):
    """Mean and half-range."""
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float((v.max() - v.min()) / 2.0)


def transfer_matrix(campaigns: Mapping[str, Sequence[dict]], targets: Mapping[str, Sequence],
                    replay_fn) -> dict:
    """Source x target robust-accuracy table.

    ``campaigns[source]`` is a list of per-seed campaigns (dicts with
    ``schema_hash``, ``budget``, ``outcomes``); ``targets[name]`` is the list
    of per-seed target predictors (a single predictor is reused for every
    seed). ``replay_fn(outcomes, target, budget)`` returns replayed outcomes.
    """
    hashes = {c["schema_hash"] for runs in campaigns.values() for c in runs}
    hashes |= {t.problem.schema_hash for ts in targets.values()
               for t in (ts if isinstance(ts, (list, tuple)) else [ts])}
    if len(hashes) > 1:
        raise SchemaMismatchError(f"campaigns and targets span several schemas: {sorted(hashes)}")
    sources = list(campaigns)
    names = list(targets)
    cells = {}
    for s in sources:
        for t in names:
            tgt = targets[t]
            values = []
            for k, camp in enumerate(campaigns[s]):
                model = tgt[k % len(tgt)] if isinstance(tgt, (list, tuple)) else tgt
                replayed = replay_fn(camp["outcomes"], model, camp["budget"])
                values.append(robust_accuracy(replayed).value)
            mean, half = mean_spread(values)
            cells[(s, t)] = {"mean": mean, "half_range": half, "values": values}
    return {"sources": sources, "targets": names, "cells": cells}


def transfer_markdown(matrix: dict) -> str:
    lines = ["| source \\ target | " + " | ".join(matrix["targets"]) + " |",
             "|---|" + "---|" * len(matrix["targets"])]
    for s in matrix["sources"]:
        row = [f"{matrix['cells'][(s, t)]['mean']:.4f} ± {matrix['cells'][(s, t)]['half_range']:.4f}"
               for t in matrix["targets"]]
        lines.append(f"| {s} | " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def transfer_csv(matrix: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["source", "target", "mean", "half_range", "n_seeds"])
    for s in matrix["sources"]:
        for t in matrix["targets"]:
            c = matrix["cells"][(s, t)]
            w.writerow([s, t, repr(c["mean"]), repr(c["half_range"]), len(c["values"])])
    return buf.getvalue()


def sweep_report(results: Mapping, parameter: str) -> dict:
    """Tidy sweep table from ``results[value][model][seed] = robust_accuracy``.

    Returns the tidy rows, a per-(model, value) summary and the CSV text.
    """
    values = list(results)
    if len(set(values)) < 2:
        log.warning("sweep over %r has a single value; the curve is flat", parameter)
    rows = []
    for v in values:
        for model in sorted(results[v]):
            for seed in sorted(results[v][model]):
                rows.append({"parameter": parameter, "value": v, "model": model, "seed": seed,
                             "robust_accuracy": float(results[v][model][seed])})
    summary = {}
    for model in sorted({r["model"] for r in rows}):
        curve = []
        for v in values:
            accs = [r["robust_accuracy"] for r in rows if r["model"] == model and r["value"] == v]
            mean, half = mean_spread(accs)
            curve.append({"value": v, "mean": mean, "half_range": half})
        summary[model] = curve
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["parameter", "value", "model", "seed", "robust_accuracy"])
    for r in rows:
        w.writerow([r["parameter"], r["value"], r["model"], r["seed"], repr(r["robust_accuracy"])])
    md = [f"| model | " + " | ".join(f"{parameter}={v}" for v in values) + " |",
          "|---|" + "---|" * len(values)]
    for model, curve in summary.items():
        md.append(f"| {model} | " + " | ".join(f"{c['mean']:.4f} ± {c['half_range']:.4f}" for c in curve) + " |")
    return {"rows": rows, "summary": summary, "csv": buf.getvalue(), "markdown": "\n".join(md) + "\n",
            "flat_warning": len(set(values)) < 2}


def markdown_table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    out = ["| " + " | ".join(str(h) for h in header) + " |", "|" + "---|" * len(header)]
    for r in rows:
        out.append("| " + " | ".join(f"{c:.4f}" if isinstance(c, float) else str(c) for c in r) + " |")
    return "\n".join(out) + "\n"
