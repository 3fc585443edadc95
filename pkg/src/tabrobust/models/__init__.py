"""Victim and surrogate classifiers behind one predictor interface."""
from __future__ import annotations

import json
from dataclasses import asdict

import numpy as np

from ..data import ContextState, Dataset
from ..errors import ConfigError, SchemaMismatchError
from .base import Capabilities, Predictor, predict, predict_proba
from .forest import ForestClassifier
from .incontext import InContextAttentionClassifier
from .logistic import LogisticClassifier
from .mlp import MlpClassifier

MODEL_TYPES = {
    "logistic": LogisticClassifier,
    "mlp": MlpClassifier,
    "forest": ForestClassifier,
    "incontext": InContextAttentionClassifier,
}

CHECKPOINT_FORMAT = "tabrobust-checkpoint"
CHECKPOINT_VERSION = 1


def build_model(kind: str, problem, n_classes: int = 2, **config) -> Predictor:
    try:
        cls = MODEL_TYPES[kind]
    except KeyError:
        raise ConfigError(f"unknown model type {kind!r}; choose from {sorted(MODEL_TYPES)}") from None
    if cls is LogisticClassifier:
        return cls(problem, **config)
    return cls(problem, n_classes=n_classes, **config)


def fit(model: Predictor, train: Dataset, val: Dataset = None) -> Predictor:
    """Fit on a raw-unit dataset; in-context models get ``train`` as their context."""
    Z = model.view.scale(train.X)
    Zv = model.view.scale(val.X) if val is not None else None
    yv = val.y if val is not None else None
    model.fit(Z, train.y, Zv, yv)
    if isinstance(model, InContextAttentionClassifier):
        model._bind(ContextState(train.X.copy(), train.y.copy(), {"kind": "full-train"}))
    return model


# ------------------------------------------------------------- checkpoints


def _context_to_json(ctx: ContextState):
    return {"X": ctx.X.tolist(), "y": ctx.y.tolist(), "provenance": ctx.provenance}


def checkpoint_dict(model: Predictor, model_id: str = "") -> dict:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model_id": model_id,
        "kind": model.kind,
        "schema_hash": model.problem.schema_hash,
        "n_classes": model.n_classes,
        "capabilities": asdict(model.capabilities),
        "config": model.config(),
        "fit_record": model.fit_record,
    }
    if isinstance(model, ForestClassifier):
        doc["params"] = {"trees": [t.to_json() for t in model.trees]}
    else:
        doc["params"] = {k: v.tolist() for k, v in sorted(model.get_params().items())}
    if isinstance(model, InContextAttentionClassifier) and model.context is not None:
        doc["context"] = _context_to_json(model.context)
    return doc


def dumps_checkpoint(model: Predictor, model_id: str = "") -> str:
    return json.dumps(checkpoint_dict(model, model_id), sort_keys=True, indent=1) + "\n"


def save_checkpoint(path, model: Predictor, model_id: str = ""):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_checkpoint(model, model_id))


def loads_checkpoint(text: str, problem) -> Predictor:
    doc = json.loads(text)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError("not a tabrobust checkpoint")
    if doc["schema_hash"] != problem.schema_hash:
        raise SchemaMismatchError(
            f"checkpoint schema hash {doc['schema_hash']} does not match schema {problem.schema_hash}"
        )
    kind = doc["kind"]
    model = build_model(kind, problem, doc["n_classes"], **doc["config"])
    params = doc["params"]
    if kind == "forest":
        from .forest import DecisionTree

        model.trees = [DecisionTree.from_json(t, model.n_classes) for t in params["trees"]]
    else:
        model = model.with_params({k: np.array(v, dtype=float) for k, v in params.items()})
    if "context" in doc:
        c = doc["context"]
        model = model.with_context(
            ContextState(np.array(c["X"], dtype=float).reshape(len(c["y"]), -1),
                         np.array(c["y"], dtype=int), c["provenance"])
        )
    model.fit_record = doc.get("fit_record", {})
    model.model_id = doc.get("model_id", "")
    return model


def load_checkpoint(path, problem) -> Predictor:
    with open(path, encoding="utf-8") as fh:
        return loads_checkpoint(fh.read(), problem)


__all__ = [
    "Capabilities",
    "Predictor",
    "LogisticClassifier",
    "MlpClassifier",
    "ForestClassifier",
    "InContextAttentionClassifier",
    "build_model",
    "fit",
    "predict",
    "predict_proba",
    "save_checkpoint",
    "load_checkpoint",
    "loads_checkpoint",
    "dumps_checkpoint",
]
