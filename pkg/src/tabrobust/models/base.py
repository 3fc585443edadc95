"""Capability-tagged predictor interface.

Every predictor works on *scaled* feature arrays (``[0, 1]`` per feature, see
:class:`tabrobust.data.ScaledView`); the module-level helpers at the bottom
accept raw units and convert at the boundary.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Dict

import numpy as np

from ..data import ScaledView
from ..errors import ArityError, CapabilityError

EPS_LOG = 1e-300


@dataclass(frozen=True)
class Capabilities:
    has_input_grad: bool = False
    has_context: bool = False
    has_context_grad: bool = False
    trainable_weights: bool = False


class Predictor:
    kind = "base"
    capabilities = Capabilities()

    def __init__(self, problem, n_classes: int = 2):
        self.problem = problem
        self.n_classes = n_classes
        self.view = ScaledView(problem.schema)
        self.fit_record: dict = {}
        self.model_id = ""

    @property
    def n_features(self) -> int:
        return self.problem.schema.n_features

    def _check(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[None, :]
        if Z.ndim != 2 or Z.shape[1] != self.n_features:
            raise ArityError(f"expected {self.n_features} feature columns, got shape {Z.shape}")
        return Z

    def _require(self, flag: str):
        if not getattr(self.capabilities, flag):
            raise CapabilityError(f"{self.kind} model does not support {flag}")

    # -- inference
    def predict_proba(self, Z) -> np.ndarray:
        raise NotImplementedError

    def predict(self, Z) -> np.ndarray:
        return np.argmax(self.predict_proba(Z), axis=1)

    def loss(self, Z, y) -> np.ndarray:
        """Per-row cross-entropy."""
        P = self.predict_proba(Z)
        y = np.asarray(y, dtype=int)
        return -np.log(np.maximum(P[np.arange(len(y)), y], EPS_LOG))

    # -- gradients (capability-gated)
    def loss_and_grad_input(self, Z, y):
        self._require("has_input_grad")
        raise NotImplementedError

    def loss_grad_input(self, Z, y) -> np.ndarray:
        return self.loss_and_grad_input(Z, y)[1]

    def loss_grad_context(self, Z, y) -> np.ndarray:
        self._require("has_context_grad")
        raise NotImplementedError

    # -- parameters
    def get_params(self) -> Dict[str, np.ndarray]:
        return {}

    def with_params(self, params: Dict[str, np.ndarray]) -> "Predictor":
        self._require("trainable_weights")
        raise NotImplementedError

    def loss_and_grad_params(self, Z, y):
        """Mean cross-entropy over the batch and its gradient w.r.t. ``get_params()``."""
        self._require("trainable_weights")
        raise NotImplementedError

    def param_hash(self) -> str:
        h = hashlib.sha256()
        for name, value in sorted(self.get_params().items()):
            h.update(name.encode())
            h.update(np.ascontiguousarray(value, dtype=float).tobytes())
        return h.hexdigest()[:16]

    def config(self) -> dict:
        return {}


def predict_proba(model: Predictor, X) -> np.ndarray:
    """Raw-unit convenience wrapper around ``model.predict_proba``."""
    return model.predict_proba(model.view.scale(model._check(X)))


def predict(model: Predictor, X) -> np.ndarray:
    return np.argmax(predict_proba(model, X), axis=1)


def softmax(S, axis=-1):
    S = S - S.max(axis=axis, keepdims=True)
    E = np.exp(S)
    return E / E.sum(axis=axis, keepdims=True)


def sigmoid(z):
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out
