from __future__ import annotations

import numpy as np

from ..errors import DataError
from .base import Capabilities, Predictor, sigmoid
from .optim import AdamW


class LogisticClassifier(Predictor):
    """Binary logistic regression, ``p(1 | x) = sigmoid(w . x + b)``."""

    kind = "logistic"
    capabilities = Capabilities(has_input_grad=True, trainable_weights=True)

    def __init__(self, problem, w=None, b=0.0, l2=1e-4, epochs=500, lr=0.1, seed=0):
        super().__init__(problem, 2)
        D = problem.schema.n_features
        self.w = np.zeros(D) if w is None else np.asarray(w, dtype=float).reshape(D)
        self.b = float(b)
        self.l2, self.epochs, self.lr, self.seed = l2, epochs, lr, seed

    def config(self):
        return {"l2": self.l2, "epochs": self.epochs, "lr": self.lr, "seed": self.seed}

    def predict_proba(self, Z):
        Z = self._check(Z)
        p1 = sigmoid(Z @ self.w + self.b)
        return np.stack([1.0 - p1, p1], axis=1)

    def loss_and_grad_input(self, Z, y):
        Z = self._check(Z)
        y = np.asarray(y, dtype=int)
        z = Z @ self.w + self.b
        p1 = sigmoid(z)
        # -log p_y computed stably from the logit
        loss = np.logaddexp(0.0, np.where(y == 1, -z, z))
        return loss, (p1 - y)[:, None] * self.w[None, :]

    def get_params(self):
        return {"w": self.w.copy(), "b": np.array([self.b])}

    def with_params(self, params):
        clone = LogisticClassifier(self.problem, params["w"], float(params["b"][0]), self.l2,
                                   self.epochs, self.lr, self.seed)
        clone.fit_record = dict(self.fit_record)
        return clone

    def loss_and_grad_params(self, Z, y):
        Z = self._check(Z)
        y = np.asarray(y, dtype=int)
        z = Z @ self.w + self.b
        r = (sigmoid(z) - y) / len(y)
        loss = float(np.mean(np.logaddexp(0.0, np.where(y == 1, -z, z))))
        return loss, {"w": Z.T @ r, "b": np.array([r.sum()])}

    def fit(self, Z, y, Z_val=None, y_val=None):
        Z = self._check(Z)
        y = np.asarray(y, dtype=int)
        if len(np.unique(y)) < 2:
            raise DataError("logistic fit needs both classes in the training data")
        opt = AdamW(lr=self.lr)
        params = {"w": np.zeros(self.n_features), "b": np.zeros(1)}
        model = self.with_params(params)
        for _ in range(self.epochs):
            loss, grads = model.loss_and_grad_params(Z, y)
            if not np.isfinite(loss):
                raise DataError(f"non-finite training loss in logistic fit: {loss}")
            grads["w"] = grads["w"] + self.l2 * params["w"]
            params = opt.step(params, grads)
            model = model.with_params(params)
        self.w, self.b = params["w"], float(params["b"][0])
        self.fit_record = {"train_loss": float(np.mean(self.loss(Z, y)))}
        if Z_val is not None:
            self.fit_record["val_loss"] = float(np.mean(self.loss(Z_val, y_val)))
        return self
