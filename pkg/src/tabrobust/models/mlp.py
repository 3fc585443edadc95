from __future__ import annotations

import numpy as np

from ..errors import ConfigError, DataError
from .base import Capabilities, Predictor, softmax
from .optim import AdamW


class MlpClassifier(Predictor):
    """Fully connected network with a softmax head, trained by backprop.

    Parameters are stored as ``W0, b0, W1, b1, ...`` with ``W_l`` of shape
    ``(fan_in, fan_out)``.
    """

    kind = "mlp"
    capabilities = Capabilities(has_input_grad=True, trainable_weights=True)

    def __init__(self, problem, hidden=(64, 64), activation="relu", n_classes=2, epochs=200,
                 lr=1e-2, batch_size=64, l2=1e-4, seed=0, params=None):
        super().__init__(problem, n_classes)
        if activation not in ("relu", "tanh"):
            raise ConfigError(f"activation must be relu or tanh, got {activation!r}")
        self.hidden = tuple(int(h) for h in hidden)
        self.activation = activation
        self.epochs, self.lr, self.batch_size, self.l2, self.seed = epochs, lr, batch_size, l2, seed
        self.params = params if params is not None else self._init_params(np.random.default_rng(seed))

    def config(self):
        return {"hidden": list(self.hidden), "activation": self.activation, "epochs": self.epochs,
                "lr": self.lr, "batch_size": self.batch_size, "l2": self.l2, "seed": self.seed}

    @property
    def n_layers(self):
        return len(self.hidden) + 1

    def _init_params(self, rng):
        sizes = [self.n_features, *self.hidden, self.n_classes]
        params = {}
        for l, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:])):
            scale = np.sqrt(2.0 / fi) if self.activation == "relu" else np.sqrt(1.0 / fi)
            params[f"W{l}"] = rng.normal(0.0, scale, size=(fi, fo))
            params[f"b{l}"] = np.zeros(fo)
        return params

    def _act(self, a):
        return np.maximum(a, 0.0) if self.activation == "relu" else np.tanh(a)

    def _act_grad(self, a, h):
        return (a > 0).astype(float) if self.activation == "relu" else 1.0 - h * h

    def _forward(self, Z):
        pre, post = [], [Z]
        h = Z
        for l in range(self.n_layers):
            a = h @ self.params[f"W{l}"] + self.params[f"b{l}"]
            pre.append(a)
            if l < self.n_layers - 1:
                h = self._act(a)
                post.append(h)
        return pre, post

    def preactivations(self, Z):
        """Hidden pre-activations; used to keep gradient checks off ReLU kinks."""
        return self._forward(self._check(Z))[0][:-1]

    def predict_proba(self, Z):
        pre, _ = self._forward(self._check(Z))
        return softmax(pre[-1], axis=1)

    def _backward(self, Z, y):
        pre, post = self._forward(Z)
        logits = pre[-1]
        P = softmax(logits, axis=1)
        rows = np.arange(len(y))
        shifted = logits - logits.max(axis=1, keepdims=True)
        loss = np.log(np.exp(shifted).sum(axis=1)) - shifted[rows, y]
        delta = P.copy()
        delta[rows, y] -= 1.0
        grads = {}
        for l in reversed(range(self.n_layers)):
            grads[f"W{l}"] = post[l].T @ delta
            grads[f"b{l}"] = delta.sum(axis=0)
            delta = delta @ self.params[f"W{l}"].T
            if l > 0:
                delta = delta * self._act_grad(pre[l - 1], post[l])
        return loss, grads, delta

    def loss_and_grad_input(self, Z, y):
        Z = self._check(Z)
        loss, _, dZ = self._backward(Z, np.asarray(y, dtype=int))
        return loss, dZ

    def get_params(self):
        return {k: v.copy() for k, v in self.params.items()}

    def with_params(self, params):
        clone = MlpClassifier(self.problem, self.hidden, self.activation, self.n_classes, self.epochs,
                              self.lr, self.batch_size, self.l2, self.seed,
                              params={k: np.array(v, dtype=float) for k, v in params.items()})
        clone.fit_record = dict(self.fit_record)
        return clone

    def loss_and_grad_params(self, Z, y):
        Z = self._check(Z)
        loss, grads, _ = self._backward(Z, np.asarray(y, dtype=int))
        n = len(loss)
        return float(loss.mean()), {k: g / n for k, g in grads.items()}

    def fit(self, Z, y, Z_val=None, y_val=None):
        Z = self._check(Z)
        y = np.asarray(y, dtype=int)
        if len(np.unique(y)) < 2:
            raise DataError("MLP fit needs at least two classes in the training data")
        rng = np.random.default_rng(self.seed)
        self.params = self._init_params(rng)
        opt = AdamW(lr=self.lr)
        for epoch in range(self.epochs):
            order = rng.permutation(len(y))
            for start in range(0, len(y), self.batch_size):
                idx = order[start:start + self.batch_size]
                loss, grads = self.loss_and_grad_params(Z[idx], y[idx])
                if not np.isfinite(loss):
                    raise DataError(f"non-finite MLP training loss at epoch {epoch}: {loss}")
                for k in grads:
                    if k.startswith("W"):
                        grads[k] = grads[k] + self.l2 * self.params[k]
                self.params = opt.step(self.params, grads)
        self.fit_record = {"train_loss": float(np.mean(self.loss(Z, y)))}
        if Z_val is not None:
            self.fit_record["val_loss"] = float(np.mean(self.loss(Z_val, y_val)))
        return self
