from __future__ import annotations

import numpy as np

from ..data import ContextState, split_folds
from ..errors import ConfigError, DataError
from .base import Capabilities, Predictor, softmax
from .optim import AdamW


class InContextAttentionClassifier(Predictor):
    """Soft nearest-neighbour attention over a labelled context.

    For a scaled query ``x`` and scaled context rows ``c_i``::

        s_i = -||W x - W c_i||^2 / tau
        a   = softmax(s)
        p_j = (gamma + sum_i a_i [y_i = j]) / (C gamma + 1)

    ``W`` (k x D) and ``tau`` are the weights; the context is data and is
    swapped with :meth:`with_context` without touching the weights.
    """

    kind = "incontext"
    capabilities = Capabilities(
        has_input_grad=True, has_context=True, has_context_grad=True, trainable_weights=True
    )

    def __init__(self, problem, n_classes=2, k=None, gamma=1e-3, tau=None, W=None, epochs=30,
                 lr=0.05, n_split=5, seed=0, context: ContextState = None):
        super().__init__(problem, n_classes)
        D = self.n_features
        self.k = int(k) if k is not None else min(16, D)
        if gamma < 0:
            raise ConfigError("gamma must be >= 0")
        self.gamma = float(gamma)
        self.epochs, self.lr, self.n_split, self.seed = epochs, lr, n_split, seed
        if W is None:
            rng = np.random.default_rng(seed)
            W = np.eye(self.k, D) + 0.01 * rng.normal(size=(self.k, D))
        self.W = np.asarray(W, dtype=float)
        self.log_tau = float(np.log(tau if tau is not None else 0.05))
        self.context = None
        self._cz = None
        self._cy = None
        if context is not None:
            self._bind(context)

    def config(self):
        return {"k": self.k, "gamma": self.gamma, "epochs": self.epochs, "lr": self.lr,
                "n_split": self.n_split, "seed": self.seed}

    @property
    def tau(self):
        return float(np.exp(self.log_tau))

    # -- context handling
    def _bind(self, context: ContextState):
        if len(context) == 0:
            raise DataError("in-context model needs a non-empty context")
        self.context = context
        self._cz = self.view.scale(context.X)
        self._cy = np.asarray(context.y, dtype=int)

    def _copy(self):
        clone = InContextAttentionClassifier.__new__(InContextAttentionClassifier)
        clone.__dict__.update(self.__dict__)
        clone.fit_record = dict(self.fit_record)
        return clone

    def with_context(self, context: ContextState) -> "InContextAttentionClassifier":
        clone = self._copy()
        clone._bind(context)
        return clone

    def with_scaled_context(self, Zc, yc, provenance=None):
        ctx = ContextState(self.view.unscale(Zc), np.asarray(yc, dtype=int),
                           provenance or {"kind": "pseudo"})
        clone = self._copy()
        clone.context = ctx
        clone._cz = np.asarray(Zc, dtype=float)
        clone._cy = ctx.y
        return clone

    # -- forward / backward
    def _attention(self, Z, Cz=None, Cy=None):
        Cz = self._cz if Cz is None else Cz
        Cy = self._cy if Cy is None else Cy
        if Cz is None:
            raise DataError("no context bound to the in-context model")
        Eq = Z @ self.W.T
        Ec = Cz @ self.W.T
        diff_sq = (
            (Eq * Eq).sum(axis=1)[:, None] + (Ec * Ec).sum(axis=1)[None, :] - 2.0 * Eq @ Ec.T
        )
        diff_sq = np.maximum(diff_sq, 0.0)
        S = -diff_sq / self.tau
        A = softmax(S, axis=1)
        onehot = np.eye(self.n_classes)[Cy]
        Q = A @ onehot
        P = (self.gamma + Q) / (self.n_classes * self.gamma + 1.0)
        return S, A, onehot, P

    def predict_proba(self, Z):
        return self._attention(self._check(Z))[3]

    def _score_grads(self, Z, y, Cz=None, Cy=None):
        """Per-row loss and dL/dS (B x n)."""
        y = np.asarray(y, dtype=int)
        S, A, onehot, P = self._attention(Z, Cz, Cy)
        rows = np.arange(len(y))
        p_y = P[rows, y]
        match = onehot[:, y].T  # (B, n): [y_i == y_b]
        q_y = (A * match).sum(axis=1)
        G = -(A * (match - q_y[:, None])) / (p_y * (self.n_classes * self.gamma + 1.0))[:, None]
        return -np.log(p_y), G, S

    def loss_and_grad_input(self, Z, y):
        Z = self._check(Z)
        loss, G, _ = self._score_grads(Z, y)
        M = self.W.T @ self.W
        # dS_bi/dx_b = -2 M (x_b - c_i) / tau
        r = G.sum(axis=1)
        grad = -2.0 / self.tau * ((r[:, None] * Z - G @ self._cz) @ M)
        return loss, grad

    def loss_grad_context(self, Z, y):
        """Gradient of the summed query loss w.r.t. every scaled context row (n x D)."""
        Z = self._check(Z)
        _, G, _ = self._score_grads(Z, y)
        M = self.W.T @ self.W
        s = G.sum(axis=0)
        return 2.0 / self.tau * ((G.T @ Z - s[:, None] * self._cz) @ M)

    def get_params(self):
        return {"W": self.W.copy(), "log_tau": np.array([self.log_tau])}

    def with_params(self, params):
        clone = self._copy()
        clone.W = np.array(params["W"], dtype=float)
        clone.log_tau = float(np.asarray(params["log_tau"]).reshape(-1)[0])
        return clone

    def _param_grads(self, Z, y, Cz, Cy):
        loss, G, S = self._score_grads(Z, y, Cz, Cy)
        n = len(loss)
        G = G / n
        r, s = G.sum(axis=1), G.sum(axis=0)
        Mx = (Z * r[:, None]).T @ Z - Z.T @ G @ Cz - Cz.T @ G.T @ Z + (Cz * s[:, None]).T @ Cz
        dW = -2.0 / self.tau * (self.W @ Mx)
        dlog_tau = -(G * S).sum()
        return float(loss.mean()), {"W": dW, "log_tau": np.array([dlog_tau])}

    def loss_and_grad_params(self, Z, y):
        Z = self._check(Z)
        return self._param_grads(Z, np.asarray(y, dtype=int), self._cz, self._cy)

    def fit(self, Z, y, Z_val=None, y_val=None):
        """Fit ``W`` and ``tau`` on pseudo-context / pseudo-query splits of the train rows.

        The full training set becomes the bound context afterwards.
        """
        Z = self._check(Z)
        y = np.asarray(y, dtype=int)
        if len(np.unique(y)) < 2:
            raise DataError("in-context fit needs at least two classes")
        opt = AdamW(lr=self.lr)
        params = self.get_params()
        model = self
        for epoch in range(self.epochs):
            for fold in split_folds(len(y), self.n_split, [self.seed, epoch]):
                rest = np.setdiff1d(np.arange(len(y)), fold)
                loss, grads = model._param_grads(Z[fold], y[fold], Z[rest], y[rest])
                if not np.isfinite(loss):
                    raise DataError(f"non-finite in-context training loss at epoch {epoch}")
                params = opt.step(params, grads)
                model = model.with_params(params)
        self.W, self.log_tau = model.W, model.log_tau
        self._bind(ContextState(self.view.unscale(Z), y.copy(), {"kind": "full-train"}))
        self.fit_record = {"train_loss": float(np.mean(self.loss(Z, y)))}
        if Z_val is not None:
            self.fit_record["val_loss"] = float(np.mean(self.loss(Z_val, y_val)))
        return self
