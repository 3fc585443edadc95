"""Shared attack machinery: budgets, outcome records and the feasibility check."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from ..constraints import Problem, all_satisfied, compile_penalty, repair
from ..data import ScaledView
from ..errors import ConfigError

NORMS = ("L2", "Linf")
EPS_TOL = 1e-6  # admissible slack on ||delta|| <= eps for reported successes


@dataclass(frozen=True)
class AttackBudget:
    eps: float = 0.5
    norm: str = "L2"
    capgd_steps: int = 10
    moeva_generations: int = 100
    moeva_population: int = 64
    lambda_penalty: float = 1.0
    seed: int = 0
    # CAPGD step schedule
    step_decay: float = 0.5
    rho: float = 0.75
    momentum: float = 0.75
    # MOEVA variation
    init_jitter: float = 0.1
    crossover_rate: float = 0.5
    mutation_sigma: float = 0.1
    # CAA: start MOEVA from the strongest CAPGD iterate instead of x0
    warm_start: bool = False

    def __post_init__(self):
        if not (self.eps > 0):
            raise ConfigError(f"eps must be > 0, got {self.eps}")
        if self.norm not in NORMS:
            raise ConfigError(f"norm must be one of {NORMS}, got {self.norm!r}")
        for name in ("capgd_steps", "moeva_population"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.moeva_generations < 0:
            raise ConfigError("moeva_generations must be >= 0")

    def replace(self, **kw) -> "AttackBudget":
        return AttackBudget(**{**asdict(self), **kw})

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class AttackOutcome:
    index: int
    x: np.ndarray
    y: int
    success: bool
    distance: float
    penalty: float
    iterations: int
    stage: str
    x_adv: Optional[np.ndarray] = None
    # strongest feasible candidate found (valid, within eps); adversarial training uses it
    x_best: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def to_json(self) -> dict:
        return {
            "index": int(self.index),
            "x": [float(v) for v in self.x],
            "x_adv": None if self.x_adv is None else [float(v) for v in self.x_adv],
            "y": int(self.y),
            "stage": self.stage,
            "distance": float(self.distance),
            "penalty": float(self.penalty),
            "iterations": int(self.iterations),
            "success": bool(self.success),
        }

    @classmethod
    def from_json(cls, d) -> "AttackOutcome":
        return cls(
            index=d["index"],
            x=np.array(d["x"], dtype=float),
            y=d["y"],
            success=d["success"],
            distance=d["distance"],
            penalty=d["penalty"],
            iterations=d["iterations"],
            stage=d["stage"],
            x_adv=None if d["x_adv"] is None else np.array(d["x_adv"], dtype=float),
        )


def norm_of(delta: np.ndarray, norm: str) -> np.ndarray:
    delta = np.atleast_2d(delta)
    if norm == "Linf":
        return np.abs(delta).max(axis=1)
    return np.sqrt((delta * delta).sum(axis=1))


def project(Z, Z0, eps, norm):
    """Project onto the eps-ball around Z0, then onto the unit box."""
    delta = Z - Z0
    if norm == "Linf":
        delta = np.clip(delta, -eps, eps)
    else:
        n = norm_of(delta, "L2")
        scale = np.minimum(1.0, eps / np.maximum(n, 1e-30))
        delta = delta * scale[:, None]
    return np.clip(Z0 + delta, 0.0, 1.0)


class Arena:
    """Everything an attack needs about the data space of one problem."""

    def __init__(self, problem: Problem):
        self.problem = problem
        self.schema = problem.schema
        self.view = ScaledView(problem.schema)
        self.penalty = compile_penalty(problem.constraints, problem.schema)
        self.frozen = problem.frozen_mask()
        self.free = problem.free_mask()

    def realize(self, Z, X0_raw):
        """Scaled candidates -> repaired raw rows with frozen coordinates copied from X0."""
        raw = self.view.unscale(Z)
        raw[:, self.frozen] = X0_raw[:, self.frozen]
        return repair(raw, self.problem.constraints, self.schema)

    def distance(self, X_raw, X0_raw, norm):
        return norm_of(self.view.scale(X_raw) - self.view.scale(X0_raw), norm)

    def valid(self, X_raw):
        return all_satisfied(self.problem.constraints, X_raw, self.schema)

    def frozen_intact(self, X_raw, X0_raw):
        return np.all(X_raw[:, self.frozen] == X0_raw[:, self.frozen], axis=1)

    def feasible(self, X_raw, X0_raw, eps, norm):
        """Valid, within eps, frozen coordinates bitwise unchanged; also returns distances."""
        d = self.distance(X_raw, X0_raw, norm)
        ok = (d <= eps + EPS_TOL * 0.1) & self.valid(X_raw) & self.frozen_intact(X_raw, X0_raw)
        return ok, d


def check_samples(X, y, n_features):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=int).reshape(-1)
    if X.shape[1] != n_features or len(X) != len(y):
        raise ConfigError(f"samples must be (B, {n_features}) with B labels")
    return X, y


def indices_or_default(indices, n) -> np.ndarray:
    return np.arange(n) if indices is None else np.asarray(indices, dtype=int)


def robust_accuracy_of(outcomes: List[AttackOutcome]) -> float:
    return 1.0 - float(np.mean([o.success for o in outcomes]))
