from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from ..attacks import AttackBudget, attack_caa, attack_capgd, attack_identity, attack_moeva
from ..data import ContextState, Dataset, validation_split
from ..errors import ConfigError, TraceTooShortError

INNER_ATTACKS = {
    "capgd": attack_capgd,
    "caa": attack_caa,
    "moeva": attack_moeva,
    "identity": attack_identity,
}


@dataclass(frozen=True)
class HardeningConfig:
    mode: str = "AICL"
    eps: float = 0.3
    attack_eps: float = 0.5
    inner_attack: str = "capgd"
    norm: str = "L2"
    n_split: int = 5
    max_epochs: int = 20
    seed: int = 0
    # inner attack budget
    capgd_steps: int = 10
    moeva_generations: int = 20
    moeva_population: int = 32
    # AFT optimizer (decoupled weight decay)
    lr: float = 1e-6
    weight_decay: float = 0.01
    # AICL step schedule: eta_t = eta0 / (1 + t) ** alpha, scaling the inner radius
    schedule: str = "decay"
    eta0: float = 1.0
    alpha: float = 0.7
    eta_floor: float = 0.05
    acceptance_rule: bool = False
    max_retries: int = 3
    # what a fold keeps when the acceptance rule rejects every retry: "previous" or "clean"
    on_reject: str = "previous"
    # what a row gets when the inner attack fails on it: its clean origin or the attack's best iterate
    on_failure: str = "clean"
    patience: Optional[int] = 3
    val_size: int = 128
    n_probes: int = 64
    probe_h: float = 1e-3

    def __post_init__(self):
        if self.mode not in ("AFT", "AICL"):
            raise ConfigError(f"mode must be AFT or AICL, got {self.mode!r}")
        if self.inner_attack not in INNER_ATTACKS:
            raise ConfigError(f"inner attack must be one of {sorted(INNER_ATTACKS)}")
        if not 0.5 < self.alpha <= 1.0:
            raise ConfigError("alpha must satisfy 0.5 < alpha <= 1")
        if not self.eps > 0:
            raise ConfigError("defense eps must be > 0")
        if self.eps > self.attack_eps:
            raise ConfigError("defense eps must not exceed the evaluation attack eps")
        if self.n_split < 2:
            raise ConfigError("n_split must be >= 2")
        if self.max_epochs < 0:
            raise ConfigError("max_epochs must be >= 0")
        if self.schedule not in ("decay", "constant"):
            raise ConfigError("schedule must be 'decay' or 'constant'")
        if self.on_reject not in ("previous", "clean"):
            raise ConfigError("on_reject must be 'previous' or 'clean'")
        if self.on_failure not in ("clean", "best"):
            raise ConfigError("on_failure must be 'clean' or 'best'")

    def inner_budget(self, eps=None, seed=None) -> AttackBudget:
        return AttackBudget(
            eps=self.eps if eps is None else eps,
            norm=self.norm,
            capgd_steps=self.capgd_steps,
            moeva_generations=self.moeva_generations,
            moeva_population=self.moeva_population,
            seed=self.seed if seed is None else seed,
        )

    def to_json(self):
        return asdict(self)


def eta_schedule(t: int, cfg: HardeningConfig) -> float:
    if cfg.schedule == "constant":
        return cfg.eta0
    return cfg.eta0 / (1.0 + t) ** cfg.alpha


def effective_eps(eta: float, cfg: HardeningConfig) -> float:
    """Inner-attack radius: eta * eps, capped at eps and floored at eta_floor * eps."""
    return max(min(cfg.eps, eta * cfg.eps), cfg.eta_floor * cfg.eps)


TRACE_COLUMNS = ("t", "drift", "F_val", "g_hat", "eta_t", "retries")


@dataclass
class ConvergenceTrace:
    rows: List[dict] = field(default_factory=list)

    def append(self, **row):
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS + ("accepted",))
        for r in self.rows:
            w.writerow([r["t"]] + [repr(float(r[c])) for c in TRACE_COLUMNS[1:-1]] +
                       [r["retries"], int(r.get("accepted", True))])
        return buf.getvalue()


@dataclass
class HardenedArtifact:
    mode: str
    model: object
    context: Optional[ContextState]
    clean_context: Optional[ContextState]
    trace: ConvergenceTrace
    config: HardeningConfig
    history: List[dict] = field(default_factory=list)


def convergence_report(trace: ConvergenceTrace, window: int = 5) -> dict:
    """Trend summary: median of the last ``window`` iterations vs the first ``window``."""
    if len(trace) < 10:
        raise TraceTooShortError(f"need >= 10 outer iterations, trace has {len(trace)}")
    drift = trace.column("drift")
    g_hat = trace.column("g_hat")

    def ratio(v):
        first, last = float(np.median(v[:window])), float(np.median(v[-window:]))
        if first == 0.0:
            return first, last, 0.0 if last == 0.0 else float("inf")
        return first, last, last / first

    d_first, d_last, d_ratio = ratio(drift)
    g_first, g_last, g_ratio = ratio(g_hat)
    return {
        "n_iterations": len(trace),
        "drift_first_median": d_first,
        "drift_last_median": d_last,
        "drift_ratio": d_ratio,
        "g_hat_first_median": g_first,
        "g_hat_last_median": g_last,
        "g_hat_ratio": g_ratio,
        "eta": trace.column("eta_t").tolist(),
        "converging": bool(d_ratio < 0.5),
    }


def split_validation(train: Dataset, val: Optional[Dataset], cfg: HardeningConfig):
    """Use ``val`` if given, else carve a fixed held-out slice out of ``train``."""
    if val is not None:
        slice_ = val if len(val) <= cfg.val_size else val.subset(np.arange(cfg.val_size))
        return train, slice_
    fraction = min(0.5, cfg.val_size / max(len(train), 1))
    keep, held = validation_split(len(train), [cfg.seed, 7], fraction)
    return train.subset(keep), train.subset(held[: cfg.val_size])


def robust_loss(model, problem, val: Dataset, cfg: HardeningConfig, arena=None):
    """Mean cross-entropy on the held-out slice after the inner attack at defense eps.

    Returns the loss and the scaled adversarial points (the inner maximizers).
    """
    attack = INNER_ATTACKS[cfg.inner_attack]
    if attack is attack_capgd and not model.capabilities.has_input_grad:
        attack = attack_moeva
    out = attack(model, problem, val.X, val.y, cfg.inner_budget(seed=cfg.seed + 10_007),
                 arena=arena)
    Xa = np.stack([o.x_best for o in out])
    Za = model.view.scale(Xa)
    return float(np.mean(model.loss(Za, val.y))), Za


def inner_attack(model, problem, X, y, cfg, eps, seed, indices, arena, keep_failed=False):
    """Adversarial rows for X. Unless ``keep_failed``, rows the attack fails on come back clean."""
    attack = INNER_ATTACKS[cfg.inner_attack]
    if attack is attack_capgd and not model.capabilities.has_input_grad:
        attack = attack_moeva
    out = attack(model, problem, X, y, cfg.inner_budget(eps=eps, seed=seed), indices=indices,
                 arena=arena)
    return np.stack([o.x_best if o.success or keep_failed else x for o, x in zip(out, X)])
