"""Identity attack, CAA composition and replay onto other models."""
from __future__ import annotations

from typing import List

import numpy as np

from ..errors import SchemaMismatchError
from .base import Arena, AttackBudget, AttackOutcome, check_samples, indices_or_default
from .capgd import attack_capgd
from .moeva import attack_moeva


def attack_identity(model, problem, X, y, budget: AttackBudget = None, indices=None, arena=None):
    """Use the clean rows as-is: success iff the model already misclassifies them."""
    arena = arena or Arena(problem)
    X0, y = check_samples(X, y, problem.schema.n_features)
    idx = indices_or_default(indices, len(X0))
    pred = model.predict(arena.view.scale(X0))
    pen = arena.penalty.total(X0)
    valid = arena.valid(X0)
    out = []
    for b in range(len(X0)):
        hit = bool(pred[b] != y[b] and valid[b])
        out.append(AttackOutcome(int(idx[b]), X0[b].copy(), int(y[b]), hit, 0.0, float(pen[b]), 0,
                                 "identity", X0[b].copy() if hit else None, X0[b].copy()))
    return out


def attack_caa(model, problem, X, y, budget: AttackBudget, indices=None, arena=None):
    """CAPGD first (when the model has input gradients), then MOEVA on whatever survived."""
    arena = arena or Arena(problem)
    X0, y = check_samples(X, y, problem.schema.n_features)
    idx = indices_or_default(indices, len(X0))
    if not model.capabilities.has_input_grad:
        return attack_moeva(model, problem, X0, y, budget, idx, arena)
    first = attack_capgd(model, problem, X0, y, budget, idx, arena)
    todo = np.array([not o.success for o in first], dtype=bool)
    if not todo.any():
        return first
    init = None
    if budget.warm_start:
        init = np.stack([o.x_best for o, t in zip(first, todo) if t])
    second = attack_moeva(model, problem, X0[todo], y[todo], budget, idx[todo], arena, init=init)
    merged, it = [], iter(second)
    for o, t in zip(first, todo):
        merged.append(next(it) if t else o)
    return merged


ATTACKS = {
    "identity": attack_identity,
    "capgd": attack_capgd,
    "moeva": attack_moeva,
    "caa": attack_caa,
}


def replay(outcomes: List[AttackOutcome], target, problem, budget: AttackBudget,
           schema_hash: str = None, arena=None) -> List[AttackOutcome]:
    """Re-evaluate saved adversarial rows (or the clean row when none) on ``target``.

    Distances, penalties and validity are recomputed here; nothing is trusted
    from the source record.
    """
    if schema_hash is not None and schema_hash != target.problem.schema_hash:
        raise SchemaMismatchError(
            f"campaign schema {schema_hash} != target schema {target.problem.schema_hash}"
        )
    if target.problem.schema_hash != problem.schema_hash:
        raise SchemaMismatchError("target model was built for a different schema")
    if not outcomes:
        return []
    arena = arena or Arena(problem)
    X0 = np.stack([o.x for o in outcomes])
    Xa = np.stack([o.x_adv if o.x_adv is not None else o.x for o in outcomes])
    y = np.array([o.y for o in outcomes], dtype=int)
    pred = target.predict(arena.view.scale(Xa))
    feasible, dist = arena.feasible(Xa, X0, budget.eps, budget.norm)
    pen = arena.penalty.total(Xa)
    out = []
    for b, o in enumerate(outcomes):
        hit = bool(feasible[b] and pred[b] != y[b])
        out.append(AttackOutcome(o.index, X0[b].copy(), int(y[b]), hit, float(dist[b]), float(pen[b]),
                                 o.iterations, o.stage, Xa[b].copy() if hit else None, Xa[b].copy()))
    return out
