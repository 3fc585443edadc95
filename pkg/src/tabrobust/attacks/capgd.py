"""Constrained adaptive PGD.

Runs in scaled space over a whole batch at once.  Each iteration takes a
normalized gradient step on ``L* = CE - lambda * sum(penalty)``, adds APGD
momentum, projects onto the eps-ball, and repairs the result in raw units.
The step size halves (and the iterate restarts from the best feasible point)
at the APGD checkpoints when too few steps since the previous checkpoint
improved ``L*``.
"""
from __future__ import annotations

import math

import numpy as np

from .base import Arena, AttackBudget, AttackOutcome, check_samples, indices_or_default, project


def checkpoints(n_iter: int):
    """APGD checkpoint iterations: first at ceil(0.22 T), gaps shrinking by 0.03 T, min 0.06 T."""
    points, p, gap = [], 0.0, 0.22
    while True:
        p += gap
        t = int(math.ceil(round(p * n_iter, 9)))  # 0.57 * 100 must give 57, not 58
        if t >= n_iter:
            break
        if not points or t > points[-1]:
            points.append(t)
        gap = max(gap - 0.03, 0.06)
    return points


def _objective(model, arena, Z, X_raw, y, lam):
    """L* and its scaled-space gradient (per row)."""
    ce, g_ce = model.loss_and_grad_input(Z, y)
    pen, g_pen = arena.penalty.value_and_grad(X_raw)
    obj = ce - lam * pen
    grad = g_ce - lam * arena.view.grad_to_scaled(g_pen)
    return obj, grad, pen


def _direction(grad, norm):
    if norm == "Linf":
        return np.sign(grad)
    n = np.sqrt((grad * grad).sum(axis=1, keepdims=True))
    return np.where(n > 0, grad / np.maximum(n, 1e-30), 0.0)


def attack_capgd(model, problem, X, y, budget: AttackBudget, indices=None, arena=None,
                 trace=None):
    """Attack every row of ``X`` (raw units); returns one outcome per row.

    ``trace``, when a list, receives ``(step_sizes, best_objective)`` per iteration.
    """
    model._require("has_input_grad")
    arena = arena or Arena(problem)
    X0, y = check_samples(X, y, problem.schema.n_features)
    idx = indices_or_default(indices, len(X0))
    B = len(X0)
    eps, norm, lam = budget.eps, budget.norm, budget.lambda_penalty
    free = arena.free.astype(float)
    Z0 = arena.view.scale(X0)

    x_raw = arena.realize(Z0, X0)
    x = arena.view.scale(x_raw)
    obj, grad, pen = _objective(model, arena, x, x_raw, y, lam)
    broken = ~np.isfinite(grad).all(axis=1) | ~np.isfinite(obj)

    feasible, dist = arena.feasible(x_raw, X0, eps, norm)
    best_obj = np.where(feasible, obj, -np.inf)
    best_x = x.copy()
    best_raw = x_raw.copy()
    best_pen, best_dist = pen.copy(), dist.copy()

    succ_raw = np.full_like(X0, np.nan)
    succ_dist = np.full(B, np.inf)
    succ_pen = np.zeros(B)
    succ_iter = np.zeros(B, dtype=int)

    def record_success(t, x_raw, x_scaled, feasible, dist, pen):
        pred = model.predict(x_scaled)
        hit = feasible & (pred != y) & ~broken & (dist < succ_dist)
        succ_raw[hit] = x_raw[hit]
        succ_dist[hit] = dist[hit]
        succ_pen[hit] = pen[hit]
        succ_iter[hit] = t

    record_success(0, x_raw, x, feasible, dist, pen)

    eta = np.full(B, 2.0 * eps)
    x_prev = x.copy()
    ckpts = set(checkpoints(budget.capgd_steps))
    last_ckpt = 0
    n_improved = np.zeros(B)
    prev_obj = obj.copy()
    for t in range(budget.capgd_steps):
        grad = np.where(np.isfinite(grad), grad, 0.0) * free
        z = project(x + eta[:, None] * _direction(grad, norm), Z0, eps, norm)
        if t > 0:
            a = budget.momentum
            z = project(x + a * (z - x) + (1 - a) * (x - x_prev), Z0, eps, norm)
        x_prev = x
        x_raw = arena.realize(z, X0)
        x = arena.view.scale(x_raw)
        obj, grad, pen = _objective(model, arena, x, x_raw, y, lam)
        broken |= ~np.isfinite(obj) | ~np.isfinite(grad).all(axis=1)

        feasible, dist = arena.feasible(x_raw, X0, eps, norm)
        n_improved += obj > prev_obj
        prev_obj = obj
        better = feasible & (obj > best_obj) & ~broken
        best_obj = np.where(better, obj, best_obj)
        best_x[better] = x[better]
        best_raw[better] = x_raw[better]
        best_pen[better], best_dist[better] = pen[better], dist[better]
        record_success(t + 1, x_raw, x, feasible, dist, pen)
        if trace is not None:
            trace.append((eta.copy(), best_obj.copy()))

        if t + 1 in ckpts:
            stalled = n_improved < budget.rho * (t + 1 - last_ckpt)
            if stalled.any():
                eta[stalled] *= budget.step_decay
                x = np.where(stalled[:, None], best_x, x)
                x_prev = np.where(stalled[:, None], best_x, x_prev)
                r_obj, r_grad, _ = _objective(model, arena, best_x, best_raw, y, lam)
                grad = np.where(stalled[:, None], r_grad, grad)
                prev_obj = np.where(stalled, r_obj, prev_obj)
            n_improved[:] = 0
            last_ckpt = t + 1

    outcomes = []
    for b in range(B):
        ok = np.isfinite(succ_dist[b]) and not broken[b]
        outcomes.append(
            AttackOutcome(
                index=int(idx[b]),
                x=X0[b].copy(),
                y=int(y[b]),
                success=bool(ok),
                distance=float(succ_dist[b] if ok else best_dist[b]),
                penalty=float(succ_pen[b] if ok else best_pen[b]),
                iterations=int(succ_iter[b] if ok else budget.capgd_steps),
                stage="capgd",
                x_adv=succ_raw[b].copy() if ok else None,
                x_best=best_raw[b].copy(),
            )
        )
    return outcomes
