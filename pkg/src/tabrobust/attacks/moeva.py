"""Multi-objective evolutionary attack.

Per sample, a population evolves under three minimized objectives: the
model's probability of the true class, the perturbation norm, and the summed
constraint penalty.  Survival is non-dominated sorting; inside the last
admitted front, candidates closer to the reference point (0, 0, 0) win.
"""
from __future__ import annotations

import numpy as np

from .base import Arena, AttackBudget, AttackOutcome, check_samples, indices_or_default, project


def dominates(a, b) -> bool:
    a, b = np.asarray(a), np.asarray(b)
    return bool(np.all(a <= b) and np.any(a < b))


def non_dominated_sort(F: np.ndarray):
    """Fronts of row indices, best first (fast non-dominated sort)."""
    n = len(F)
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    n_dominators = dom.sum(axis=0)
    fronts = []
    current = np.where(n_dominators == 0)[0]
    assigned = np.zeros(n, dtype=bool)
    while len(current):
        fronts.append(current)
        assigned[current] = True
        n_dominators = n_dominators - dom[current].sum(axis=0)
        current = np.where((n_dominators == 0) & ~assigned)[0]
    return fronts


def survival(F: np.ndarray, X: np.ndarray, size: int, weights=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Indices of the ``size`` survivors.

    Exact duplicate rows are only admitted after every distinct row, to keep
    the population from collapsing onto one point.
    """
    _, first = np.unique(X, axis=0, return_index=True)
    unique = np.zeros(len(X), dtype=bool)
    unique[first] = True
    ref_dist = np.sqrt(((F * np.asarray(weights)) ** 2).sum(axis=1))
    chosen = []
    for pool in (np.where(unique)[0], np.where(~unique)[0]):
        if len(chosen) >= size or not len(pool):
            continue
        for front in non_dominated_sort(F[pool]):
            members = pool[front]
            room = size - len(chosen)
            if len(members) <= room:
                chosen.extend(members[np.lexsort((members, ref_dist[members]))])
            else:
                order = members[np.lexsort((members, ref_dist[members]))]
                chosen.extend(order[:room])
            if len(chosen) >= size:
                break
    return np.asarray(chosen[:size])


class _Variation:
    def __init__(self, arena: Arena, budget: AttackBudget):
        self.arena = arena
        self.budget = budget
        schema = arena.schema
        self.free_idx = np.where(arena.free)[0]
        self.kinds = np.array(schema.kinds())
        span = arena.view.span
        self.unit = np.where(span > 0, 1.0 / np.where(span > 0, span, 1.0), 0.0)
        self.n_levels = np.array([len(f.levels) for f in schema.features])
        self.p_mut = 1.0 / max(1, len(self.free_idx))

    def mutate(self, Z, rng, scale=1.0):
        Z = Z.copy()
        P = len(Z)
        if not len(self.free_idx):
            return Z
        mask = rng.random((P, len(self.free_idx))) < self.p_mut
        # at least one gene per individual
        forced = rng.integers(0, len(self.free_idx), size=P)
        mask[np.arange(P), forced] = True
        noise = rng.normal(0.0, self.budget.mutation_sigma * self.budget.eps * scale,
                           size=mask.shape)
        steps = rng.choice([-1.0, 1.0], size=mask.shape)
        draws = rng.random(mask.shape)
        for k, j in enumerate(self.free_idx):
            m = mask[:, k]
            kind = self.kinds[j]
            if kind == "continuous":
                Z[m, j] += noise[m, k]
            elif kind == "integer":
                Z[m, j] += steps[m, k] * self.unit[j]
            else:
                L = self.n_levels[j]
                level = np.floor(draws[m, k] * L)
                Z[m, j] = level / max(L - 1, 1)
        return Z

    def crossover(self, A, B, rng):
        swap = rng.random(A.shape) < self.budget.crossover_rate
        return np.where(swap, B, A)


def _evaluate(model, arena, Zc, X0_rows, y_rows, eps, norm):
    raw = arena.realize(Zc, X0_rows)
    Zr = arena.view.scale(raw)
    proba = model.predict_proba(Zr)
    p_true = proba[np.arange(len(y_rows)), y_rows]
    pred = np.argmax(proba, axis=1)
    dist = arena.distance(raw, X0_rows, norm)
    pen = arena.penalty.total(raw)
    feasible, _ = arena.feasible(raw, X0_rows, eps, norm)
    F = np.stack([p_true, dist, pen], axis=1)
    return raw, Zr, F, feasible & (pred != y_rows), feasible


def attack_moeva(model, problem, X, y, budget: AttackBudget, indices=None, arena=None,
                 init=None):
    """Gradient-free attack; ``init`` optionally supplies per-row starting points (raw)."""
    arena = arena or Arena(problem)
    X0, y = check_samples(X, y, problem.schema.n_features)
    idx = indices_or_default(indices, len(X0))
    B, D = X0.shape
    P = budget.moeva_population
    eps, norm = budget.eps, budget.norm
    var = _Variation(arena, budget)
    Z0 = arena.view.scale(X0)
    rngs = [np.random.default_rng([budget.seed, int(i)]) for i in idx]

    pops = []
    for b in range(B):
        start = Z0[b] if init is None else arena.view.scale(init[b])
        pop = np.repeat(start[None, :], P, axis=0)
        if budget.init_jitter > 0 and P > 1:
            pop[1:] = var.mutate(pop[1:], rngs[b], scale=budget.init_jitter / budget.mutation_sigma
                                 if budget.mutation_sigma > 0 else 1.0)
        pops.append(project(pop, np.repeat(Z0[b][None], P, axis=0), eps, norm))

    X0_rep = np.repeat(X0, P, axis=0)
    y_rep = np.repeat(y, P)
    raw, Zr, F, hit, feasible = _evaluate(model, arena, np.concatenate(pops), X0_rep, y_rep, eps, norm)
    pops = list(Zr.reshape(B, P, D))
    raws = list(raw.reshape(B, P, D))
    objs = list(F.reshape(B, P, 3))
    feas = list(feasible.reshape(B, P))

    succ = [None] * B
    succ_dist = np.full(B, np.inf)
    succ_pen = np.zeros(B)
    succ_gen = np.zeros(B, dtype=int)

    def harvest(gen, raws_b, F_b, hit_b, b):
        if hit_b.any():
            cand = np.where(hit_b)[0]
            k = cand[np.lexsort((cand, F_b[cand, 1]))[0]]
            if F_b[k, 1] < succ_dist[b]:
                succ[b] = raws_b[k].copy()
                succ_dist[b] = F_b[k, 1]
                succ_pen[b] = F_b[k, 2]
                succ_gen[b] = gen

    for b, h in enumerate(hit.reshape(B, P)):
        harvest(0, raws[b], objs[b], h, b)

    for gen in range(1, budget.moeva_generations + 1):
        offspring = []
        for b in range(B):
            rng = rngs[b]
            pa = rng.integers(0, P, size=P)
            pb = rng.integers(0, P, size=P)
            child = var.crossover(pops[b][pa], pops[b][pb], rng)
            child = var.mutate(child, rng)
            offspring.append(project(child, np.repeat(Z0[b][None], P, axis=0), eps, norm))
        raw, Zr, F, hit, feasible = _evaluate(model, arena, np.concatenate(offspring), X0_rep, y_rep,
                                              eps, norm)
        raw, Zr, F = raw.reshape(B, P, D), Zr.reshape(B, P, D), F.reshape(B, P, 3)
        hit, feasible = hit.reshape(B, P), feasible.reshape(B, P)
        for b in range(B):
            harvest(gen, raw[b], F[b], hit[b], b)
            allZ = np.concatenate([pops[b], Zr[b]])
            allF = np.concatenate([objs[b], F[b]])
            keep = survival(allF, allZ, P)
            pops[b] = allZ[keep]
            objs[b] = allF[keep]
            raws[b] = np.concatenate([raws[b], raw[b]])[keep]
            feas[b] = np.concatenate([feas[b], feasible[b]])[keep]

    outcomes = []
    for b in range(B):
        ok = succ[b] is not None
        # strongest feasible member: lowest true-class probability
        fb = np.where(feas[b])[0]
        if len(fb):
            k = fb[np.lexsort((fb, objs[b][fb, 0]))[0]]
            x_best, best_d, best_p = raws[b][k].copy(), objs[b][k, 1], objs[b][k, 2]
        else:
            x_best, best_d, best_p = X0[b].copy(), 0.0, float(arena.penalty.total(X0[b:b + 1])[0])
        outcomes.append(
            AttackOutcome(
                index=int(idx[b]),
                x=X0[b].copy(),
                y=int(y[b]),
                success=ok,
                distance=float(succ_dist[b] if ok else best_d),
                penalty=float(succ_pen[b] if ok else best_p),
                iterations=int(succ_gen[b] if ok else budget.moeva_generations),
                stage="moeva",
                x_adv=succ[b] if ok else None,
                x_best=x_best,
            )
        )
    return outcomes
