"""Adversarial in-context learning: harden the context, never the weights."""
from __future__ import annotations

import logging

import numpy as np

from ..attacks import Arena
from ..data import ContextState, Dataset, split_folds
from ..errors import CapabilityError, TabRobustError
from .common import (
    ConvergenceTrace,
    HardenedArtifact,
    HardeningConfig,
    effective_eps,
    eta_schedule,
    inner_attack,
    robust_loss,
    split_validation,
)

log = logging.getLogger(__name__)


def _probe_coords(n, free, n_probes, seed):
    """Fixed random (row, column) probes over the attackable context coordinates."""
    cols = np.where(free)[0]
    rng = np.random.default_rng([seed, 4242])
    total = n * len(cols)
    pick = rng.choice(total, size=min(n_probes, total), replace=False)
    return np.stack([pick // len(cols), cols[pick % len(cols)]], axis=1)


def _g_hat(model, Zc, yc, Za, y_val, probes, h):
    """Central-difference norm of dF_val/d(context) over the probe coordinates.

    The inner maximizers ``Za`` stay fixed (Danskin): only the context moves.
    """
    g = np.empty(len(probes))
    for k, (i, j) in enumerate(probes):
        up, down = Zc.copy(), Zc.copy()
        up[i, j] += h
        down[i, j] -= h
        f_up = np.mean(model.with_scaled_context(up, yc).loss(Za, y_val))
        f_down = np.mean(model.with_scaled_context(down, yc).loss(Za, y_val))
        g[k] = (f_up - f_down) / (2 * h)
    return float(np.linalg.norm(g))


def harden_aicl(model, train: Dataset, cfg: HardeningConfig = None, val: Dataset = None,
                on_fold=None) -> HardenedArtifact:
    """Replace context rows by constraint-valid adversarial versions of their clean selves.

    Per epoch the context rows are re-split into ``n_split`` folds. For fold
    ``s`` the model sees the adversarial copy of the other folds as context and
    the inner attack perturbs the *clean* rows of fold ``s`` at radius
    ``effective_eps(eta_t)``; the results overwrite fold ``s`` of the
    adversarial copy. Labels never change and the weights are never touched.
    """
    cfg = cfg or HardeningConfig(mode="AICL")
    if not model.capabilities.has_context:
        raise CapabilityError(f"AICL needs an in-context model; {model.kind} has no context")
    problem = train.problem
    arena = Arena(problem)
    theta_hash = model.param_hash()
    pool, val_slice = split_validation(train, val, cfg)
    y = pool.y.copy()
    clean = pool.X.copy()
    adv = clean.copy()
    n = len(y)
    clean_ctx = ContextState(clean.copy(), y.copy(), {"kind": "clean-origin"})
    view = model.view
    probes = _probe_coords(n, arena.free, cfg.n_probes, cfg.seed)

    def bound(X):
        return model.with_context(ContextState(X, y, {"kind": "pseudo"}))

    def f_val(X):
        return robust_loss(bound(X), problem, val_slice, cfg, arena)

    trace = ConvergenceTrace()
    history = []
    best_adv, best_f, stale = adv.copy(), np.inf, 0
    t = 0
    f_current, Za = f_val(adv) if cfg.acceptance_rule else (None, None)
    for epoch in range(cfg.max_epochs):
        folds = split_folds(n, cfg.n_split, [cfg.seed, epoch])
        for s, fold in enumerate(folds):
            rest = np.setdiff1d(np.arange(n), fold)
            pseudo = model.with_context(ContextState(adv[rest], y[rest], {"kind": "pseudo"}))
            eta = eta_schedule(t, cfg)
            retries, accepted = 0, True
            while True:
                eps_eff = effective_eps(eta, cfg)
                new_rows = inner_attack(pseudo, problem, clean[fold], y[fold], cfg, eps_eff,
                                        cfg.seed + 1000 * epoch + s, fold, arena,
                                        keep_failed=cfg.on_failure == "best")
                candidate = adv.copy()
                candidate[fold] = new_rows
                if not cfg.acceptance_rule:
                    break
                f_new, Za_new = f_val(candidate)
                if f_new <= f_current:
                    f_current, Za = f_new, Za_new
                    break
                if retries >= cfg.max_retries:
                    accepted = False
                    candidate = adv.copy()
                    if cfg.on_reject == "clean":
                        candidate[fold] = clean[fold]
                        f_current, Za = f_val(candidate)
                    break
                retries += 1
                eta *= 0.5
            drift = float(np.linalg.norm(view.scale(candidate) - view.scale(adv)))
            adv = candidate
            if model.param_hash() != theta_hash:
                raise TabRobustError("AICL guard: model weights changed during context hardening")
            if not cfg.acceptance_rule:
                f_current, Za = f_val(adv)
            g_hat = _g_hat(model, view.scale(adv), y, Za, val_slice.y, probes, cfg.probe_h)
            trace.append(t=t, drift=drift, F_val=f_current, g_hat=g_hat, eta_t=eta,
                         eps_eff=eps_eff, retries=retries, accepted=accepted, epoch=epoch, fold=s)
            if on_fold is not None:
                on_fold(t, adv)
            t += 1
        history.append({"epoch": epoch, "F_val": f_current})
        if f_current < best_f - 1e-12:
            best_adv, best_f, stale = adv.copy(), f_current, 0
        else:
            stale += 1
            if cfg.patience is not None and stale >= cfg.patience:
                log.info("AICL early stop after epoch %d", epoch)
                break
    final = best_adv if cfg.max_epochs > 0 and cfg.patience is not None else adv
    ctx = ContextState(final, y.copy(), {"kind": "hardened", "run_id": f"aicl-seed{cfg.seed}",
                                         "epochs": len(history)})
    return HardenedArtifact("AICL", model.with_context(ctx), ctx, clean_ctx, trace, cfg, history)
