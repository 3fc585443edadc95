"""Adversarial fine-tuning of model weights over rotating pseudo-context folds."""
from __future__ import annotations

import hashlib
import logging

import numpy as np

from ..attacks import Arena
from ..data import ContextState, Dataset, split_folds
from ..errors import CapabilityError, DataError, TabRobustError
from ..models.optim import AdamW
from .common import (
    ConvergenceTrace,
    HardenedArtifact,
    HardeningConfig,
    inner_attack,
    robust_loss,
    split_validation,
)

log = logging.getLogger(__name__)


def _context_hash(model):
    ctx = getattr(model, "context", None)
    if ctx is None:
        return None
    h = hashlib.sha256(np.ascontiguousarray(ctx.X).tobytes())
    h.update(np.ascontiguousarray(ctx.y).tobytes())
    return h.hexdigest()


def harden_aft(model, train: Dataset, cfg: HardeningConfig = None, val: Dataset = None,
               on_fold=None) -> HardenedArtifact:
    """Madry-style fine-tuning: one optimizer step per fold on a 50/50 clean/adversarial batch.

    For in-context models the other folds serve as the (clean) pseudo-context
    while fold ``s`` provides the pseudo-targets. The bound context of the
    returned model is the one it came in with, bit for bit.
    """
    cfg = cfg or HardeningConfig(mode="AFT")
    if not model.capabilities.trainable_weights:
        raise CapabilityError(f"AFT needs trainable gradient weights; {model.kind} has none")
    problem = train.problem
    arena = Arena(problem)
    ctx_hash = _context_hash(model)
    has_ctx = model.capabilities.has_context
    pool, val_slice = split_validation(train, val, cfg)
    n = len(pool)
    Z = model.view.scale(pool.X)
    opt = AdamW(lr=cfg.lr, weight_decay=cfg.weight_decay)
    params = model.get_params()
    current = model
    trace = ConvergenceTrace()
    history = []
    best_params, best_f, stale = params, np.inf, 0
    t = 0
    for epoch in range(cfg.max_epochs):
        folds = split_folds(n, cfg.n_split, [cfg.seed, epoch])
        for s, fold in enumerate(folds):
            rest = np.setdiff1d(np.arange(n), fold)
            worker = current
            if has_ctx:
                worker = current.with_context(ContextState(pool.X[rest], pool.y[rest], {"kind": "pseudo"}))
            X_adv = inner_attack(worker, problem, pool.X[fold], pool.y[fold], cfg, cfg.eps,
                                 cfg.seed + 1000 * epoch + s, fold, arena, keep_failed=True)
            Zb = np.concatenate([Z[fold], worker.view.scale(X_adv)])
            yb = np.concatenate([pool.y[fold], pool.y[fold]])
            loss, grads = worker.loss_and_grad_params(Zb, yb)
            if not np.isfinite(loss):
                raise DataError(f"AFT aborted: non-finite loss at epoch {epoch}, fold {s}")
            params = opt.step(params, grads)
            current = current.with_params(params)
            if _context_hash(current) != ctx_hash:
                raise TabRobustError("AFT guard: context changed during weight fine-tuning")
            trace.append(t=t, drift=0.0, F_val=float(loss), g_hat=0.0, eta_t=cfg.lr, retries=0,
                         epoch=epoch, fold=s)
            if on_fold is not None:
                on_fold(t, current)
            t += 1
        f_val, _ = robust_loss(current, problem, val_slice, cfg, arena)
        history.append({"epoch": epoch, "F_val": f_val})
        if f_val < best_f - 1e-12:
            best_params, best_f, stale = params, f_val, 0
        else:
            stale += 1
            if cfg.patience is not None and stale >= cfg.patience:
                log.info("AFT early stop after epoch %d", epoch)
                break
    final = model.with_params(best_params) if cfg.max_epochs > 0 else model
    ctx = getattr(final, "context", None)
    return HardenedArtifact("AFT", final, ctx, ctx, trace, cfg, history)
