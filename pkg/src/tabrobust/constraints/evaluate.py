"""Exact interpreter and differentiable penalty compiler for constraint ASTs.

Both work on batches of raw-unit rows ``X`` with shape ``(B, D)``.  The
interpreter is deliberately written as a separate tree walk from the penalty
compiler so the two can audit each other.
"""
from __future__ import annotations

from typing import Dict, List, Sequence

import numpy as np

from ..errors import DivisionGuardError
from .ast import And, BinOp, Call, Cmp, Feat, Implies, Neg, Num, Or, negate
from .schema import DIV_GUARD, ConstraintSet, FeatureSchema


def _as_batch(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


# ------------------------------------------------------------- interpreter


def eval_arith(node, X: np.ndarray, index: Dict[str, int]) -> np.ndarray:
    if isinstance(node, Num):
        return np.full(X.shape[0], node.value)
    if isinstance(node, Feat):
        return X[:, index[node.name]]
    if isinstance(node, Neg):
        return -eval_arith(node.arg, X, index)
    if isinstance(node, Call):
        args = [eval_arith(a, X, index) for a in node.args]
        if node.fn == "abs":
            return np.abs(args[0])
        stack = np.stack(args)
        return stack.min(axis=0) if node.fn == "min" else stack.max(axis=0)
    if isinstance(node, BinOp):
        a = eval_arith(node.left, X, index)
        b = eval_arith(node.right, X, index)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if np.any(np.abs(b) < DIV_GUARD):
            raise DivisionGuardError("division guard violated: denominator within 1e-9 of zero")
        return a / b
    raise TypeError(f"not an arithmetic node: {node!r}")


def eval_bool(node, X: np.ndarray, index: Dict[str, int]) -> np.ndarray:
    if isinstance(node, Cmp):
        a = eval_arith(node.left, X, index)
        b = eval_arith(node.right, X, index)
        op = node.op
        if op == "<=":
            return a <= b
        if op == ">=":
            return a >= b
        if op == "<":
            return a < b
        if op == ">":
            return a > b
        if op == "==":
            return a == b
        return a != b
    if isinstance(node, And):
        return np.logical_and.reduce([eval_bool(c, X, index) for c in node.children])
    if isinstance(node, Or):
        return np.logical_or.reduce([eval_bool(c, X, index) for c in node.children])
    if isinstance(node, Implies):
        return ~eval_bool(node.antecedent, X, index) | eval_bool(node.consequent, X, index)
    raise TypeError(f"not a boolean node: {node!r}")


def feature_index(schema: FeatureSchema) -> Dict[str, int]:
    return {name: i for i, name in enumerate(schema.names)}


def eval_constraint(node, x, schema: FeatureSchema):
    """Exact truth value of one constraint at ``x`` (a row or a batch)."""
    X = _as_batch(x)
    out = eval_bool(node, X, feature_index(schema))
    return bool(out[0]) if np.ndim(x) == 1 else out


def satisfied(constraints: ConstraintSet, X, schema: FeatureSchema) -> np.ndarray:
    """Boolean matrix ``(B, m)``: constraint ``i`` holds at row ``b``."""
    X = _as_batch(X)
    index = feature_index(schema)
    if not len(constraints):
        return np.ones((X.shape[0], 0), dtype=bool)
    return np.stack([eval_bool(c, X, index) for c in constraints.constraints], axis=1)


def all_satisfied(constraints: ConstraintSet, X, schema: FeatureSchema) -> np.ndarray:
    return satisfied(constraints, X, schema).all(axis=1)


# ------------------------------------------------------------ penalty compiler


def _dual(node, X, index):
    """Forward-mode value and gradient of an arithmetic node."""
    B, D = X.shape
    if isinstance(node, Num):
        return np.full(B, node.value), np.zeros((B, D))
    if isinstance(node, Feat):
        g = np.zeros((B, D))
        g[:, index[node.name]] = 1.0
        return X[:, index[node.name]].copy(), g
    if isinstance(node, Neg):
        v, g = _dual(node.arg, X, index)
        return -v, -g
    if isinstance(node, Call):
        parts = [_dual(a, X, index) for a in node.args]
        if node.fn == "abs":
            v, g = parts[0]
            return np.abs(v), np.sign(v)[:, None] * g
        vals = np.stack([p[0] for p in parts])
        # argmin/argmax return the first index on ties
        pick = vals.argmin(axis=0) if node.fn == "min" else vals.argmax(axis=0)
        grads = np.stack([p[1] for p in parts])
        rows = np.arange(B)
        return vals[pick, rows], grads[pick, rows]
    if isinstance(node, BinOp):
        a, ga = _dual(node.left, X, index)
        b, gb = _dual(node.right, X, index)
        if node.op == "+":
            return a + b, ga + gb
        if node.op == "-":
            return a - b, ga - gb
        if node.op == "*":
            return a * b, ga * b[:, None] + gb * a[:, None]
        if np.any(np.abs(b) < DIV_GUARD):
            raise DivisionGuardError("division guard violated: denominator within 1e-9 of zero")
        return a / b, (ga * b[:, None] - gb * a[:, None]) / (b * b)[:, None]
    raise TypeError(f"not an arithmetic node: {node!r}")


def _hinge(z, gz):
    active = z > 0
    return np.where(active, z, 0.0), np.where(active[:, None], gz, 0.0)


def _penalty(node, X, index, tau):
    if isinstance(node, Cmp):
        a, ga = _dual(node.left, X, index)
        b, gb = _dual(node.right, X, index)
        op = node.op
        if op == "<=":
            return _hinge(a - b, ga - gb)
        if op == ">=":
            return _hinge(b - a, gb - ga)
        if op == "<":
            return _hinge(a - b + tau, ga - gb)
        if op == ">":
            return _hinge(b - a + tau, gb - ga)
        if op == "==":
            d = a - b
            return np.abs(d), np.sign(d)[:, None] * (ga - gb)
        # "!=" only arises from negation: needs |a - b| >= tau
        d = a - b
        return _hinge(tau - np.abs(d), -np.sign(d)[:, None] * (ga - gb))
    if isinstance(node, And):
        parts = [_penalty(c, X, index, tau) for c in node.children]
        return sum(p[0] for p in parts), sum(p[1] for p in parts)
    if isinstance(node, (Or, Implies)):
        if isinstance(node, Implies):
            kids = (negate(node.antecedent), node.consequent)
        else:
            kids = node.children
        parts = [_penalty(c, X, index, tau) for c in kids]
        vals = np.stack([p[0] for p in parts])
        pick = vals.argmin(axis=0)
        rows = np.arange(X.shape[0])
        return vals[pick, rows], np.stack([p[1] for p in parts])[pick, rows]
    raise TypeError(f"not a boolean node: {node!r}")


class PenaltyProgram:
    """Compiled penalties ``penalty(x, w_i)`` for a constraint set.

    Values are in raw units; gradients are with respect to raw features.
    """

    def __init__(self, constraints: ConstraintSet, schema: FeatureSchema, tau: float = None):
        self.constraints = constraints
        self.schema = schema
        self.tau = constraints.tau if tau is None else float(tau)
        self.index = feature_index(schema)

    def __len__(self):
        return len(self.constraints)

    def values(self, X) -> np.ndarray:
        X = _as_batch(X)
        if not len(self.constraints):
            return np.zeros((X.shape[0], 0))
        return np.stack(
            [_penalty(c, X, self.index, self.tau)[0] for c in self.constraints.constraints], axis=1
        )

    def per_constraint(self, X):
        X = _as_batch(X)
        return [_penalty(c, X, self.index, self.tau) for c in self.constraints.constraints]

    def total(self, X) -> np.ndarray:
        return self.values(X).sum(axis=1)

    def value_and_grad(self, X):
        X = _as_batch(X)
        total = np.zeros(X.shape[0])
        grad = np.zeros_like(X)
        for v, g in self.per_constraint(X):
            total += v
            grad += g
        return total, grad


def compile_penalty(constraints: ConstraintSet, schema: FeatureSchema, tau: float = None) -> PenaltyProgram:
    return PenaltyProgram(constraints, schema, tau)


def kink_distance(constraints: ConstraintSet, X, schema: FeatureSchema, tau: float = None) -> np.ndarray:
    """Smallest |switching quantity| over every max/min/abs/hinge in the program.

    Used by gradient checks to stay away from non-differentiable points.
    """
    X = _as_batch(X)
    index = feature_index(schema)
    tau = constraints.tau if tau is None else tau
    best = np.full(X.shape[0], np.inf)

    def note(q):
        nonlocal best
        best = np.minimum(best, np.abs(q))

    def arith(node):
        if isinstance(node, Call):
            vals = np.stack([arith(a) for a in node.args])
            if node.fn == "abs":
                note(vals[0])
            else:
                srt = np.sort(vals, axis=0)
                if vals.shape[0] > 1:
                    note(srt[1] - srt[0] if node.fn == "min" else srt[-1] - srt[-2])
        elif isinstance(node, Neg):
            arith(node.arg)
        elif isinstance(node, BinOp):
            arith(node.left)
            arith(node.right)
        return eval_arith(node, X, index)

    def boolean(node):
        if isinstance(node, Cmp):
            a, b = arith(node.left), arith(node.right)
            d = a - b
            if node.op == "<":
                note(d + tau)
            elif node.op == ">":
                note(d - tau)
            elif node.op == "!=":
                note(np.abs(d) - tau)
                note(d)
            else:
                note(d)
            return _penalty(node, X, index, tau)[0]
        kids = node.children if isinstance(node, (And, Or)) else (negate(node.antecedent), node.consequent)
        vals = [boolean(c) for c in kids]
        if isinstance(node, (Or, Implies)) and len(vals) > 1:
            srt = np.sort(np.stack(vals), axis=0)
            note(np.where(srt[0] > 0, srt[1] - srt[0], np.inf))
        return sum(vals)

    for c in constraints.constraints:
        boolean(c)
    return best
