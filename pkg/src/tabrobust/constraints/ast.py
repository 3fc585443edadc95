"""Constraint AST nodes and the pretty printer.

Arithmetic nodes: Num, Feat, Neg, BinOp, Call.  Boolean nodes: Cmp, And, Or,
Implies.  Nodes are frozen dataclasses so parsed constraint sets can be shared
between workers without copying.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Tuple, Union

ARITH_OPS = ("+", "-", "*", "/")
FUNCTIONS = ("min", "max", "abs")
# "!=" is never written by users; it only appears after negating "==".
CMP_OPS = ("<=", ">=", "<", ">", "==", "!=")

NEGATED_CMP = {
    "<=": ">",
    ">=": "<",
    "<": ">=",
    ">": "<=",
    "==": "!=",
    "!=": "==",
}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Feat:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Arith"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Arith"
    right: "Arith"


@dataclass(frozen=True)
class Call:
    fn: str
    args: Tuple["Arith", ...]


@dataclass(frozen=True)
class Cmp:
    op: str
    left: "Arith"
    right: "Arith"


@dataclass(frozen=True)
class And:
    children: Tuple["Bool", ...]


@dataclass(frozen=True)
class Or:
    children: Tuple["Bool", ...]


@dataclass(frozen=True)
class Implies:
    antecedent: "Bool"
    consequent: "Bool"


Arith = Union[Num, Feat, Neg, BinOp, Call]
Bool = Union[Cmp, And, Or, Implies]
Node = Union[Arith, Bool]


def is_arith(node) -> bool:
    return isinstance(node, (Num, Feat, Neg, BinOp, Call))


def is_bool(node) -> bool:
    return isinstance(node, (Cmp, And, Or, Implies))


def children(node) -> Tuple:
    if isinstance(node, (Num, Feat)):
        return ()
    if isinstance(node, Neg):
        return (node.arg,)
    if isinstance(node, (BinOp, Cmp)):
        return (node.left, node.right)
    if isinstance(node, Call):
        return node.args
    if isinstance(node, (And, Or)):
        return node.children
    if isinstance(node, Implies):
        return (node.antecedent, node.consequent)
    raise TypeError(f"not a constraint node: {node!r}")


def walk(node) -> Iterator:
    yield node
    for child in children(node):
        yield from walk(child)


def features_of(node) -> set:
    return {n.name for n in walk(node) if isinstance(n, Feat)}


def negate(node: Bool) -> Bool:
    """Push a logical negation down to the comparisons (De Morgan)."""
    if isinstance(node, Cmp):
        return Cmp(NEGATED_CMP[node.op], node.left, node.right)
    if isinstance(node, And):
        return Or(tuple(negate(c) for c in node.children))
    if isinstance(node, Or):
        return And(tuple(negate(c) for c in node.children))
    if isinstance(node, Implies):
        return And((node.antecedent, negate(node.consequent)))
    raise TypeError(f"cannot negate arithmetic node {node!r}")


# ---------------------------------------------------------------- printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}
_ATOM_PREC = 4


def _arith_prec(node) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return 3
    if isinstance(node, Num) and node.value < 0:
        return 3
    return _ATOM_PREC


def _fmt_num(value: float) -> str:
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def format_arith(node) -> str:
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, Feat):
        return node.name
    if isinstance(node, Neg):
        inner = format_arith(node.arg)
        if _arith_prec(node.arg) < _ATOM_PREC:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, Call):
        return f"{node.fn}({', '.join(format_arith(a) for a in node.args)})"
    if isinstance(node, BinOp):
        prec = _PREC[node.op]
        left = format_arith(node.left)
        if _arith_prec(node.left) < prec:
            left = f"({left})"
        right = format_arith(node.right)
        # parser is left-associative: any right child of equal precedence needs parens
        if _arith_prec(node.right) <= prec:
            right = f"({right})"
        return f"{left} {node.op} {right}"
    raise TypeError(f"not an arithmetic node: {node!r}")


def format_constraint(node) -> str:
    """Render a boolean node in the DSL surface syntax.

    The output re-parses to a structurally identical AST.
    """
    if isinstance(node, Cmp):
        return f"{format_arith(node.left)} {node.op} {format_arith(node.right)}"
    if isinstance(node, Implies):
        ante = format_constraint(node.antecedent)
        cons = format_constraint(node.consequent)
        if isinstance(node.antecedent, Implies):
            ante = f"({ante})"
        if isinstance(node.consequent, Implies):
            cons = f"({cons})"
        return f"if {ante} then {cons}"
    if isinstance(node, Or):
        parts = []
        for c in node.children:
            s = format_constraint(c)
            if isinstance(c, (Or, Implies)):
                s = f"({s})"
            parts.append(s)
        return " or ".join(parts)
    if isinstance(node, And):
        parts = []
        for c in node.children:
            s = format_constraint(c)
            if isinstance(c, (And, Or, Implies)):
                s = f"({s})"
            parts.append(s)
        return " and ".join(parts)
    raise TypeError(f"not a boolean node: {node!r}")
