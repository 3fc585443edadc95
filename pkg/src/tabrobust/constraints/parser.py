"""Recursive-descent parser for the constraint language.

Grammar (``and`` binds tighter than ``or``)::

    constraint := "if" clause "then" clause | clause
    clause     := atom { ("and" | "or") atom }
    atom       := "(" constraint ")" | cmp
    cmp        := expr op expr
    op         := "<=" | ">=" | "<" | ">" | "==" | "="
    expr       := term { ("+" | "-") term }
    term       := factor { ("*" | "/") factor }
    factor     := number | ident | "-" factor | "(" expr ")"
                | ("min" | "max" | "abs") "(" expr { "," expr } ")"

A single ``=`` is accepted as a synonym of ``==``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List

from ..errors import ConstraintTypeError, DslSyntaxError
from .ast import And, BinOp, Call, Cmp, Feat, Implies, Neg, Num, Or

KEYWORDS = {"if", "then", "and", "or"}
FUNCTIONS = {"min", "max", "abs"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|==|!=|<|>|=|\+|-|\*|/|\(|\)|,)
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str  # number | ident | kw | op | eof
    text: str
    line: int
    column: int


def tokenize(text: str) -> List[Token]:
    tokens = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise DslSyntaxError(
                f"unexpected character {text[pos]!r}", line, pos - line_start + 1, text
            )
        kind = m.lastgroup
        value = m.group()
        if kind == "ws":
            for i, ch in enumerate(value):
                if ch == "\n":
                    line += 1
                    line_start = pos + i + 1
        else:
            if kind == "ident" and value in KEYWORDS:
                kind = "kw"
            tokens.append(Token(kind, value, line, pos - line_start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.pos = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def error(self, message, tok=None, cls=DslSyntaxError):
        tok = tok or self.tok
        return cls(message, tok.line, tok.column, self.text)

    def accept(self, text):
        if self.tok.text == text and self.tok.kind in ("op", "kw"):
            self.pos += 1
            return True
        return False

    def expect(self, text):
        if not self.accept(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")

    # -- boolean layer
    def constraint(self):
        if self.accept("if"):
            ante = self.clause()
            self.expect("then")
            cons = self.clause()
            return Implies(ante, cons)
        return self.clause()

    def clause(self):
        disjuncts = [self.conjunction()]
        while self.accept("or"):
            disjuncts.append(self.conjunction())
        return disjuncts[0] if len(disjuncts) == 1 else Or(tuple(disjuncts))

    def conjunction(self):
        conjuncts = [self.atom()]
        while self.accept("and"):
            conjuncts.append(self.atom())
        return conjuncts[0] if len(conjuncts) == 1 else And(tuple(conjuncts))

    def atom(self):
        if self.tok.text == "(" and self.tok.kind == "op":
            # "(" may open either a sub-constraint or an arithmetic group
            start = self.pos
            try:
                self.pos += 1
                inner = self.constraint()
                self.expect(")")
                if self.tok.kind == "op" and self.tok.text not in (")",):
                    raise self.error("arithmetic continues")
                return inner
            except DslSyntaxError:
                self.pos = start
        return self.comparison()

    def comparison(self):
        left_tok = self.tok
        left = self.expr()
        op_tok = self.tok
        if op_tok.kind == "op" and op_tok.text in ("<=", ">=", "<", ">", "==", "="):
            self.pos += 1
            right = self.expr()
            op = "==" if op_tok.text == "=" else op_tok.text
            return Cmp(op, left, right)
        if op_tok.kind == "kw" or op_tok.kind == "eof" or op_tok.text == ")":
            raise self.error(
                "arithmetic expression used where a comparison is required",
                left_tok,
                ConstraintTypeError,
            )
        raise self.error(f"expected comparison operator, found {op_tok.text!r}")

    # -- arithmetic layer
    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in ("+", "-"):
            op = self.tok.text
            self.pos += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.tok.kind == "op" and self.tok.text in ("*", "/"):
            op = self.tok.text
            self.pos += 1
            node = BinOp(op, node, self.factor())
        return node

    def factor(self):
        tok = self.tok
        if tok.kind == "number":
            self.pos += 1
            return Num(float(tok.text))
        if tok.kind == "op" and tok.text == "-":
            self.pos += 1
            if self.tok.kind == "number":
                value = float(self.tok.text)
                self.pos += 1
                return Num(-value)
            return Neg(self.factor())
        if tok.kind == "op" and tok.text == "(":
            self.pos += 1
            node = self.expr()
            self.expect(")")
            return node
        if tok.kind == "ident":
            self.pos += 1
            if tok.text in FUNCTIONS and self.tok.text == "(":
                self.pos += 1
                args = [self.expr()]
                while self.accept(","):
                    args.append(self.expr())
                self.expect(")")
                if tok.text == "abs" and len(args) != 1:
                    raise self.error("abs takes exactly one argument", tok)
                return Call(tok.text, tuple(args))
            return Feat(tok.text)
        if tok.kind == "kw":
            raise self.error(f"keyword {tok.text!r} used where a value is required")
        found = tok.text or "end of input"
        raise self.error(f"unexpected {found!r}")


def parse_constraint(text: str):
    """Parse one constraint string into a boolean AST node."""
    p = _Parser(text)
    node = p.constraint()
    if p.tok.kind != "eof":
        raise p.error(f"unexpected trailing input {p.tok.text!r}")
    return node


def parse_expression(text: str):
    p = _Parser(text)
    node = p.expr()
    if p.tok.kind != "eof":
        raise p.error(f"unexpected trailing input {p.tok.text!r}")
    return node
