"""Feature schemas and constraint sets, plus the JSON schema-file loader."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import (
    DefinitionCycleError,
    DslSyntaxError,
    SchemaError,
    UnknownFeatureError,
)
from .ast import BinOp, Call, Cmp, Feat, Neg, Num, format_constraint, features_of, walk
from .parser import parse_constraint

KINDS = ("continuous", "integer", "categorical")
DEFAULT_TAU = 1e-4
DIV_GUARD = 1e-9


@dataclass(frozen=True)
class FeatureDef:
    name: str
    kind: str = "continuous"
    lower: float = 0.0
    upper: float = 1.0
    mutable: bool = True
    levels: Tuple[str, ...] = ()

    def to_json(self) -> dict:
        d = {
            "name": self.name,
            "kind": self.kind,
            "lower": self.lower,
            "upper": self.upper,
            "mutable": self.mutable,
        }
        if self.kind == "categorical":
            d["levels"] = list(self.levels)
        return d


@dataclass(frozen=True)
class FeatureSchema:
    features: Tuple[FeatureDef, ...]

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate feature names: {dup}")
        for f in self.features:
            if f.kind not in KINDS:
                raise SchemaError(f"feature {f.name!r}: unknown kind {f.kind!r}")
            if f.kind == "categorical":
                if not f.levels or len(set(f.levels)) != len(f.levels):
                    raise SchemaError(
                        f"feature {f.name!r}: categorical levels must be non-empty and unique"
                    )
            elif not (f.lower <= f.upper):
                raise SchemaError(f"feature {f.name!r}: lower > upper")

    @property
    def names(self) -> List[str]:
        return [f.name for f in self.features]

    @property
    def n_features(self) -> int:
        return len(self.features)

    def index(self, name: str) -> int:
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise UnknownFeatureError(f"unknown feature {name!r}")

    @property
    def lower(self) -> np.ndarray:
        return np.array([f.lower for f in self.features], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([f.upper for f in self.features], dtype=float)

    @property
    def mutable(self) -> np.ndarray:
        return np.array([f.mutable for f in self.features], dtype=bool)

    def kinds(self) -> List[str]:
        return [f.kind for f in self.features]


def categorical(name, levels, mutable=True) -> FeatureDef:
    """Categoricals are stored as level indices in raw space."""
    levels = tuple(str(v) for v in levels)
    return FeatureDef(name, "categorical", 0.0, float(len(levels) - 1), mutable, levels)


@dataclass(frozen=True)
class Definition:
    target: str
    expr: object
    constraint_index: int


@dataclass(frozen=True)
class ConstraintSet:
    constraints: Tuple[object, ...]
    sources: Tuple[str, ...]
    definitions: Tuple[Definition, ...] = ()
    tau: float = DEFAULT_TAU

    def __len__(self):
        return len(self.constraints)

    @property
    def repair_order(self) -> List[str]:
        return [d.target for d in self.definitions]

    def pretty(self) -> List[str]:
        return [format_constraint(c) for c in self.constraints]


@dataclass(frozen=True)
class Problem:
    """A schema together with its constraints; what attacks and data loaders consume."""

    schema: FeatureSchema
    constraints: ConstraintSet
    text: str = field(default="", compare=False)

    @property
    def schema_hash(self) -> str:
        return schema_hash(self.schema, self.constraints)

    def frozen_mask(self) -> np.ndarray:
        """Features an attacker may never move.

        Immutable features, plus every input of a definition whose target is
        immutable: moving an input would force the repair step to rewrite the
        immutable target.
        """
        frozen = ~self.schema.mutable
        by_target = {d.target: d for d in self.constraints.definitions}
        changed = True
        while changed:
            changed = False
            for tgt, d in by_target.items():
                if frozen[self.schema.index(tgt)]:
                    for name in features_of(d.expr):
                        j = self.schema.index(name)
                        if not frozen[j]:
                            frozen[j] = True
                            changed = True
        return frozen

    def free_mask(self) -> np.ndarray:
        """Coordinates an attack may perturb directly (definition targets excluded)."""
        free = ~self.frozen_mask()
        for d in self.constraints.definitions:
            free[self.schema.index(d.target)] = False
        return free


def schema_hash(schema: FeatureSchema, constraints: ConstraintSet) -> str:
    doc = {
        "features": [f.to_json() for f in schema.features],
        "constraints": constraints.pretty(),
        "tau": constraints.tau,
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ------------------------------------------------------------ interval checks


def _interval(node, box: Dict[str, Tuple[float, float]]):
    """Conservative value range of an arithmetic node over the schema box."""
    if isinstance(node, Num):
        return node.value, node.value
    if isinstance(node, Feat):
        return box[node.name]
    if isinstance(node, Neg):
        lo, hi = _interval(node.arg, box)
        return -hi, -lo
    if isinstance(node, Call):
        ivs = [_interval(a, box) for a in node.args]
        if node.fn == "min":
            return min(i[0] for i in ivs), min(i[1] for i in ivs)
        if node.fn == "max":
            return max(i[0] for i in ivs), max(i[1] for i in ivs)
        lo, hi = ivs[0]
        if lo >= 0:
            return lo, hi
        if hi <= 0:
            return -hi, -lo
        return 0.0, max(-lo, hi)
    if isinstance(node, BinOp):
        a, b = _interval(node.left, box), _interval(node.right, box)
        if node.op == "+":
            return a[0] + b[0], a[1] + b[1]
        if node.op == "-":
            return a[0] - b[1], a[1] - b[0]
        if node.op == "*":
            prods = [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]]
            prods = [0.0 if math.isnan(p) else p for p in prods]
            return min(prods), max(prods)
        if node.op == "/":
            if not (b[0] >= DIV_GUARD or b[1] <= -DIV_GUARD):
                return -math.inf, math.inf
            quots = [a[0] / b[0], a[0] / b[1], a[1] / b[0], a[1] / b[1]]
            if any(math.isnan(q) for q in quots):
                return -math.inf, math.inf
            return min(quots), max(quots)
    raise TypeError(node)


def denominator_guarded(den, box) -> bool:
    lo, hi = _interval(den, box)
    return lo >= DIV_GUARD or hi <= -DIV_GUARD


# ---------------------------------------------------------------- building


def _definition_of(node, index: int) -> Optional[Definition]:
    if not (isinstance(node, Cmp) and node.op == "=="):
        return None
    if isinstance(node.left, Feat) and node.left.name not in features_of(node.right):
        return Definition(node.left.name, node.right, index)
    return None


def _topological(defs: Sequence[Definition]) -> List[Definition]:
    by_target = {d.target: d for d in defs}
    order, state = [], {}

    def visit(name, stack):
        if state.get(name) == "done":
            return
        if state.get(name) == "active":
            cycle = stack[stack.index(name):] + [name]
            raise DefinitionCycleError("definition cycle: " + " -> ".join(cycle))
        state[name] = "active"
        for dep in sorted(features_of(by_target[name].expr)):
            if dep in by_target:
                visit(dep, stack + [dep])
        state[name] = "done"
        order.append(by_target[name])

    for d in defs:
        visit(d.target, [d.target])
    return order


def build_constraint_set(
    schema: FeatureSchema, sources: Sequence[str], tau: float = DEFAULT_TAU
) -> ConstraintSet:
    """Parse constraint strings against a schema and derive the repair plan."""
    known = set(schema.names)
    box = {f.name: (f.lower, f.upper) for f in schema.features}
    nodes, defs = [], []
    for i, src in enumerate(sources):
        try:
            node = parse_constraint(src)
        except DslSyntaxError as exc:
            raise type(exc)(
                f"constraint #{i}: {str(exc).split(' at line')[0]}",
                exc.line,
                exc.column,
                src,
            ) from None
        missing = sorted(features_of(node) - known)
        if missing:
            raise UnknownFeatureError(f"constraint #{i} ({src!r}) references unknown features {missing}")
        for sub in walk(node):
            if isinstance(sub, BinOp) and sub.op == "/" and not denominator_guarded(sub.right, box):
                raise SchemaError(
                    f"constraint #{i} ({src!r}): denominator is not bounded away from zero on the feature box"
                )
        nodes.append(node)
        d = _definition_of(node, i)
        if d is not None:
            if any(prev.target == d.target for prev in defs):
                raise SchemaError(f"feature {d.target!r} is defined more than once")
            defs.append(d)
    if not (tau > 0):
        raise SchemaError("tau must be > 0")
    return ConstraintSet(tuple(nodes), tuple(sources), tuple(_topological(defs)), float(tau))


def feature_from_json(obj: dict) -> FeatureDef:
    try:
        name = obj["name"]
        kind = obj.get("kind", "continuous")
    except (KeyError, AttributeError):
        raise SchemaError(f"feature entry missing 'name': {obj!r}") from None
    mutable = bool(obj.get("mutable", True))
    if kind == "categorical":
        levels = obj.get("levels")
        if not levels:
            raise SchemaError(f"categorical feature {name!r} needs non-empty 'levels'")
        return categorical(name, levels, mutable)
    try:
        lower, upper = float(obj["lower"]), float(obj["upper"])
    except KeyError as exc:
        raise SchemaError(f"feature {name!r} missing {exc.args[0]!r}") from None
    return FeatureDef(name, kind, lower, upper, mutable)


def parse_schema(text: str) -> Problem:
    """Parse a JSON schema document into a :class:`Problem`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DslSyntaxError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from None
    if not isinstance(doc, dict) or "features" not in doc:
        raise SchemaError("schema document needs a top-level 'features' array")
    schema = FeatureSchema(tuple(feature_from_json(f) for f in doc["features"]))
    cset = build_constraint_set(schema, doc.get("constraints", []), doc.get("tau", DEFAULT_TAU))
    return Problem(schema, cset, text)


def load_schema(path) -> Problem:
    with open(path, encoding="utf-8") as fh:
        return parse_schema(fh.read())


def dump_schema(problem: Problem) -> str:
    doc = {
        "features": [f.to_json() for f in problem.schema.features],
        "constraints": list(problem.constraints.sources),
        "tau": problem.constraints.tau,
    }
    return json.dumps(doc, indent=2) + "\n"
